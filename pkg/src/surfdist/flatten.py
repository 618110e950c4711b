"""Conformal flattening of disk-type meshes onto the unit disk."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import hyperbolic as hyp
from ._planar import PlanarLocator, lumped_areas, signed_areas
from .mesh import TriMesh, check_disk_mesh, vertex_areas

logger = logging.getLogger(__name__)

SOLVER_RTOL = 1e-10


class FlattenError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FlatMap:
    """Disk coordinates of a flattened mesh with its conformal factor.

    ``planar_areas`` are the quadrature weights paired with ``factor``;
    ``factor * planar_areas`` is the surface-area fraction carried by each
    vertex and always sums to one.

    ``frame`` is the Möbius transform accumulated by :func:`recentre`.
    Off-vertex evaluation pulls points back through it to the triangulation
    built at flattening time (``base_coords``), so a pushed-forward density
    is exactly ``hyper o frame^-1``.
    """

    disk_coords: np.ndarray
    factor: np.ndarray
    planar_areas: np.ndarray
    faces: np.ndarray
    boundary: np.ndarray  # bool mask
    boundary_loop: np.ndarray
    source_id: str = ""
    clamped_weights: int = 0
    base_coords: np.ndarray | None = None
    frame: hyp.MobiusTransform = hyp.IDENTITY
    hyper_factor: np.ndarray = field(init=False)

    def __post_init__(self):
        z = np.asarray(self.disk_coords, dtype=np.complex128)
        object.__setattr__(self, "disk_coords", z)
        if self.base_coords is None:
            object.__setattr__(self, "base_coords", z)
        object.__setattr__(self, "hyper_factor", (1.0 - np.abs(z) ** 2) ** 2 * self.factor)

    @property
    def n_vertices(self) -> int:
        return len(self.disk_coords)

    @property
    def mass(self) -> np.ndarray:
        return self.factor * self.planar_areas

    @cached_property
    def locator(self) -> PlanarLocator:
        return PlanarLocator(self.base_coords, self.faces, self.boundary_loop)

    @cached_property
    def _unframe(self) -> hyp.MobiusTransform:
        return hyp.inverse(self.frame)

    def to_base(self, points) -> np.ndarray:
        """Map current-frame disk points to the flattening-time frame."""
        if self.frame == hyp.IDENTITY:
            return np.asarray(points, dtype=np.complex128)
        return hyp.apply(self._unframe, points)

    def from_base(self, points) -> np.ndarray:
        if self.frame == hyp.IDENTITY:
            return np.asarray(points, dtype=np.complex128)
        return hyp.apply(self.frame, points)

    def hyperbolic_measure(self) -> np.ndarray:
        return hyp.hyperbolic_vertex_measure(self.planar_areas, self.disk_coords, self.boundary)

    def hyper_at(self, points, base: bool = False) -> np.ndarray:
        """Piecewise-linear hyperbolic density at arbitrary disk points (0 outside).

        ``base=True`` means the points are already in the base frame.
        """
        q = points if base else self.to_base(points)
        return self.locator.interpolate(self.hyper_factor, q)

    def locate(self, points, clamp: bool = True):
        """(face, barycentric) of current-frame points in the flattened mesh."""
        return self.locator.locate(self.to_base(points), clamp=clamp)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex", "re", "im", "factor", "hyper_factor"])
            for i, (z, f, h) in enumerate(zip(self.disk_coords.tolist(), self.factor.tolist(), self.hyper_factor.tolist())):
                w.writerow([i, "%.17g" % z.real, "%.17g" % z.imag, "%.17g" % f, "%.17g" % h])


def cotangent_weights(mesh: TriMesh) -> tuple[sparse.csr_matrix, int]:
    """Symmetric cotangent edge weights with negative totals clamped to zero.

    Returns the weight matrix and the number of clamped edges.
    """
    v, f = mesh.vertices, mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = f[:, (k + 1) % 3], f[:, (k + 2) % 3], f[:, k]
        u = v[i] - v[o]
        w = v[j] - v[o]
        cot = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
        rows.append(i)
        cols.append(j)
        vals.append(0.5 * cot)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = mesh.n_vertices
    W = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    W = W + W.T
    W.sum_duplicates()
    neg = W.data < 0
    clamped = int(neg.sum()) // 2
    if clamped:
        W.data[neg] = 0.0
        W.eliminate_zeros()
        logger.info("%s: clamped %d negative cotangent weights", mesh.specimen_id, clamped)
    return W, clamped


def _boundary_angles(mesh: TriMesh, loop: np.ndarray) -> np.ndarray:
    p = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return 2 * np.pi * s / seg.sum()


def harmonic_disk_map(mesh: TriMesh) -> tuple[np.ndarray, int]:
    """Cotangent-weighted harmonic map with the boundary on the unit circle.

    Boundary vertices are placed by cumulative arc length starting from the
    smallest boundary vertex index.  Returns complex coordinates and the
    count of clamped weights.
    """
    loops = mesh.boundary_loops
    if len(loops) != 1:
        raise FlattenError(f"expected one boundary loop, found {len(loops)}")
    loop = loops[0]
    start = int(np.argmin(loop))
    loop = np.roll(loop, -start)
    W, clamped = cotangent_weights(mesh)
    n = mesh.n_vertices
    is_b = np.zeros(n, dtype=bool)
    is_b[loop] = True
    interior = np.flatnonzero(~is_b)
    z = np.zeros(n, dtype=np.complex128)
    z[loop] = np.exp(1j * _boundary_angles(mesh, loop))
    if len(interior):
        L = sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W
        L = L.tocsr()
        A = L[interior][:, interior].tocsc()
        B = L[interior][:, loop]
        rhs = -(B @ np.column_stack([z[loop].real, z[loop].imag]))
        try:
            x = spsolve(A, rhs)
        except RuntimeError as exc:
            raise FlattenError(f"linear solve failed: {exc}") from exc
        x = np.asarray(x).reshape(len(interior), 2)
        if not np.all(np.isfinite(x)):
            raise FlattenError("singular harmonic system")
        resid = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if resid > SOLVER_RTOL:
            raise FlattenError(f"solver residual {resid:.2e} exceeds {SOLVER_RTOL:g}")
        z[interior] = x[:, 0] + 1j * x[:, 1]
    return z, clamped


def conformal_factor(mesh: TriMesh, disk_coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalised per-vertex conformal factor and the planar lumped areas.

    ``f_i = (A_i / sum A) / a_i`` with ``A`` surface and ``a`` planar vertex
    areas, so ``sum f_i a_i = 1``.
    """
    a = lumped_areas(disk_coords, mesh.faces)
    if np.any(a <= 0):
        raise FlattenError("zero planar area at a vertex")
    A = vertex_areas(mesh)
    return (A / A.sum()) / a, a


def _mobius_center(z: np.ndarray, mass: np.ndarray, iters: int = 50, tol: float = 1e-12) -> hyp.MobiusTransform:
    """Möbius map moving the mass centroid of ``z`` to the origin (iterated)."""
    total = hyp.IDENTITY
    w = z.copy()
    for _ in range(iters):
        c = complex(mass @ w / mass.sum())
        if abs(c) < tol:
            break
        step = hyp.MobiusTransform(0.0, c)
        w = hyp.apply(step, w)
        total = hyp.compose(step, total)
    return total


def flatten(mesh: TriMesh, recentre: bool = True) -> FlatMap:
    """Conformally flatten a disk-type mesh.

    Parameters
    ----------
    mesh : TriMesh
        Must pass disk-topology validation.
    recentre : bool
        Apply the canonical Möbius normalisation moving the area centroid
        to the origin.

    Raises
    ------
    FlattenError
        Singular system or flipped triangles after the solve.
    """
    check_disk_mesh(mesh)
    z, clamped = harmonic_disk_map(mesh)
    if np.any(signed_areas(z, mesh.faces) <= 0):
        raise FlattenError("flattening produced flipped or degenerate triangles")
    if recentre:
        mass = vertex_areas(mesh)
        m = _mobius_center(z, mass)
        z = hyp.apply(m, z)
        bd = mesh.is_boundary_vertex
        z[bd] /= np.abs(z[bd])
        if np.any(signed_areas(z, mesh.faces) <= 0):
            raise FlattenError("recentring produced flipped triangles")
    f, a = conformal_factor(mesh, z)
    return FlatMap(
        disk_coords=z,
        factor=f,
        planar_areas=a,
        faces=mesh.faces,
        boundary=mesh.is_boundary_vertex,
        boundary_loop=mesh.boundary_loops[0],
        source_id=mesh.specimen_id,
        clamped_weights=clamped,
    )


def recentre(flat: FlatMap, m: hyp.MobiusTransform) -> FlatMap:
    """Push ``flat`` forward by ``m``.

    Coordinates move to ``m(z)``; the factor and the quadrature weights are
    transported with the Jacobian ``|m'(z)|^2`` so vertex masses are kept.
    """
    jac = np.abs(m.derivative(flat.disk_coords)) ** 2
    z = hyp.apply(m, flat.disk_coords)
    bd = flat.boundary
    z[bd] /= np.abs(z[bd])
    return FlatMap(
        disk_coords=z,
        factor=flat.factor / jac,
        planar_areas=flat.planar_areas * jac,
        faces=flat.faces,
        boundary=flat.boundary,
        boundary_loop=flat.boundary_loop,
        source_id=flat.source_id,
        clamped_weights=flat.clamped_weights,
        base_coords=flat.base_coords,
        frame=hyp.compose(m, flat.frame),
    )


def corner_angles_3d(mesh: TriMesh) -> np.ndarray:
    v, f = mesh.vertices, mesh.faces
    out = np.empty(f.shape)
    for k in range(3):
        o, i, j = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        u, w = v[i] - v[o], v[j] - v[o]
        out[:, k] = np.arctan2(np.linalg.norm(np.cross(u, w), axis=1), np.einsum("ij,ij->i", u, w))
    return out


def corner_angles_2d(z: np.ndarray, faces: np.ndarray) -> np.ndarray:
    out = np.empty(faces.shape)
    for k in range(3):
        o, i, j = faces[:, k], faces[:, (k + 1) % 3], faces[:, (k + 2) % 3]
        out[:, k] = np.abs(np.angle((z[j] - z[o]) / (z[i] - z[o])))
    return out


def angle_distortion(mesh: TriMesh, disk_coords: np.ndarray) -> np.ndarray:
    """Per-corner absolute angle error (radians) between surface and disk, shape (F, 3)."""
    return np.abs(corner_angles_3d(mesh) - corner_angles_2d(disk_coords, mesh.faces))
