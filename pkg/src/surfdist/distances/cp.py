"""Continuous Procrustes distance and the correspondence map behind it."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import hyperbolic as hyp
from .._planar import PlanarLocator
from ..flatten import FlatMap, flatten
from ..mesh import TriMesh, vertex_areas
from .deform import align_peak_deformation, area_preserving_correction, lift_to_surface
from .peaks import Peak, detect_peaks
from .procrustes import RigidMotion, rigid_align, rigid_residuals
from .sampling import sample_surface

logger = logging.getLogger(__name__)

UNIT_AREA_TOL = 1e-6


@dataclass(frozen=True)
class CPParams:
    n_samples: int = 256
    n_theta: int = 64
    max_peaks: int = 8
    k_ring: int = 1
    min_prominence: float = 0.05
    sigma: float = 0.3
    match_radius: float = 1.0
    tol: float = 0.05
    max_iter: int = 100
    allow_reflection: bool = False
    bidirectional: bool = True


@dataclass(frozen=True, eq=False)
class CorrespondenceMap:
    """Image of every source vertex on the target surface as (face, barycentric)."""

    source_id: str
    target_id: str
    faces: np.ndarray
    barycentric: np.ndarray
    method: str = "cP"
    residual: float = 0.0
    converged: bool = True
    motion: RigidMotion = field(default_factory=RigidMotion.identity)
    value: float = float("nan")

    def __post_init__(self):
        f = np.asarray(self.faces, dtype=np.int64)
        b = np.asarray(self.barycentric, dtype=np.float64).reshape(-1, 3)
        if len(f) != len(b):
            raise ValueError("faces and barycentric must have equal length")
        if not np.isfinite(self.residual):
            raise ValueError("area-distortion residual must be finite")
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "barycentric", b)

    def __len__(self):
        return len(self.faces)

    def check(self, target: TriMesh) -> "CorrespondenceMap":
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= target.n_faces):
            raise ValueError("correspondence refers to faces outside the target mesh")
        if np.any(self.barycentric < -1e-12) or np.any(np.abs(self.barycentric.sum(1) - 1) > 1e-9):
            raise ValueError("correspondence barycentric coordinates are not normalised")
        return self

    def image_points(self, target: TriMesh) -> np.ndarray:
        self.check(target)
        return np.einsum("nk,nkd->nd", self.barycentric, target.vertices[target.faces[self.faces]])

    @classmethod
    def identity(cls, mesh: TriMesh) -> "CorrespondenceMap":
        """Each vertex sent to itself, expressed on its first incident face."""
        n = mesh.n_vertices
        slot = np.zeros(n, dtype=np.int64)
        # first incident face in index order and the vertex's corner in it
        first = np.full(n, mesh.n_faces, dtype=np.int64)
        for k in range(3):
            np.minimum.at(first, mesh.faces[:, k], np.arange(mesh.n_faces))
        for k in range(3):
            hit = mesh.faces[first, k] == np.arange(n)
            slot[hit] = k
        bary = np.zeros((n, 3))
        bary[np.arange(n), slot] = 1.0
        return cls(mesh.specimen_id, mesh.specimen_id, first, bary, method="identity", value=0.0)

    def header(self) -> dict:
        return {
            "source_id": self.source_id,
            "target_id": self.target_id,
            "method": self.method,
            "residual": self.residual,
            "converged": self.converged,
            "rigid_motion": self.motion.as_list(),
            "value": self.value,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["source_vertex", "target_face", "b0", "b1", "b2"])
            for i, (f, b) in enumerate(zip(self.faces.tolist(), self.barycentric.tolist())):
                w.writerow([i, f] + ["%.17g" % x for x in b])


def read_correspondence(path) -> CorrespondenceMap:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing JSON header line")
        meta = json.loads(first[1:])
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["source_vertex", "target_face", "b0", "b1", "b2"]:
        raise ValueError(f"{path}: unexpected correspondence columns")
    body = [r for r in rows[1:] if r]
    idx = np.array([int(r[0]) for r in body], dtype=np.int64)
    if not np.array_equal(idx, np.arange(len(idx))):
        raise ValueError(f"{path}: source vertices must be listed in order")
    faces = np.array([int(r[1]) for r in body], dtype=np.int64)
    bary = np.array([[float(x) for x in r[2:5]] for r in body]).reshape(-1, 3)
    return CorrespondenceMap(
        meta["source_id"], meta["target_id"], faces, bary,
        method=meta.get("method", "cP"),
        residual=float(meta.get("residual", 0.0)),
        converged=bool(meta.get("converged", True)),
        motion=RigidMotion.from_list(meta["rigid_motion"]),
        value=float(meta.get("value", float("nan"))),
    )


def _peaks_or_centroid(flat: FlatMap, params: CPParams) -> list[Peak]:
    peaks = detect_peaks(flat, params.k_ring, params.min_prominence, params.max_peaks)
    if peaks:
        return peaks
    c = complex(flat.mass @ flat.disk_coords / flat.mass.sum())
    v = int(np.argmin(np.abs(flat.disk_coords - c)))
    logger.info("%s: no density peaks, using the density centroid", flat.source_id)
    return [Peak(v, c, float(flat.hyper_factor[v]), 0.0)]


@dataclass(frozen=True)
class _Candidate:
    value: float
    a: int
    b: int
    k: int


def _candidate_map(pa, pb, theta, locA, locB, a, b, params):
    m = hyp.mobius_family_fixing(pa, pb, theta)
    others_a = np.delete(locA, a)
    others_b = np.delete(locB, b)
    warp = align_peak_deformation(
        hyp.apply(m, others_a), others_b, params.sigma, params.match_radius, anchors=[pb]
    )
    return m, warp


def cp_search(meshA, meshB, flatA, flatB, params: CPParams = CPParams()):
    """Sweep peak pairs and rotations; return the best candidate and its maps."""
    n = min(params.n_samples, meshA.n_vertices)
    samples = sample_surface(flatA, meshA, n)
    X = meshA.vertices[samples.vertices]
    peaksA = _peaks_or_centroid(flatA, params)
    peaksB = _peaks_or_centroid(flatB, params)
    locA = np.array([p.location for p in peaksA])
    locB = np.array([p.location for p in peaksB])
    thetas = 2 * np.pi * np.arange(params.n_theta) / params.n_theta
    best = None
    for a in range(len(peaksA)):
        for b in range(len(peaksB)):
            imgs = np.empty((len(thetas), n), np.complex128)
            for k, th in enumerate(thetas):
                m, warp = _candidate_map(locA[a], locB[b], th, locA, locB, a, b, params)
                imgs[k] = warp(hyp.apply(m, samples.points))
            _, _, P = lift_to_surface(meshB, flatB, imgs.ravel())
            vals = rigid_residuals(X, P.reshape(len(thetas), n, 3), samples.weights, params.allow_reflection)
            k = int(np.argmin(vals))
            cand = _Candidate(float(vals[k]), a, b, k)
            # strict improvement keeps the lexicographically first (a, b, k) on ties
            if best is None or cand.value < best.value:
                best = cand
    m, warp = _candidate_map(locA[best.a], locB[best.b], thetas[best.k], locA, locB, best.a, best.b, params)
    return best, m, warp


def _finish(meshA, meshB, flatB, images, params, method):
    """Correct, lift and align; also return the corrected disk images."""
    bd = np.abs(images) >= 1.0 - 1e-12
    images = images.copy()
    images[bd] /= np.abs(images[bd])
    corr = area_preserving_correction(
        images, meshA.faces, meshA.face_areas, meshB, flatB, boundary=bd, tol=params.tol, max_iter=params.max_iter
    )
    faces, bary, P = lift_to_surface(meshB, flatB, corr.images)
    motion, value = rigid_align(meshA.vertices, P, vertex_areas(meshA), params.allow_reflection)
    cmap = CorrespondenceMap(
        meshA.specimen_id, meshB.specimen_id, faces, bary,
        method=method, residual=corr.residual, converged=corr.converged, motion=motion, value=value,
    )
    return cmap, corr.images


def _inverted(meshA, meshB, flatA, flatB, rev: CorrespondenceMap, rev_images, params) -> CorrespondenceMap:
    """A -> B map inverting a corrected B -> A map piecewise linearly on the disk."""
    loc = PlanarLocator(rev_images, meshB.faces, meshB.boundary_loops[0])
    f, b = loc.locate(flatA.disk_coords, clamp=True)
    zB = np.einsum("nk,nk->n", b, flatB.disk_coords[meshB.faces[f]])
    faces, bary, P = lift_to_surface(meshB, flatB, zB)
    motion, value = rigid_align(meshA.vertices, P, vertex_areas(meshA), params.allow_reflection)
    return CorrespondenceMap(
        meshA.specimen_id, meshB.specimen_id, faces, bary,
        method="cP", residual=rev.residual, converged=rev.converged, motion=motion, value=value,
    )


def cp_distance(
    meshA: TriMesh,
    meshB: TriMesh,
    flatA: FlatMap | None = None,
    flatB: FlatMap | None = None,
    params: CPParams = CPParams(),
) -> tuple[float, RigidMotion, CorrespondenceMap]:
    """Continuous Procrustes distance between ``meshA`` and ``meshB``.

    Searches Möbius transforms that send a density peak of ``A`` to one of
    ``B`` (all peak pairs, ``n_theta`` rotations each) and refines the best
    one with a peak-aligning warp and the area corrector.  The value of a
    map is ``sqrt(min_R sum_i a_i |R x_i - y_i|^2)`` over the vertices of
    its source with vertex-area weights.

    With ``params.bidirectional`` the search is also run from ``B`` to
    ``A`` and the distance is the smaller of the two directional values.
    An area-preserving map and its inverse have the same value, so both
    estimate the same infimum, and the result is exactly symmetric.  When
    the reverse direction wins, the returned map is the piecewise-linear
    inverse of the corrected ``B -> A`` map; its ``value`` field is then
    measured on ``A`` and differs from the distance by the residual area
    distortion.

    Both meshes must have unit area.  Returns the distance, the optimal
    rigid motion of the returned map and the map itself.
    """
    for mesh in (meshA, meshB):
        if abs(mesh.total_area - 1.0) > UNIT_AREA_TOL:
            raise ValueError(f"{mesh.specimen_id}: mesh must be normalised to unit area (got {mesh.total_area:.6g})")
    flatA = flatten(meshA) if flatA is None else flatA
    flatB = flatten(meshB) if flatB is None else flatB
    best, m, warp = cp_search(meshA, meshB, flatA, flatB, params)
    cmap, _ = _finish(meshA, meshB, flatB, warp(hyp.apply(m, flatA.disk_coords)), params, "cP")
    logger.debug("cP %s -> %s: search %.6g, corrected %.6g", meshA.specimen_id, meshB.specimen_id, best.value, cmap.value)
    value = cmap.value
    if params.bidirectional and value > 0:
        _, m2, warp2 = cp_search(meshB, meshA, flatB, flatA, params)
        rev, rev_images = _finish(meshB, meshA, flatA, warp2(hyp.apply(m2, flatB.disk_coords)), params, "cP")
        logger.debug("cP %s -> %s: corrected %.6g", meshB.specimen_id, meshA.specimen_id, rev.value)
        # the forward direction wins ties so swapping A and B gives the same number
        if rev.value < value:
            value = rev.value
            cmap = _inverted(meshA, meshB, flatA, flatB, rev, rev_images, params)
    return value, cmap.motion, cmap


def disk_images(cmap: CorrespondenceMap, meshB: TriMesh, flatB: FlatMap) -> np.ndarray:
    """Disk coordinates (in ``flatB``) of the images of the source vertices."""
    cmap.check(meshB)
    return np.einsum("nk,nk->n", cmap.barycentric, flatB.disk_coords[meshB.faces[cmap.faces]])


def compose_images(ab: np.ndarray, bc: np.ndarray, meshB: TriMesh, flatB: FlatMap) -> np.ndarray:
    """Disk images of ``A -> C`` from those of ``A -> B`` and ``B -> C``.

    ``bc`` holds the images of the vertices of ``B``; it is interpolated
    linearly over the face of ``B`` containing each point of ``ab``.
    """
    f, b = flatB.locate(ab, clamp=True)
    return np.einsum("nk,nk->n", b, np.asarray(bc)[meshB.faces[f]])


def map_value(meshA: TriMesh, meshB: TriMesh, flatB: FlatMap, images, allow_reflection: bool = False) -> float:
    """Procrustes value of the map given by disk images, without area correction."""
    _, _, P = lift_to_surface(meshB, flatB, images)
    return rigid_align(meshA.vertices, P, vertex_areas(meshA), allow_reflection)[1]


def refine_map(meshA, meshB, flatB, images, params: CPParams = CPParams()) -> tuple[CorrespondenceMap, np.ndarray]:
    """Area-correct a candidate ``A -> B`` map given by disk images and align it."""
    return _finish(meshA, meshB, flatB, np.asarray(images, dtype=np.complex128), params, "cP")
