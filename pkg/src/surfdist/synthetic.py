"""Analytic and synthetic disk-type test surfaces."""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .mesh import TriMesh


def disk_points(n_rings: int, inner: float = 0.0) -> np.ndarray:
    """Concentric-ring sample of the unit disk, ``6k`` points on ring ``k``.

    Boundary points lie exactly on the unit circle.  Successive rings are
    rotated by a non-commensurate offset so no four points are cocircular
    in a regular pattern.
    """
    pts = [] if inner > 0 else [np.zeros((1, 2))]
    k0 = 1
    for k in range(k0, n_rings + 1):
        r = k / n_rings
        if r < inner - 1e-12:
            continue
        n = 6 * k
        phase = 0.5 * (k % 2) * 2 * np.pi / n + 0.01 * k
        t = phase + 2 * np.pi * np.arange(n) / n
        pts.append(np.stack([r * np.cos(t), r * np.sin(t)], axis=1))
    return np.concatenate(pts)


def _triangulate(xy: np.ndarray) -> np.ndarray:
    tri = Delaunay(xy).simplices.astype(np.int64)
    a, b, c = xy[tri[:, 0]], xy[tri[:, 1]], xy[tri[:, 2]]
    signed = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri[signed < 0] = tri[signed < 0][:, [0, 2, 1]]
    # sort faces for a platform-independent ordering
    order = np.lexsort(tri.T[::-1])
    return tri[order]


def unit_disk(n_rings: int = 12, specimen_id: str = "disk") -> TriMesh:
    xy = disk_points(n_rings)
    return TriMesh(np.column_stack([xy, np.zeros(len(xy))]), _triangulate(xy), specimen_id)


def height_field(xy: np.ndarray, faces: np.ndarray, heights: np.ndarray, specimen_id: str) -> TriMesh:
    return TriMesh(np.column_stack([xy, heights]), faces, specimen_id)


def spherical_cap(n_rings: int = 12, height: float = 0.3, radius: float = 1.0, specimen_id: str = "cap") -> TriMesh:
    """Cap of a sphere of ``radius`` with the given height, polar-angle parameterised."""
    xy = disk_points(n_rings)
    faces = _triangulate(xy)
    phi0 = np.arccos(1.0 - height / radius)
    r = np.linalg.norm(xy, axis=1)
    t = np.arctan2(xy[:, 1], xy[:, 0])
    phi = r * phi0
    v = radius * np.stack([np.sin(phi) * np.cos(t), np.sin(phi) * np.sin(t), np.cos(phi)], axis=1)
    return TriMesh(v, faces, specimen_id)


def hemisphere(n_rings: int = 12, specimen_id: str = "hemisphere") -> TriMesh:
    return spherical_cap(n_rings, height=1.0, radius=1.0, specimen_id=specimen_id)


def annulus(n_rings: int = 8, inner: float = 0.35) -> TriMesh:
    xy = disk_points(n_rings, inner=inner)
    faces = _triangulate(xy)
    cent = xy[faces].mean(axis=1)
    faces = faces[np.linalg.norm(cent, axis=1) > inner]
    return TriMesh(np.column_stack([xy, np.zeros(len(xy))]), faces, "annulus")


def tetrahedron() -> TriMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(v, f, "tetrahedron")


def bumps(xy: np.ndarray, centers, amplitudes, widths) -> np.ndarray:
    h = np.zeros(len(xy))
    for c, a, s in zip(centers, amplitudes, widths):
        d2 = np.sum((xy - np.asarray(c)) ** 2, axis=1)
        h += a * np.exp(-d2 / (2 * s * s))
    return h


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform proper rotation from a normalised quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


FAMILIES = {
    # bump centres in the unit disk, amplitudes, widths
    "single": ([(0.0, 0.0)], [0.55], [0.28]),
    "double": ([(-0.42, 0.0), (0.42, 0.0)], [0.5, 0.5], [0.2, 0.2]),
    "triple": ([(0.45, 0.0), (-0.225, 0.39), (-0.225, -0.39)], [0.45, 0.38, 0.3], [0.17, 0.17, 0.17]),
}


def family_shape(family: str, level: int, seed: int = 0, n_rings: int = 18, specimen_id: str | None = None) -> TriMesh:
    """A cusp-like height field from ``family`` perturbed at ``level`` (0 = template).

    Perturbations jitter bump positions, amplitudes and widths, rotate the
    pattern in the plane and change the triangulation density slightly.
    """
    centers, amps, widths = FAMILIES[family]
    rng = np.random.default_rng([seed, level, sorted(FAMILIES).index(family)])
    eps = 0.04 * level
    centers = np.asarray(centers) + eps * rng.uniform(-1, 1, size=(len(centers), 2))
    amps = np.asarray(amps) * (1 + eps * rng.uniform(-1, 1, size=len(amps)))
    widths = np.asarray(widths) * (1 + 0.5 * eps * rng.uniform(-1, 1, size=len(widths)))
    ang = rng.uniform(0, 2 * np.pi) if level else 0.0
    c, s = np.cos(ang), np.sin(ang)
    centers = centers @ np.array([[c, s], [-s, c]])
    rings = n_rings + (level % 2)
    xy = disk_points(rings)
    faces = _triangulate(xy)
    h = bumps(xy, centers, amps, widths)
    return height_field(xy, faces, h, specimen_id or f"{family}{level}")


def family_corpus(levels: int = 4, seed: int = 0, n_rings: int = 18) -> tuple[list[TriMesh], list[str]]:
    meshes, labels = [], []
    for fam in ("single", "double", "triple"):
        for lv in range(levels):
            meshes.append(family_shape(fam, lv, seed=seed, n_rings=n_rings))
            labels.append(fam)
    return meshes, labels


def smooth_deformation(mesh: TriMesh, amount: float = 0.05) -> TriMesh:
    """Same connectivity, vertices moved by a smooth near-isometric warp."""
    v = mesh.vertices.copy()
    x, y, z = v[:, 0].copy(), v[:, 1].copy(), v[:, 2].copy()
    v[:, 0] = x + amount * np.sin(np.pi * y) * 0.5
    v[:, 1] = y + amount * 0.5 * x * y
    v[:, 2] = z * (1 + amount) + amount * 0.3 * x
    return TriMesh(v, mesh.faces, mesh.specimen_id + "_deformed")
