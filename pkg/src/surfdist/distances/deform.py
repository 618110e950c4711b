"""Disk self-maps used to refine a Möbius correspondence.

``PeakWarp`` nudges matched density peaks onto each other; the area
corrector then flows image points until each source triangle covers the
right fraction of the target surface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .. import hyperbolic as hyp
from .._planar import signed_areas
from ..flatten import FlatMap
from ..mesh import TriMesh

logger = logging.getLogger(__name__)

_GRAD_BOUND = np.exp(-0.5)


@dataclass(frozen=True, eq=False)
class PeakWarp:
    """``w -> w + (1 - |w|^2) sum_k c_k exp(-|w - s_k|^2 / (2 sigma^2))``.

    The factor ``1 - |w|^2`` pins the unit circle.  Construction keeps
    the displacement's Lipschitz constant below one, so the map is a
    bijection of the closed disk.
    """

    centers: np.ndarray = field(default_factory=lambda: np.zeros(0, np.complex128))
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0, np.complex128))
    sigma: float = 0.3

    @property
    def is_identity(self) -> bool:
        return len(self.centers) == 0 or not np.any(self.coeffs)

    def lipschitz_bound(self) -> float:
        return float(np.abs(self.coeffs).sum() * (_GRAD_BOUND / self.sigma + 2.0))

    def displacement(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.complex128)
        if self.is_identity:
            return np.zeros_like(w)
        d2 = np.abs(w[..., None] - self.centers) ** 2
        h = np.exp(-d2 / (2 * self.sigma**2)) @ self.coeffs
        return (1.0 - np.abs(w) ** 2) * h

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.complex128)
        return w + self.displacement(w)

    def inverse(self, z, tol: float = 1e-14, max_iter: int = 500) -> np.ndarray:
        """Solve ``w + g(w) = z`` by fixed-point iteration (``g`` is a contraction)."""
        z = np.asarray(z, dtype=np.complex128)
        if self.is_identity:
            return z.copy()
        w = z.copy()
        for _ in range(max_iter):
            nxt = z - self.displacement(w)
            done = np.max(np.abs(nxt - w), initial=0.0) < tol
            w = nxt
            if done:
                break
        return w


IDENTITY_WARP = PeakWarp()


def match_peaks(src, dst, radius: float) -> list[tuple[int, int]]:
    """Greedy closest-first matching in hyperbolic distance, pairs closer than ``radius``."""
    src = np.asarray(src, dtype=np.complex128)
    dst = np.asarray(dst, dtype=np.complex128)
    if len(src) == 0 or len(dst) == 0:
        return []
    D = hyp.pairwise_hyperbolic_distance(src, dst)
    ii, jj = np.meshgrid(np.arange(len(src)), np.arange(len(dst)), indexing="ij")
    order = np.lexsort((jj.ravel(), ii.ravel(), D.ravel()))
    used_s, used_d, out = set(), set(), []
    for k in order.tolist():
        i, j = int(ii.flat[k]), int(jj.flat[k])
        if D.flat[k] >= radius:
            break
        if i in used_s or j in used_d:
            continue
        used_s.add(i)
        used_d.add(j)
        out.append((i, j))
    return out


def _fit_warp(s: np.ndarray, t: np.ndarray, sigma: float) -> PeakWarp | None:
    K = np.exp(-np.abs(s[:, None] - s[None, :]) ** 2 / (2 * sigma**2))
    A = (1.0 - np.abs(s) ** 2)[:, None] * K
    try:
        c = np.linalg.solve(A, t - s)
    except np.linalg.LinAlgError:
        return None
    warp = PeakWarp(s.copy(), c, sigma)
    if warp.lipschitz_bound() >= 1.0:
        return None
    return warp


def align_peak_deformation(
    peaks_src,
    peaks_dst,
    sigma: float = 0.3,
    match_radius: float = 1.0,
    anchors=(),
) -> PeakWarp:
    """Smooth disk bijection moving matched source peaks onto target peaks.

    Parameters
    ----------
    peaks_src, peaks_dst : array_like of complex
        Peak locations of the source (already mapped by the Möbius
        transform) and of the target.
    anchors : sequence of complex
        Points that must stay fixed (for instance the peak pair that
        defines the Möbius transform).
    sigma : float
        Gaussian width of the displacement kernel.
    match_radius : float
        Hyperbolic distance above which peaks are left unmatched.

    If the interpolant would not be provably injective, the pair with the
    largest displacement is dropped and the fit repeated.
    """
    src = np.asarray(peaks_src, dtype=np.complex128).ravel()
    dst = np.asarray(peaks_dst, dtype=np.complex128).ravel()
    anchors = np.asarray(anchors, dtype=np.complex128).ravel()
    pairs = match_peaks(src, dst, match_radius)
    # anchors are fixed; drop peaks sitting on them
    pairs = [(i, j) for i, j in pairs if not np.any(np.abs(src[i] - anchors) < 1e-9)]
    pairs = [(i, j) for i, j in pairs if abs(dst[j] - src[i]) > 1e-12]
    while pairs:
        s = np.concatenate([anchors, src[[i for i, _ in pairs]]])
        t = np.concatenate([anchors, dst[[j for _, j in pairs]]])
        warp = _fit_warp(s, t, sigma)
        if warp is not None:
            return warp
        disp = [abs(dst[j] - src[i]) for i, j in pairs]
        pairs.pop(int(np.argmax(disp)))
    return IDENTITY_WARP


# ------------------------------------------------------------ area correction


@dataclass
class CorrectionResult:
    images: np.ndarray
    residual: float
    history: list[float]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def lift_to_surface(mesh: TriMesh, flat: FlatMap, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(face, barycentric, 3D point) on ``mesh`` for disk points of ``flat``."""
    f, b = flat.locate(points, clamp=True)
    P = np.einsum("nk,nkd->nd", b, mesh.vertices[mesh.faces[f]])
    return f, b, P


def _triangle_areas(P: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = P[faces[:, 0]], P[faces[:, 1]], P[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def area_ratios(images, source_faces, source_face_areas, target_mesh, target_flat) -> np.ndarray:
    """Per source face: share of target area covered over share of source area."""
    _, _, P = lift_to_surface(target_mesh, target_flat, images)
    ta = _triangle_areas(P, source_faces)
    sa = np.asarray(source_face_areas, dtype=np.float64)
    return (ta / ta.sum()) / (sa / sa.sum())


def _planar_stiffness(z: np.ndarray, faces: np.ndarray, n: int) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for k in range(3):
        o, i, j = faces[:, k], faces[:, (k + 1) % 3], faces[:, (k + 2) % 3]
        u, v = z[i] - z[o], z[j] - z[o]
        cot = np.real(np.conj(u) * v) / np.imag(np.conj(u) * v)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-0.5 * cot, -0.5 * cot, 0.5 * cot, 0.5 * cot]
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()


def _vertex_gradient(z: np.ndarray, faces: np.ndarray, phi: np.ndarray, n: int) -> np.ndarray:
    """Area-averaged gradient of a piecewise-linear function, as complex numbers."""
    a, b, c = z[faces[:, 0]], z[faces[:, 1]], z[faces[:, 2]]
    area2 = np.imag(np.conj(b - a) * (c - a))
    # the hat function at a has gradient i (c - b) / (2 area) for a ccw triangle
    g = (
        phi[faces[:, 0]] * (c - b) + phi[faces[:, 1]] * (a - c) + phi[faces[:, 2]] * (b - a)
    ) * 1j / area2
    w = 0.5 * np.abs(area2)
    num = np.zeros(n, np.complex128)
    den = np.zeros(n)
    for k in range(3):
        np.add.at(num, faces[:, k], g * w)
        np.add.at(den, faces[:, k], w)
    return num / np.maximum(den, 1e-300)


def area_preserving_correction(
    images,
    source_faces: np.ndarray,
    source_face_areas: np.ndarray,
    target_mesh: TriMesh,
    target_flat: FlatMap,
    boundary: np.ndarray | None = None,
    tol: float = 0.05,
    max_iter: int = 100,
) -> CorrectionResult:
    """Flow image points so every source face covers its share of the target.

    Each iteration compares, per vertex, the target area covered by the
    incident image triangles with their source area, solves a Neumann
    Poisson problem for a potential whose gradient field has the required
    divergence, and moves the points along it.  A backtracking line
    search accepts a step only if no triangle flips and the residual
    ``max |ratio - 1|`` does not increase, so the residual history is
    non-increasing.  Boundary points slide along the unit circle.
    """
    w = np.asarray(images, dtype=np.complex128).copy()
    faces = np.asarray(source_faces, dtype=np.int64)
    n = len(w)
    bd = np.zeros(n, bool) if boundary is None else np.asarray(boundary, bool)
    sa = np.asarray(source_face_areas, dtype=np.float64)
    sa_n = sa / sa.sum()

    def evaluate(z):
        r = area_ratios(z, faces, sa, target_mesh, target_flat)
        return r, float(np.max(np.abs(r - 1.0))), float(np.sum(sa_n * np.abs(r - 1.0)))

    ratios, resid, mean_err = evaluate(w)
    history = [resid]
    src_inc = np.bincount(faces.ravel(), weights=np.repeat(sa_n, 3), minlength=n)
    for _ in range(max_iter):
        if resid < tol:
            break
        covered = np.bincount(faces.ravel(), weights=np.repeat(ratios * sa_n, 3), minlength=n)
        q = covered / np.maximum(src_inc, 1e-300)
        s = 1.0 / np.maximum(q, 1e-6) - 1.0
        pa = np.abs(signed_areas(w, faces))
        M = np.bincount(faces.ravel(), weights=np.repeat(pa / 3.0, 3), minlength=n)
        s -= (M @ s) / M.sum()
        K = _planar_stiffness(w, faces, n)
        eps = 1e-8 * K.diagonal().mean() / max(M.mean(), 1e-300)
        phi = spsolve((K + eps * sparse.diags(M)).tocsc(), -M * s)
        u = _vertex_gradient(w, faces, phi, n)
        if np.any(bd):
            tang = 1j * w[bd] / np.abs(w[bd])
            u[bd] = tang * np.real(np.conj(tang) * u[bd])
        accepted = False
        step = 1.0
        for _ls in range(7):
            trial = w + step * u
            trial[bd] /= np.abs(trial[bd])
            if np.all(np.abs(trial[~bd]) < 1.0) and np.all(signed_areas(trial, faces) > 0):
                r2, res2, mean2 = evaluate(trial)
                if res2 < resid or (res2 == resid and mean2 < mean_err):
                    w, ratios, resid, mean_err = trial, r2, res2, mean2
                    accepted = True
                    break
            step *= 0.5
        history.append(resid)
        if not accepted:
            break
    converged = resid < tol
    if not converged:
        logger.info("area correction stopped at residual %.4f after %d iterations", resid, len(history) - 1)
    return CorrectionResult(w, resid, history, converged)
