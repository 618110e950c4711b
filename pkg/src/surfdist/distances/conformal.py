"""Transport distances between conformal densities on the disk."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .. import hyperbolic as hyp
from ..flatten import FlatMap
from ..transport import TransportPlan, solve_kantorovich
from .sampling import SampleSet


def _neighbourhood_values(flat: FlatMap, centres, R: float, n_radial: int, n_angular: int) -> np.ndarray:
    """``hyper`` on the polar grid of N(z, R) for each centre, shape (k, n_radial, n_angular).

    Grids are laid out in the flattening-time frame of ``flat``, so the
    values do not depend on any later recentring.
    """
    g = hyp.neighborhood_grid(float(R), n_radial, n_angular)
    c = flat.to_base(np.atleast_1d(np.asarray(centres, dtype=np.complex128)))
    # rotation-free transform taking 0 to c: w -> (w + c) / (1 + conj(c) w)
    w = g.points[None, :, :]
    cc = c[:, None, None]
    pts = (w + cc) / (1.0 + np.conj(cc) * w)
    vals = flat.hyper_at(pts.ravel(), base=True)
    return vals.reshape(len(c), n_radial, n_angular)


def _shift_step(n_angular: int, n_theta: int) -> int:
    if n_theta < 1 or n_angular % n_theta:
        raise ValueError(f"angular nodes ({n_angular}) must be a multiple of the rotation count ({n_theta})")
    return n_angular // n_theta


@numba.njit(cache=True, parallel=True)
def _cwn_matrix(VA, VB, w, step, n_theta):
    na, nr, nang = VA.shape
    nb = VB.shape[0]
    out = np.empty((na, nb))
    for i in numba.prange(na):
        for j in range(nb):
            best = np.inf
            for k in range(n_theta):
                s = k * step
                tot = 0.0
                for r in range(nr):
                    acc = 0.0
                    for a in range(nang):
                        b = a + s
                        if b >= nang:
                            b -= nang
                        acc += abs(VA[i, r, a] - VB[j, r, b])
                    tot += w[r] * acc
                    if tot >= best:
                        break
                if tot < best:
                    best = tot
            out[i, j] = best
    return out


def cwn_cost(
    zA: complex,
    zB: complex,
    R: float,
    flatA: FlatMap,
    flatB: FlatMap,
    n_theta: int = 64,
    n_radial: int = 16,
    n_angular: int = 64,
) -> float:
    """Neighbourhood dissimilarity of ``flatA`` at ``zA`` and ``flatB`` at ``zB``.

    The minimum over ``n_theta`` equally spaced rotations of
    ``int_{N(zA,R)} |hyperA(w) - hyperB(m(w))| deta(w)`` where ``m`` sends
    ``zA`` to ``zB``.  ``n_angular`` must be a multiple of ``n_theta`` so
    each rotation permutes grid nodes exactly.
    """
    step = _shift_step(n_angular, n_theta)
    VA = _neighbourhood_values(flatA, [zA], R, n_radial, n_angular)
    VB = _neighbourhood_values(flatB, [zB], R, n_radial, n_angular)
    w = hyp.neighborhood_grid(float(R), n_radial, n_angular).weights
    return float(_cwn_matrix(VA, VB, np.ascontiguousarray(w), step, n_theta)[0, 0])


def cwn_cost_matrix(
    flatA: FlatMap,
    flatB: FlatMap,
    samplesA: SampleSet,
    samplesB: SampleSet,
    R: float = 0.5,
    n_theta: int = 64,
    n_radial: int = 16,
    n_angular: int = 64,
) -> np.ndarray:
    step = _shift_step(n_angular, n_theta)
    VA = _neighbourhood_values(flatA, samplesA.points, R, n_radial, n_angular)
    VB = _neighbourhood_values(flatB, samplesB.points, R, n_radial, n_angular)
    w = np.ascontiguousarray(hyp.neighborhood_grid(float(R), n_radial, n_angular).weights)
    return _cwn_matrix(VA, VB, w, step, n_theta)


def cwn_distance(
    flatA: FlatMap,
    flatB: FlatMap,
    samplesA: SampleSet,
    samplesB: SampleSet,
    R: float = 0.5,
    n_theta: int = 64,
    n_radial: int = 16,
    n_angular: int = 64,
) -> tuple[float, TransportPlan]:
    """Optimal transport of sample masses under the neighbourhood cost.

    One Kantorovich problem with marginals equal to the sample weights.
    Returns the optimal cost and the plan.
    """
    C = cwn_cost_matrix(flatA, flatB, samplesA, samplesB, R, n_theta, n_radial, n_angular)
    plan = solve_kantorovich(samplesA.weights, samplesB.weights, C)
    return plan.total_cost, plan


@dataclass(frozen=True)
class MobiusGrid:
    """Product grid of transforms ``(theta, alpha)``.

    ``alpha`` takes ``n_angular`` directions at every nonzero radius in
    ``radii``; a zero radius contributes a single ``alpha = 0``.
    """

    n_angular: int = 16
    radii: tuple[float, ...] = (0.0, 0.15, 0.3, 0.45, 0.6)
    n_theta: int = 16

    def transforms(self) -> list[hyp.MobiusTransform]:
        alphas = []
        for r in self.radii:
            if r == 0:
                alphas.append(0j)
            else:
                alphas.extend(r * np.exp(2j * np.pi * np.arange(self.n_angular) / self.n_angular))
        thetas = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        return [hyp.MobiusTransform(t, a) for a in alphas for t in thetas]


def cw_distance(
    flatA: FlatMap,
    flatB: FlatMap,
    samplesA: SampleSet,
    samplesB: SampleSet,
    grid: MobiusGrid | list[hyp.MobiusTransform] | None = None,
) -> float:
    """Smallest transport cost over a grid of Möbius transforms of ``A``.

    For each ``m`` the samples of ``A`` are pushed forward by ``m`` (their
    masses are unchanged) and matched to the samples of ``B`` with
    hyperbolic ground cost.  The grid minimum bounds the infimum over the
    full group from above.
    """
    if grid is None:
        grid = MobiusGrid()
    ms = grid.transforms() if isinstance(grid, MobiusGrid) else list(grid)
    if not ms:
        raise ValueError("empty Möbius grid")
    best = np.inf
    for m in ms:
        C = hyp.pairwise_hyperbolic_distance(hyp.apply(m, samplesA.points), samplesB.points)
        cost = solve_kantorovich(samplesA.weights, samplesB.weights, C).total_cost
        best = min(best, cost)
    return float(best)
