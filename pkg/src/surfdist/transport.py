"""Exact discrete Kantorovich transport between weighted point sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import logsumexp

MAX_SIZE = 1024
SUM_TOL = 1e-9


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0):
            raise TransportError("measure weights must be nonnegative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise TransportError(f"measure weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", np.asarray(self.points))

    @classmethod
    def uniform(cls, n: int) -> "DiscreteMeasure":
        return cls(np.arange(n), np.full(n, 1.0 / n))

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling ``(i, j, mass)`` with its total cost and dual potentials."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    total_cost: float
    shape: tuple[int, int]
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    iterations: int = 0

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))

    def dense(self) -> np.ndarray:
        P = np.zeros(self.shape)
        np.add.at(P, (self.rows, self.cols), self.mass)
        return P

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "mass"])
            for i, j, x in self.entries:
                w.writerow([i, j, "%.17g" % x])


@numba.njit(cache=True)
def _potentials(m, n, bi, bj, C, u, v, parent, parc, depth, order):
    nn = m + n
    nb = len(bi)
    deg = np.zeros(nn + 1, np.int64)
    for k in range(nb):
        deg[bi[k] + 1] += 1
        deg[m + bj[k] + 1] += 1
    for x in range(nn):
        deg[x + 1] += deg[x]
    fill = deg[:nn].copy()
    adj = np.empty(2 * nb, np.int64)
    for k in range(nb):
        a = bi[k]
        b = m + bj[k]
        adj[fill[a]] = k
        fill[a] += 1
        adj[fill[b]] = k
        fill[b] += 1
    for x in range(nn):
        parent[x] = -2
    parent[0] = -1
    parc[0] = -1
    depth[0] = 0
    u[0] = 0.0
    order[0] = 0
    head = 0
    tail = 1
    while head < tail:
        x = order[head]
        head += 1
        for p in range(deg[x], deg[x + 1]):
            k = adj[p]
            y = m + bj[k] if x < m else bi[k]
            if parent[y] != -2:
                continue
            parent[y] = x
            parc[y] = k
            depth[y] = depth[x] + 1
            if y >= m:
                v[y - m] = C[bi[k], bj[k]] - u[bi[k]]
            else:
                u[y] = C[bi[k], bj[k]] - v[bj[k]]
            order[tail] = y
            tail += 1
    return tail


@numba.njit(cache=True)
def _network_simplex(a, b, C, tol, max_iter):
    m, n = C.shape
    nb = m + n - 1
    bi = np.empty(nb, np.int64)
    bj = np.empty(nb, np.int64)
    bx = np.empty(nb, np.float64)
    sa = a.copy()
    sb = b.copy()
    i = 0
    j = 0
    for k in range(nb):
        x = min(sa[i], sb[j])
        bi[k] = i
        bj[k] = j
        bx[k] = x
        sa[i] -= x
        sb[j] -= x
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif sa[i] <= sb[j]:
            i += 1
        else:
            j += 1

    nn = m + n
    u = np.zeros(m)
    v = np.zeros(n)
    parent = np.empty(nn, np.int64)
    parc = np.empty(nn, np.int64)
    depth = np.empty(nn, np.int64)
    order = np.empty(nn, np.int64)
    cyc = np.empty(nn, np.int64)
    sgn = np.empty(nn, np.int64)
    side_i = np.empty(nn, np.int64)
    side_j = np.empty(nn, np.int64)
    degenerate_run = 0
    bland = False
    it = 0
    status = 1
    while it < max_iter:
        reached = _potentials(m, n, bi, bj, C, u, v, parent, parc, depth, order)
        if reached != nn:
            status = 2
            break
        # pricing
        best = 0.0
        ei = -1
        ej = -1
        for r in range(m):
            ur = u[r]
            for c in range(n):
                red = C[r, c] - ur - v[c]
                if red < -tol:
                    if bland:
                        ei = r
                        ej = c
                        break
                    if red < best:
                        best = red
                        ei = r
                        ej = c
            if bland and ei >= 0:
                break
        if ei < 0:
            status = 0
            break
        # cycle through the tree between source ei and sink ej
        x = ei
        y = m + ej
        nx = 0
        ny = 0
        # arcs are collected into cyc with sign -1 (decrease) / +1 (increase)
        while depth[x] > depth[y]:
            side_i[nx] = x
            nx += 1
            x = parent[x]
        while depth[y] > depth[x]:
            side_j[ny] = y
            ny += 1
            y = parent[y]
        while x != y:
            side_i[nx] = x
            nx += 1
            x = parent[x]
            side_j[ny] = y
            ny += 1
            y = parent[y]
        nc = 0
        for t in range(ny):
            node = side_j[t]
            cyc[nc] = parc[node]
            sgn[nc] = -1 if node >= m else 1
            nc += 1
        for t in range(nx):
            node = side_i[t]
            cyc[nc] = parc[node]
            sgn[nc] = -1 if node < m else 1
            nc += 1
        theta = np.inf
        leave = -1
        leave_key = 0
        for t in range(nc):
            if sgn[t] < 0:
                k = cyc[t]
                key = bi[k] * n + bj[k]
                if bx[k] < theta or (bx[k] == theta and key < leave_key):
                    theta = bx[k]
                    leave = k
                    leave_key = key
        for t in range(nc):
            k = cyc[t]
            if sgn[t] < 0:
                bx[k] -= theta
            else:
                bx[k] += theta
        bx[leave] = 0.0
        bi[leave] = ei
        bj[leave] = ej
        bx[leave] = theta
        if theta <= 0.0:
            degenerate_run += 1
            if degenerate_run > 2 * nn:
                bland = True
        else:
            degenerate_run = 0
            bland = False
        it += 1
    return bi, bj, bx, u, v, it, status


def _as_weights(x) -> np.ndarray:
    if isinstance(x, DiscreteMeasure):
        return x.weights
    return np.asarray(x, dtype=np.float64)


def _check_inputs(a, b, cost):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.shape != (len(a), len(b)):
        raise TransportError(f"cost shape {cost.shape} does not match measures ({len(a)}, {len(b)})")
    if max(cost.shape) > MAX_SIZE:
        raise TransportError(f"transport problems are capped at {MAX_SIZE} sites per side; reduce the sample count")
    if not np.all(np.isfinite(cost)):
        raise TransportError("cost matrix must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise TransportError("weights must be nonnegative")
    sa, sb = a.sum(), b.sum()
    if abs(sa - sb) > SUM_TOL * max(sa, sb, 1.0):
        raise TransportError(f"marginal masses differ: {sa!r} vs {sb!r}")
    # rescale the second marginal to absorb rounding-level mismatch
    b = b * (sa / sb)
    return a, b, cost


def solve_kantorovich(mu, nu, cost, method: str = "simplex", reg: float = 1e-2) -> TransportPlan:
    """Optimal coupling of ``mu`` and ``nu`` under ``cost``.

    Parameters
    ----------
    mu, nu : DiscreteMeasure or array_like
        Marginal weights (equal total mass).
    cost : array_like, shape (len(mu), len(nu))
    method : {"simplex", "sinkhorn"}
        ``"simplex"`` is the exact network simplex; ``"sinkhorn"`` is an
        entropic approximation with regularisation ``reg`` (relative to the
        largest cost) and never exact.
    """
    a, b, C = _check_inputs(_as_weights(mu), _as_weights(nu), cost)
    m, n = C.shape
    if method == "sinkhorn":
        return _sinkhorn(a, b, C, reg)
    if method != "simplex":
        raise ValueError(f"unknown transport method {method!r}")
    scale = max(float(np.abs(C).max()), 1e-300)
    tol = 1e-12 * scale
    bi, bj, bx, u, v, it, status = _network_simplex(a, b, C, tol, 50 * (m + n) * (m + n) + 1000)
    if status != 0:
        raise TransportError(f"network simplex did not converge (status {status}, {it} pivots)")
    keep = bx > 0
    order = np.lexsort((bj[keep], bi[keep]))
    rows, cols, mass = bi[keep][order], bj[keep][order], bx[keep][order]
    total = float(np.dot(mass, C[rows, cols]))
    return TransportPlan(rows, cols, mass, total, (m, n), u, v, it)


def _sinkhorn(a, b, C, reg, n_iter: int = 5000, tol: float = 1e-10) -> TransportPlan:
    eps = reg * max(float(C.max()), 1e-300)
    la = np.log(np.where(a > 0, a, 1e-300))
    lb = np.log(np.where(b > 0, b, 1e-300))
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    for it in range(n_iter):
        f = eps * (la - logsumexp((g[None, :] - C) / eps, axis=1))
        g_new = eps * (lb - logsumexp((f[:, None] - C) / eps, axis=0))
        if np.max(np.abs(g_new - g)) < tol * eps:
            g = g_new
            break
        g = g_new
    P = np.exp((f[:, None] + g[None, :] - C) / eps)
    rows, cols = np.nonzero(P > 0)
    mass = P[rows, cols]
    return TransportPlan(rows, cols, mass, float(np.sum(mass * C[rows, cols])), C.shape, f, g, it + 1)


def plan_as_soft_correspondence(plan: TransportPlan) -> np.ndarray:
    """For every source site the target receiving the most mass (smallest index on ties)."""
    m, n = plan.shape
    best = np.full(m, -1, dtype=np.int64)
    best_mass = np.full(m, -np.inf)
    order = np.lexsort((plan.cols, plan.rows))
    for i, j, x in zip(plan.rows[order].tolist(), plan.cols[order].tolist(), plan.mass[order].tolist()):
        if x > best_mass[i]:
            best_mass[i] = x
            best[i] = j
    return best
