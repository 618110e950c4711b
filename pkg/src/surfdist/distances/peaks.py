"""Prominent maxima of the hyperbolic density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..flatten import FlatMap


@dataclass(frozen=True)
class Peak:
    vertex: int
    location: complex
    value: float
    prominence: float


def _vertex_graph(faces: np.ndarray, n: int) -> sparse.csr_matrix:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    A = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    A = ((A + A.T) > 0).astype(np.int8)
    return A.tocsr()


def _k_ring(A: sparse.csr_matrix, k: int) -> sparse.csr_matrix:
    R = A.copy()
    for _ in range(k - 1):
        R = ((R + R @ A) > 0).astype(np.int8)
    R.setdiag(0)
    R.eliminate_zeros()
    return R.tocsr()


def _prominence(values: np.ndarray, A: sparse.csr_matrix) -> np.ndarray:
    """Topographic prominence of every vertex (0 for non-maxima).

    Vertices are added in decreasing value; when two components merge the
    one with the lower summit dies at the current level.  The global
    maximum's prominence is its height above the global minimum.
    """
    n = len(values)
    order = np.lexsort((np.arange(n), -values))
    parent = np.full(n, -1, dtype=np.int64)
    summit = np.arange(n)
    prom = np.zeros(n)
    indptr, indices = A.indptr, A.indices

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for v in order.tolist():
        parent[v] = v
        for u in indices[indptr[v]:indptr[v + 1]].tolist():
            if parent[u] < 0:
                continue
            ru, rv = find(u), find(v)
            if ru == rv:
                continue
            su, sv = summit[ru], summit[rv]
            # the lower summit (larger index on ties) dies here
            hi, lo = (su, sv) if (values[su], -su) > (values[sv], -sv) else (sv, su)
            prom[lo] = max(prom[lo], values[lo] - values[v])
            parent[ru] = rv
            summit[rv] = hi
    top = order[0]
    prom[top] = values[top] - values.min()
    return prom


def detect_peaks(
    flat: FlatMap,
    k_ring: int = 1,
    min_prominence: float = 0.05,
    max_peaks: int | None = None,
) -> list[Peak]:
    """Local maxima of ``hyper_factor`` with enough prominence.

    Parameters
    ----------
    k_ring : int
        A peak is at least as high as every vertex within ``k_ring`` edges.
    min_prominence : float
        Threshold relative to the range of ``hyper_factor``; a peak must
        exceed it strictly.
    max_peaks : int, optional
        Keep only the highest peaks.

    Returns peaks sorted by value (descending), then vertex index.
    """
    h = np.asarray(flat.hyper_factor, dtype=np.float64)
    spread = float(h.max() - h.min())
    if spread <= 0:
        return []
    A = _vertex_graph(flat.faces, len(h))
    R = _k_ring(A, max(int(k_ring), 1))
    # a vertex is a local max when no k-ring neighbour is strictly higher
    rows = np.repeat(np.arange(len(h)), np.diff(R.indptr))
    beaten = np.zeros(len(h), dtype=bool)
    np.logical_or.at(beaten, rows, h[R.indices] > h[rows])
    prom = _prominence(h, A)
    keep = np.flatnonzero(~beaten & (prom > min_prominence * spread))
    keep = keep[np.lexsort((keep, -h[keep]))]
    if max_peaks is not None:
        keep = keep[:max_peaks]
    return [Peak(int(v), complex(flat.disk_coords[v]), float(h[v]), float(prom[v])) for v in keep]
