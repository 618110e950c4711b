"""Farthest-point sampling of flattened surfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from .. import hyperbolic as hyp
from ..flatten import FlatMap
from ..mesh import TriMesh


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Sample sites on one surface.

    ``weights`` are the surface-area fractions of the geodesic Voronoi
    cells of the sites (equivalently their ``hyper * deta`` mass) and sum
    to one.
    """

    vertices: np.ndarray
    points: np.ndarray  # disk coordinates, complex
    weights: np.ndarray
    factor: np.ndarray
    hyper_factor: np.ndarray

    def __len__(self):
        return len(self.vertices)

    def pushed(self, m: hyp.MobiusTransform) -> "SampleSet":
        """The same sites after pushing the flattening forward by ``m``."""
        jac = np.abs(m.derivative(self.points)) ** 2
        z = hyp.apply(m, self.points)
        return SampleSet(self.vertices, z, self.weights, self.factor / jac, self.hyper_factor)


def _voronoi_weights(mesh: TriMesh, sites: np.ndarray, mass: np.ndarray) -> np.ndarray:
    _, _, owner = csgraph.dijkstra(
        mesh.adjacency, directed=False, indices=sites, min_only=True, return_predecessors=True
    )
    slot = np.full(mesh.n_vertices, -1, dtype=np.int64)
    slot[sites] = np.arange(len(sites))
    w = np.bincount(slot[owner], weights=mass, minlength=len(sites))
    return w / w.sum()


def farthest_point_order(mesh: TriMesh, n: int, seed_vertex: int, allowed: np.ndarray | None = None) -> np.ndarray:
    """Greedy farthest-point selection on the edge graph.

    Ties go to the smallest vertex index.  ``allowed`` restricts which
    vertices may be picked; distances still use the whole surface.
    """
    nv = mesh.n_vertices
    dist = np.full(nv, np.inf)
    chosen = [int(seed_vertex)]
    G = mesh.adjacency
    banned = np.zeros(nv, dtype=bool) if allowed is None else ~np.asarray(allowed, dtype=bool)
    while True:
        limit = np.inf if len(chosen) == 1 else float(np.max(dist[~banned]))
        d = csgraph.dijkstra(G, directed=False, indices=chosen[-1], limit=limit)
        np.minimum(dist, d, out=dist)
        if len(chosen) == n:
            break
        cand = np.where(banned, -1.0, dist)
        nxt = int(np.argmax(cand))
        if cand[nxt] <= 0:
            break
        chosen.append(nxt)
    return np.asarray(chosen, dtype=np.int64)


def sample_surface(flat: FlatMap, mesh: TriMesh, n: int, interior_only: bool = False) -> SampleSet:
    """Pick ``n`` sites by farthest-point sampling in the surface metric.

    The first site is the vertex of largest hyperbolic density (smallest
    index on ties).  With ``interior_only`` boundary vertices are never
    picked, which keeps every site at finite hyperbolic distance.

    Raises
    ------
    ValueError
        ``n`` is below 1 or above the number of eligible vertices.
    """
    allowed = ~flat.boundary if interior_only else np.ones(mesh.n_vertices, dtype=bool)
    n_ok = int(allowed.sum())
    if not 1 <= n <= n_ok:
        raise ValueError(f"sample count {n} out of range [1, {n_ok}]")
    if n == n_ok:
        sites = np.flatnonzero(allowed)
    else:
        h = np.where(allowed, flat.hyper_factor, -np.inf)
        sites = farthest_point_order(mesh, n, int(np.argmax(h)), allowed)
    w = _voronoi_weights(mesh, sites, flat.mass)
    return SampleSet(
        vertices=sites,
        points=flat.disk_coords[sites],
        weights=w,
        factor=flat.factor[sites],
        hyper_factor=flat.hyper_factor[sites],
    )
