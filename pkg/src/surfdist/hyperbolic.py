"""Disk-preserving Möbius transformations and hyperbolic geometry of the unit disk.

Conventions
-----------
Distances follow ``d(0, z) = ln((1 + |z|) / (1 - |z|))``.  The measure is
``deta = (1 - |z|^2)^-2 dx dy`` (no factor 4), so the disk of hyperbolic
radius ``R`` about any point has ``eta``-area ``pi * sinh(R / 2)**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MobiusTransform:
    """``m(z) = exp(i theta) (z - alpha) / (1 - conj(alpha) z)``."""

    theta: float = 0.0
    alpha: complex = 0j

    def __post_init__(self):
        a = complex(self.alpha)
        if not abs(a) < 1.0:
            raise ValueError(f"|alpha| must be < 1, got {abs(a)}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    def __call__(self, z):
        return apply(self, z)

    @property
    def matrix(self) -> np.ndarray:
        e = np.exp(1j * self.theta)
        a = self.alpha
        return np.array([[e, -e * a], [-np.conj(a), 1.0]], dtype=np.complex128)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "MobiusTransform":
        (a, b), (c, d) = m
        # normalise so the lower-right entry is 1: then a = e^{i theta}, b = -a alpha
        a, b = a / d, b / d
        return cls(theta=float(np.angle(a)), alpha=complex(-b / a))

    def derivative(self, z):
        z = np.asarray(z, dtype=np.complex128)
        return np.exp(1j * self.theta) * (1 - abs(self.alpha) ** 2) / (1 - np.conj(self.alpha) * z) ** 2


IDENTITY = MobiusTransform()


def apply(m: MobiusTransform, z):
    z = np.asarray(z, dtype=np.complex128)
    return np.exp(1j * m.theta) * (z - m.alpha) / (1 - np.conj(m.alpha) * z)


def compose(m2: MobiusTransform, m1: MobiusTransform) -> MobiusTransform:
    """The transform ``z -> m2(m1(z))``."""
    return MobiusTransform.from_matrix(m2.matrix @ m1.matrix)


def inverse(m: MobiusTransform) -> MobiusTransform:
    return MobiusTransform(theta=-m.theta, alpha=-m.alpha * np.exp(1j * m.theta))


def translation(z_from: complex, z_to: complex = 0j) -> MobiusTransform:
    """Rotation-free transform sending ``z_from`` to ``z_to``."""
    to_origin = MobiusTransform(0.0, z_from)
    if z_to == 0:
        return to_origin
    return compose(inverse(MobiusTransform(0.0, z_to)), to_origin)


def hyperbolic_distance(z, w):
    """Geodesic distance between points of the open unit disk."""
    z = np.asarray(z, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    if np.any(np.abs(z) >= 1.0) or np.any(np.abs(w) >= 1.0):
        raise ValueError("hyperbolic distance is only finite inside the open unit disk")
    r = np.abs((w - z) / (1 - np.conj(z) * w))
    r = np.minimum(r, 1.0 - 1e-16)
    return 2.0 * np.arctanh(r)


def pairwise_hyperbolic_distance(z, w) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)[:, None]
    w = np.asarray(w, dtype=np.complex128)[None, :]
    return hyperbolic_distance(z, w)


def mobius_family_fixing(z: complex, z_prime: complex, theta: float) -> MobiusTransform:
    """Member of the one-parameter family of transforms with ``m(z) = z_prime``.

    Built as (origin -> z_prime) o (rotation by theta) o (z -> origin).
    """
    to_origin = MobiusTransform(0.0, z)
    rot = MobiusTransform(theta, 0j)
    from_origin = inverse(MobiusTransform(0.0, z_prime))
    return compose(from_origin, compose(rot, to_origin))


def hyperbolic_vertex_measure(planar_areas, z=None, boundary=None) -> np.ndarray:
    """Per-vertex weights of ``deta``; boundary vertices get weight 0.

    Accepts a FlatMap, or explicit planar areas, disk coordinates and a
    boundary mask.
    """
    if z is None:
        flat = planar_areas
        planar_areas, z, boundary = flat.planar_areas, flat.disk_coords, flat.boundary
    z = np.asarray(z, dtype=np.complex128)
    boundary = np.asarray(boundary, dtype=bool)
    with np.errstate(divide="ignore"):
        w = np.asarray(planar_areas, dtype=np.float64) / (1.0 - np.abs(z) ** 2) ** 2
    return np.where(boundary, 0.0, w)


def hyperbolic_vertex_mass(flat) -> np.ndarray:
    """``hyper * deta`` per vertex, with boundary vertices taking their limit ``f dx dy``."""
    w = hyperbolic_vertex_measure(flat)
    return np.where(flat.boundary, flat.factor * flat.planar_areas, flat.hyper_factor * w)


def euclidean_radius(R: float) -> float:
    """Euclidean radius of the hyperbolic disk of radius ``R`` about the origin."""
    return float(np.tanh(R / 2.0))


def neighborhood_area(R: float) -> float:
    return float(np.pi * np.sinh(R / 2.0) ** 2)


@dataclass(frozen=True)
class NeighborhoodGrid:
    """Polar quadrature of N(0, R) under ``deta``.

    ``points`` has shape (n_radial, n_angular); node ``[r, a]`` sits at angle
    ``2 pi a / n_angular`` so rotating by a multiple of that step permutes
    the angular index cyclically.
    """

    R: float
    points: np.ndarray
    weights: np.ndarray  # shape (n_radial,), the same for every angular node

    @property
    def shape(self):
        return self.points.shape


@lru_cache(maxsize=32)
def neighborhood_grid(R: float, n_radial: int = 16, n_angular: int = 64) -> NeighborhoodGrid:
    if R <= 0:
        raise ValueError("R must be positive")
    s_edges = np.linspace(0.0, R, n_radial + 1)
    r_edges = np.tanh(s_edges / 2.0)
    s_mid = 0.5 * (s_edges[:-1] + s_edges[1:])
    r_mid = np.tanh(s_mid / 2.0)
    # exact eta-area of each annular cell, split over the angular nodes
    ring = np.pi * np.diff(1.0 / (1.0 - r_edges**2))
    weights = ring / n_angular
    ang = TWO_PI * np.arange(n_angular) / n_angular
    pts = r_mid[:, None] * np.exp(1j * ang)[None, :]
    pts.setflags(write=False)
    weights.setflags(write=False)
    return NeighborhoodGrid(R=float(R), points=pts, weights=weights)


def neighborhood_samples(z: complex, R: float, n_radial: int = 16, n_angular: int = 64):
    """Quadrature nodes and ``eta``-weights covering N(z, R).

    Returns flat arrays ``(points, weights)``; nodes are the image of the
    fixed grid on N(0, R) under the rotation-free transform taking 0 to z.
    """
    g = neighborhood_grid(float(R), n_radial, n_angular)
    m = inverse(MobiusTransform(0.0, z))
    pts = apply(m, g.points).ravel()
    w = np.repeat(g.weights, g.points.shape[1])
    return pts, w
