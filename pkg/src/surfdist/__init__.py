"""Landmark-free geometric distances between disk-type surfaces.

Surfaces are flattened conformally onto the unit disk; distances compare
the resulting densities up to disk-preserving Möbius transformations
(``cW``, ``cWn``) or search near-conformal, area-corrected maps for the
best rigid fit (``cP``).
"""

__version__ = "0.1.0"

from .flatten import FlatMap, FlattenError, flatten, recentre
from .hyperbolic import MobiusTransform
from .mesh import LandmarkSet, TriMesh, load_mesh, normalize_mesh, save_mesh, validate_disk_topology

__all__ = [
    "FlatMap",
    "FlattenError",
    "LandmarkSet",
    "MobiusTransform",
    "TriMesh",
    "__version__",
    "flatten",
    "load_mesh",
    "normalize_mesh",
    "recentre",
    "save_mesh",
    "validate_disk_topology",
]
