"""Carrying landmarks across surfaces through correspondence maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..distances.cp import CorrespondenceMap
from ..mesh import LandmarkSet, SurfaceLocator, TriMesh


class PropagationError(ValueError):
    pass


@dataclass(frozen=True)
class PropagationReport:
    landmarks: LandmarkSet
    snap_distance: np.ndarray  # distance from interpolated point to the surface
    degenerate: tuple[str, ...]  # labels whose source face collapses under the map


def _interpolated(cmap: CorrespondenceMap, landmarks: LandmarkSet, source: TriMesh, target: TriMesh):
    if len(cmap) != source.n_vertices:
        raise PropagationError(
            f"map has {len(cmap)} source vertices but the landmark mesh has {source.n_vertices}"
        )
    landmarks.check(source)
    img = cmap.image_points(target)
    corners = source.faces[landmarks.faces]
    P = np.einsum("nk,nkd->nd", landmarks.barycentric, img[corners])
    tri = img[corners]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    degenerate = tuple(lab for lab, a in zip(landmarks.labels, area) if not a > 1e-14 * target.bbox_diagonal**2)
    return P, corners, degenerate


def propagate_landmarks_report(
    cmap: CorrespondenceMap, landmarks: LandmarkSet, source: TriMesh, target: TriMesh
) -> PropagationReport:
    P, corners, degenerate = _interpolated(cmap, landmarks, source, target)
    faces = np.empty(len(P), dtype=np.int64)
    bary = np.empty((len(P), 3))
    dist = np.zeros(len(P))
    locator = None
    for n in range(len(P)):
        # a landmark sitting on a vertex keeps that vertex's stored image exactly
        k = np.flatnonzero(landmarks.barycentric[n] == 1.0)
        if len(k):
            v = corners[n, k[0]]
            faces[n], bary[n] = cmap.faces[v], cmap.barycentric[v]
            continue
        if locator is None:
            locator = SurfaceLocator(target)
        faces[n], bary[n], dist[n] = locator.closest(P[n])
    return PropagationReport(LandmarkSet(landmarks.labels, faces, bary), dist, degenerate)


def propagate_landmarks(
    cmap: CorrespondenceMap, landmarks: LandmarkSet, source: TriMesh, target: TriMesh
) -> LandmarkSet:
    """Map landmarks from ``source`` to ``target`` through ``cmap``.

    The landmark's barycentric weights interpolate the images of its
    face's corners; the resulting point is snapped to the target surface.
    Labels are kept.
    """
    return propagate_landmarks_report(cmap, landmarks, source, target).landmarks


def propagate_along_path(
    maps: Sequence[CorrespondenceMap], landmarks: LandmarkSet, meshes: Sequence[TriMesh]
) -> LandmarkSet:
    """Compose propagations left to right; ``meshes`` has one more entry than ``maps``."""
    if len(meshes) != len(maps) + 1:
        raise PropagationError("need one mesh per path node")
    for k, cmap in enumerate(maps):
        if k and maps[k - 1].target_id != cmap.source_id:
            raise PropagationError(f"path breaks between {maps[k - 1].target_id} and {cmap.source_id}")
        if cmap.source_id != meshes[k].specimen_id or cmap.target_id != meshes[k + 1].specimen_id:
            raise PropagationError(f"map {cmap.source_id}->{cmap.target_id} does not match the mesh path")
    out = landmarks
    for k, cmap in enumerate(maps):
        out = propagate_landmarks(cmap, out, meshes[k], meshes[k + 1])
    return out
