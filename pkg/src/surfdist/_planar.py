"""Point location in planar triangulations of the unit disk."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

_EPS = 1e-10


def signed_areas(z: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = z[faces[:, 0]], z[faces[:, 1]], z[faces[:, 2]]
    return 0.5 * np.imag(np.conj(b - a) * (c - a))


def lumped_areas(z: np.ndarray, faces: np.ndarray) -> np.ndarray:
    area = np.abs(signed_areas(z, faces))
    return np.bincount(faces.ravel(), weights=np.repeat(area / 3.0, 3), minlength=len(z))


class PlanarLocator:
    """Locate complex query points in an injective planar triangulation.

    The boundary loop must be convex and counterclockwise (true for a disk
    flattening with the boundary pinned to the circle).
    """

    def __init__(self, z: np.ndarray, faces: np.ndarray, boundary_loop: np.ndarray):
        self.z = np.asarray(z, dtype=np.complex128)
        self.faces = np.asarray(faces, dtype=np.int64)
        a = self.z[self.faces[:, 0]]
        e1 = self.z[self.faces[:, 1]] - a
        e2 = self.z[self.faces[:, 2]] - a
        det = e1.real * e2.imag - e1.imag * e2.real
        self._a = a
        # rows of the inverse of [[e1.re, e2.re], [e1.im, e2.im]]
        self._inv = np.stack(
            [np.stack([e2.imag, -e2.real], -1), np.stack([-e1.imag, e1.real], -1)], axis=1
        ) / det[:, None, None]
        cent = (a + self.z[self.faces[:, 1]] + self.z[self.faces[:, 2]]) / 3.0
        self._tree = cKDTree(np.column_stack([cent.real, cent.imag]))

        loop = np.asarray(boundary_loop)
        ang = np.angle(self.z[loop])
        order = np.argsort(ang, kind="stable")
        self._bang = ang[order]
        self._bz = self.z[loop][order]

    def _bary(self, q: np.ndarray, face_idx: np.ndarray) -> np.ndarray:
        d = q - self._a[face_idx]
        inv = self._inv[face_idx]
        l1 = inv[..., 0, 0] * d.real + inv[..., 0, 1] * d.imag
        l2 = inv[..., 1, 0] * d.real + inv[..., 1, 1] * d.imag
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def _chord(self, q: np.ndarray):
        """Boundary chord (p0, p1) whose angular sector contains each query."""
        ang = np.angle(q)
        n = len(self._bang)
        j = np.searchsorted(self._bang, ang, side="right")
        p0 = self._bz[(j - 1) % n]
        p1 = self._bz[j % n]
        return p0, p1

    def inside_polygon(self, q: np.ndarray) -> np.ndarray:
        p0, p1 = self._chord(q)
        cross = np.imag(np.conj(p1 - p0) * (q - p0))
        return cross >= -_EPS * np.abs(p1 - p0)

    def project_inside(self, q: np.ndarray) -> np.ndarray:
        """Move points outside the boundary polygon onto its nearest chord."""
        q = np.asarray(q, dtype=np.complex128).copy()
        out = ~self.inside_polygon(q)
        if np.any(out):
            p0, p1 = self._chord(q[out])
            e = p1 - p0
            t = np.clip(np.real(np.conj(e) * (q[out] - p0)) / np.abs(e) ** 2, 0.0, 1.0)
            q[out] = p0 + t * e
        return q

    def locate(self, q, clamp: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Return (face index, barycentric) per query; face -1 when outside.

        With ``clamp`` every query is first projected into the polygon so a
        face is always found.
        """
        q = np.atleast_1d(np.asarray(q, dtype=np.complex128))
        if clamp:
            q = self.project_inside(q)
        nq = len(q)
        faces = np.full(nq, -1, dtype=np.int64)
        bary = np.zeros((nq, 3))
        if nq == 0:
            return faces, bary
        todo = np.flatnonzero(self.inside_polygon(q)) if not clamp else np.arange(nq)
        nf = len(self.faces)
        for k in (8, 32, 128):
            if len(todo) == 0:
                break
            k = min(k, nf)
            _, cand = self._tree.query(np.column_stack([q[todo].real, q[todo].imag]), k=k)
            cand = cand.reshape(len(todo), k)
            b = self._bary(q[todo, None], cand)
            ok = b.min(axis=-1) >= -_EPS
            hit = ok.any(axis=1)
            first = np.argmax(ok, axis=1)
            rows = np.flatnonzero(hit)
            faces[todo[rows]] = cand[rows, first[rows]]
            bary[todo[rows]] = b[rows, first[rows]]
            todo = todo[~hit]
            if k == nf:
                break
        for i in todo:
            # exhaustive fallback: face maximising the smallest coordinate
            b = self._bary(np.full(nf, q[i]), np.arange(nf))
            j = int(np.argmax(b.min(axis=1)))
            faces[i] = j
            bary[i] = b[j]
        neg = faces >= 0
        if np.any(neg):
            bb = np.clip(bary[neg], 0.0, None)
            bary[neg] = bb / bb.sum(axis=1, keepdims=True)
        return faces, bary

    def interpolate(self, values: np.ndarray, q, outside: float = 0.0) -> np.ndarray:
        faces, bary = self.locate(q)
        out = np.full(len(faces), outside, dtype=np.float64)
        ok = faces >= 0
        out[ok] = np.einsum("nk,nk->n", bary[ok], values[self.faces[faces[ok]]])
        return out
