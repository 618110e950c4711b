"""Closed-form weighted rigid alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateAlignmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.rotation.T + self.translation

    def as_list(self) -> list[float]:
        """Rotation row-major followed by the translation (12 numbers)."""
        return self.rotation.ravel().tolist() + self.translation.tolist()

    @classmethod
    def from_list(cls, v) -> "RigidMotion":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:9].reshape(3, 3), v[9:12])

    def angle_to(self, other: "RigidMotion") -> float:
        """Rotation angle (radians) of ``self.rotation^T @ other.rotation``."""
        c = (np.trace(self.rotation.T @ other.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _kabsch(H: np.ndarray, allow_reflection: bool) -> np.ndarray:
    """Rotations maximising ``trace(R H)`` for a stack of covariances ``H``."""
    U, s, Vt = np.linalg.svd(H)
    if allow_reflection:
        return np.swapaxes(Vt, -1, -2) @ np.swapaxes(U, -1, -2)
    d = np.sign(np.linalg.det(np.swapaxes(Vt, -1, -2) @ np.swapaxes(U, -1, -2)))
    d = np.where(d == 0, 1.0, d)
    D = np.zeros(H.shape)
    D[..., 0, 0] = 1.0
    D[..., 1, 1] = 1.0
    D[..., 2, 2] = d
    return np.swapaxes(Vt, -1, -2) @ D @ np.swapaxes(U, -1, -2)


def _check_weights(n: int, weights) -> np.ndarray:
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError("weights must have one entry per point")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative with positive sum")
    return w


def rigid_align(source, target, weights=None, allow_reflection: bool = False) -> tuple[RigidMotion, float]:
    """Weighted least-squares rigid motion taking ``source`` onto ``target``.

    Returns the motion and the residual ``sqrt(sum w |R x + t - y|^2)``.
    With unit weights this is the discrete Procrustes distance; with
    weights summing to one it is the weighted RMS error.

    Raises
    ------
    DegenerateAlignmentError
        The weighted cross-covariance has rank below 2 (collinear points),
        so the rotation is not determined.
    """
    X = np.asarray(source, dtype=np.float64)
    Y = np.asarray(target, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise ValueError("source and target must be matching (n, 3) arrays")
    if len(X) < 3:
        raise ValueError("rigid alignment needs at least 3 points")
    w = _check_weights(len(X), weights)
    W = w.sum()
    cx = w @ X / W
    cy = w @ Y / W
    Xc, Yc = X - cx, Y - cy
    H = (Xc * w[:, None]).T @ Yc
    s = np.linalg.svd(H, compute_uv=False)
    if s[0] <= 0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateAlignmentError("degenerate configuration: cross-covariance rank < 2")
    R = _kabsch(H, allow_reflection)
    t = cy - R @ cx
    r = X @ R.T + t - Y
    resid = float(np.sqrt(max(np.sum(w * np.einsum("ij,ij->i", r, r)), 0.0)))
    return RigidMotion(R, t), resid


def rigid_residuals(source, targets, weights, allow_reflection: bool = False) -> np.ndarray:
    """Optimal residuals for one source against a stack of targets.

    ``targets`` has shape (k, n, 3).  Uses the closed form
    ``sum w |x|^2 + sum w |y|^2 - 2 trace(S)`` with the signed singular
    values, so no motion is built explicitly.  Degenerate stacks give the
    residual of the best (possibly non-unique) rotation.
    """
    X = np.asarray(source, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    w = _check_weights(X.shape[0], weights)
    W = w.sum()
    Xc = X - w @ X / W
    cy = np.einsum("n,knd->kd", w, Y) / W
    Yc = Y - cy[:, None, :]
    H = np.einsum("nd,n,kne->kde", Xc, w, Yc)
    s = np.linalg.svd(H, compute_uv=False)
    if not allow_reflection:
        d = np.sign(np.linalg.det(H))
        s[:, 2] *= np.where(d == 0, 1.0, d)
    ss = np.sum(w * np.einsum("nd,nd->n", Xc, Xc)) + np.einsum("n,knd,knd->k", w, Yc, Yc) - 2.0 * s.sum(axis=1)
    return np.sqrt(np.maximum(ss, 0.0))


def discrete_procrustes(X, Y, allow_reflection: bool = False) -> float:
    """Procrustes distance between matched landmark configurations.

    ``min_R (sum |R(X_n) - Y_n|^2)^(1/2)`` over proper rigid motions.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise ValueError(f"landmark counts differ: {len(X)} vs {len(Y)}")
    return rigid_align(X, Y, None, allow_reflection)[1]
