"""Pixmap and matplotlib renderings of distance matrices and test statistics."""

from __future__ import annotations

import numpy as np

from .matrix import DistanceMatrix


def _scaled(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    top = float(values[mask].max()) if mask.any() else 0.0
    t = np.zeros_like(values)
    if top > 0:
        t[mask] = values[mask] / top
    return np.clip(t, 0.0, 1.0)


def heatmap_rgb(D_upper: DistanceMatrix, D_lower: DistanceMatrix, order=None) -> np.ndarray:
    """(N, N, 3) uint8 image: upper triangle from ``D_upper``, lower from ``D_lower``.

    Red-blue map ``(255 t, 0, 255 (1 - t))`` with ``t`` the cell divided by
    its own triangle's maximum; the diagonal is deep blue.
    """
    order = list(D_upper.ids) if order is None else list(order)
    U = D_upper.reorder(order).values
    L = D_lower.reorder(order).values
    n = len(order)
    up = np.triu(np.ones((n, n), bool), 1)
    lo = up.T
    t = _scaled(U, up) * up + _scaled(L, lo) * lo
    img = np.empty((n, n, 3), np.uint8)
    img[..., 0] = np.round(255 * t).astype(np.uint8)
    img[..., 1] = 0
    img[..., 2] = np.round(255 * (1.0 - t)).astype(np.uint8)
    return img


def write_p6(img: np.ndarray, path) -> None:
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_p6(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit P6 pixmap")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], np.uint8).reshape(h, w, 3)


def heatmap_export(D_upper: DistanceMatrix, D_lower: DistanceMatrix, order, path) -> np.ndarray:
    """Write the two-triangle heatmap as a binary P6 pixmap, one pixel per cell."""
    img = heatmap_rgb(D_upper, D_lower, order)
    write_p6(img, path)
    return img


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def heatmap_figure(D_upper: DistanceMatrix, D_lower: DistanceMatrix, order, path, title: str = "") -> None:
    """Labelled PNG version of the heatmap."""
    plt = _pyplot()
    img = heatmap_rgb(D_upper, D_lower, order)
    n = len(order)
    fig, ax = plt.subplots(figsize=(4 + 0.12 * n, 4 + 0.12 * n))
    ax.imshow(img, interpolation="nearest")
    if n <= 60:
        ax.set_xticks(range(n))
        ax.set_yticks(range(n))
        ax.set_xticklabels(order, rotation=90, fontsize=6)
        ax.set_yticklabels(order, fontsize=6)
    ax.set_title(title or f"{D_upper.metric} (upper) / {D_lower.metric} (lower)")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def mantel_figure(result, path, title: str = "Mantel permutation null") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(result.null, bins=50, color="0.6")
    ax.axvline(result.r, color="C3", lw=1.5)
    ax.set_xlabel("permuted r")
    ax.set_ylabel("count")
    ax.set_title(f"{title}: r = {result.r:.3f}, p = {result.significance:.4g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def flatmap_figure(flat, path, title: str = "") -> None:
    """Disk triangulation coloured by the hyperbolic density."""
    plt = _pyplot()
    z = flat.disk_coords
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    tc = ax.tripcolor(z.real, z.imag, flat.faces, flat.hyper_factor, shading="gouraud", cmap="viridis")
    ax.set_aspect("equal")
    ax.set_axis_off()
    fig.colorbar(tc, ax=ax, shrink=0.8)
    ax.set_title(title or flat.source_id)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
