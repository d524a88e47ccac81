"""Heatmap overlays and training-curve figures."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .geometry import Grasp, to_rectangle
from .maps import ConfigMaps

MIN_SIDE = 300  # small frames are upscaled so the grasp lines stay legible


def depth_to_u8(depth: np.ndarray) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float64)
    lo, hi = float(d.min()), float(d.max())
    if hi - lo < 1e-12:
        return np.full(d.shape, 128, dtype=np.uint8)
    # near is bright
    return np.round(255 * (hi - d) / (hi - lo)).astype(np.uint8)


def heatmap(q: np.ndarray) -> np.ndarray:
    """8-bit BGR color image of a quality map in [0, 1]."""
    u8 = np.round(255 * np.clip(np.asarray(q, dtype=np.float64), 0, 1)).astype(np.uint8)
    return cv2.applyColorMap(u8, cv2.COLORMAP_JET)


def overlay(depth: np.ndarray, maps: ConfigMaps, grasps: Sequence[Grasp], alpha: float = 0.5) -> np.ndarray:
    """Depth in gray, predicted quality blended on top, grasps drawn as rectangles.

    Jaw sides are drawn in white, the other two sides in black; the best grasp
    is thicker.
    """
    gray = cv2.cvtColor(depth_to_u8(depth), cv2.COLOR_GRAY2BGR)
    img = cv2.addWeighted(gray, 1 - alpha, heatmap(maps.numpy().q), alpha, 0)
    scale = max(1, int(np.ceil(MIN_SIDE / max(img.shape[:2]))))
    if scale > 1:
        img = cv2.resize(img, None, fx=scale, fy=scale, interpolation=cv2.INTER_NEAREST)
    for i, g in enumerate(grasps):
        if g.width <= 0:
            continue
        pts = (to_rectangle(g).corners[:, ::-1] + 0.5) * scale  # (x, y) at pixel centers
        pts = np.round(pts).astype(np.int32)
        thick = 2 if i == 0 else 1
        for a, b, color in ((0, 1, (0, 0, 0)), (1, 2, (255, 255, 255)), (2, 3, (0, 0, 0)), (3, 0, (255, 255, 255))):
            cv2.line(img, tuple(map(int, pts[a])), tuple(map(int, pts[b])), color, thick, cv2.LINE_AA)
    return img


def save_image(path, img: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img):
        raise OSError(f"could not write {path}")
    return path


def read_curve(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no rows")
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def plot_curves(curves: dict[str, dict[str, list[float]]], out, metric: str = "val_top1") -> Path:
    """One line per run of ``metric`` against epoch."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, c in curves.items():
        if metric not in c:
            raise ValueError(f"run {name!r} has no column {metric!r}")
        ax.plot(c["epoch"], c[metric], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel(metric)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
