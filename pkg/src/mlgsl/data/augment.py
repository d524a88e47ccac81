"""Label sub-sampling and rotate/zoom/translate augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from ..geometry import MAX_WIDTH, Grasp
from .sample import Sample, background_depth, foreground_mask

ROTATION_JITTER = 0.2
ZOOM_RANGE = (0.8, 1.1)


def downsample_labels(s: Sample, k: int, seed) -> Sample:
    """Keep a uniformly drawn subset of ``min(k, len(labels))`` labels (original order)."""
    if not s.labels:
        raise ValueError(f"sample {s.id!r} has no labels to sub-sample")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= len(s.labels):
        return s
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(s.labels), size=k, replace=False))
    return s.with_labels(s.labels[i] for i in keep)


@dataclass(frozen=True)
class Transform:
    """Rotation (radians, counterclockwise on screen) and zoom about the image
    center, then a shift of ``(drow, dcol)`` pixels, into an ``out_size`` frame."""

    rotation: float = 0.0
    zoom: float = 1.0
    shift: tuple[float, float] = (0.0, 0.0)
    out_size: int | None = None

    def matrix(self, in_shape) -> np.ndarray:
        """2x3 affine on ``(x=col, y=row)`` points."""
        h, w = in_shape
        out = self.out_size or h
        s = self.zoom * out / h
        c, si = math.cos(self.rotation), math.sin(self.rotation)
        # screen-counterclockwise rotation in a y-down frame
        a = np.array([[c, si], [-si, c]]) * s
        src_c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        dst_c = np.array([(out - 1) / 2.0 + self.shift[1], (out - 1) / 2.0 + self.shift[0]])
        return np.hstack([a, (dst_c - a @ src_c)[:, None]])

    def scale(self, in_shape) -> float:
        return self.zoom * (self.out_size or in_shape[0]) / in_shape[0]

    def to_dict(self) -> dict:
        return {"rotation": self.rotation, "zoom": self.zoom, "shift": list(self.shift), "out_size": self.out_size}


def transform_points_rc(pts_rc, m: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts_rc, dtype=np.float64)
    xy = pts[:, ::-1] @ m[:, :2].T + m[:, 2]
    return xy[:, ::-1]


def apply_transform(s: Sample, t: Transform, require_foreground: bool = True) -> Sample:
    """Warp depth, labels and toy outlines with the same affine map.

    Labels whose center leaves the frame (or, with ``require_foreground``,
    lands on background) are dropped; widths scale with the zoom and are
    clipped to the gripper range.
    """
    h, w = s.shape
    out = t.out_size or h
    m = t.matrix(s.shape)
    bg = background_depth(s.depth, s.meta)
    depth = cv2.warpAffine(
        s.depth.astype(np.float32), m, (out, out), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=bg,
    )
    fg = foreground_mask(depth, bg) if require_foreground else None
    scale = t.scale(s.shape)
    labels = []
    if s.labels:
        centers = transform_points_rc([g.center for g in s.labels], m)
        for g, (r, c) in zip(s.labels, centers):
            ri, ci = int(round(r)), int(round(c))
            if not (0 <= ri < out and 0 <= ci < out):
                continue
            if fg is not None and not fg[ri, ci]:
                continue
            width = min(max(g.width * scale, 0.0), MAX_WIDTH)
            labels.append(Grasp(ri, ci, g.angle + t.rotation, width, g.quality))
    meta = dict(s.meta)
    if "shapes" in meta:
        meta["shapes"] = [
            {**sh, "polygon": transform_points_rc(sh["polygon"], m).tolist()} for sh in meta["shapes"]
        ]
    meta["augment"] = list(meta.get("augment", [])) + [t.to_dict()]
    return Sample(depth, tuple(labels), meta)


def random_transform(rng: np.random.Generator, zoom_range=ZOOM_RANGE, jitter: float = ROTATION_JITTER,
                     out_size: int | None = None) -> Transform:
    rot = int(rng.integers(4)) * math.pi / 2 + float(rng.uniform(-jitter, jitter))
    zoom = float(rng.uniform(*zoom_range))
    return Transform(rot, zoom, (0.0, 0.0), out_size)


def augment(s: Sample, seed, out_size: int | None = None, zoom_range=ZOOM_RANGE, max_tries: int = 10) -> Sample:
    """Random quarter-turn plus jitter, zoom, center crop and resize.

    Retries with fresh draws when every label falls out of the frame and
    raises after ``max_tries``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        out = apply_transform(s, random_transform(rng, zoom_range, out_size=out_size))
        if out.labels:
            return out
    raise ValueError(f"augmentation of {s.id!r} dropped every label {max_tries} times")
