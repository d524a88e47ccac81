"""Depth samples with sparse grasp labels."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import Grasp

FOREGROUND_MARGIN = 0.02


@dataclass(frozen=True)
class Sample:
    """A depth image in meters (larger is farther) and its success labels.

    ``meta`` carries provenance: ``id``, ``background`` depth, toy ``shapes``
    (object outlines as ``(N, 2)`` row/col polygons, bottom to top) and the
    list of transforms applied so far under ``augment``.
    """

    depth: np.ndarray
    labels: tuple[Grasp, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def id(self) -> str:
        return str(self.meta.get("id", ""))

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.depth.shape)

    def with_labels(self, labels) -> "Sample":
        return replace(self, labels=tuple(labels))


@dataclass(frozen=True)
class ClutterScene:
    sample: Sample
    segments: np.ndarray  # (n_objects, H, W) bool, pairwise disjoint
    provenance: list

    @property
    def owner(self) -> np.ndarray:
        """Index of the visible object at each pixel, -1 on background."""
        out = np.full(self.sample.shape, -1, dtype=np.int16)
        for j, m in enumerate(self.segments):
            out[m] = j
        return out


def background_depth(depth: np.ndarray, meta: dict | None = None) -> float:
    if meta and "background" in meta:
        return float(meta["background"])
    return float(np.percentile(depth, 99))


def foreground_mask(depth: np.ndarray, background: float | None = None) -> np.ndarray:
    """Pixels closer than the background plane by more than 2% of the depth range."""
    bg = background_depth(depth) if background is None else background
    span = bg - float(np.min(depth))
    if span <= 0:
        return np.zeros(depth.shape, dtype=bool)
    return depth < bg - FOREGROUND_MARGIN * span


def sample_foreground(s: Sample) -> np.ndarray:
    return foreground_mask(s.depth, background_depth(s.depth, s.meta))


def check_sample(s: Sample) -> None:
    """Raise if a label is off the image, off the foreground, or not quality 1."""
    fg = sample_foreground(s)
    h, w = s.shape
    for i, g in enumerate(s.labels):
        if g.quality != 1.0:
            raise ValueError(f"label {i} has quality {g.quality}, expected 1")
        if not (0 <= g.center_row < h and 0 <= g.center_col < w):
            raise ValueError(f"label {i} center {g.center} outside the image")
        if not fg[g.center]:
            raise ValueError(f"label {i} center {g.center} is on background")
