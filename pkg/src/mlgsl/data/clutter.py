"""Multi-object scenes fused from single-object samples."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .augment import Transform, apply_transform
from .collision import Gripper, collision_check
from .sample import ClutterScene, Sample, background_depth, foreground_mask, sample_foreground

STACK_LIFT = 0.005
CLUTTER_ZOOM = (0.6, 1.0)
PLACEMENT_MARGIN = 0.15
MAX_RETRIES = 10


def isolate(s: Sample) -> Sample:
    """The sample with everything but its foreground segment pushed to the background plane."""
    bg = background_depth(s.depth, s.meta)
    fg = sample_foreground(s)
    return Sample(np.where(fg, s.depth, bg).astype(np.float32), s.labels, dict(s.meta, background=bg))


def _centroid(mask: np.ndarray) -> tuple[float, float]:
    rr, cc = np.nonzero(mask)
    return float(rr.mean()), float(cc.mean())


def place_object(s: Sample, rng: np.random.Generator, zoom_range=CLUTTER_ZOOM, margin: float = PLACEMENT_MARGIN) -> Transform:
    """Random rotation and zoom, shifted so the object's centroid lands inside the frame margins."""
    h = s.shape[0]
    rot = float(rng.uniform(-math.pi, math.pi))
    zoom = float(rng.uniform(*zoom_range))
    base = Transform(rot, zoom)
    r, c = _centroid(sample_foreground(s))
    m = base.matrix(s.shape)
    x, y = m @ np.array([c, r, 1.0])
    lo, hi = margin * (h - 1), (1 - margin) * (h - 1)
    tr, tc = rng.uniform(lo, hi), rng.uniform(lo, hi)
    return Transform(rot, zoom, (float(tr - y), float(tc - x)))


def composite(depths: Sequence[np.ndarray], background: float) -> tuple[np.ndarray, np.ndarray]:
    """Pixelwise nearest surface and the index of the object that owns it (-1 = background)."""
    stack = np.stack(depths)
    depth = stack.min(axis=0)
    owner = stack.argmin(axis=0).astype(np.int16)
    owner[~foreground_mask(depth, background)] = -1
    return depth.astype(np.float32), owner


def fuse_clutter(
    sources: Sequence[Sample],
    n_objects: int,
    seed,
    gripper: Gripper | None = None,
    zoom_range=CLUTTER_ZOOM,
    transforms: Sequence[Transform] | None = None,
    max_retries: int = MAX_RETRIES,
) -> ClutterScene:
    """Compose ``n_objects`` randomly chosen sources into one scene.

    Each object is segmented, rotated, zoomed, shifted and lifted slightly
    above the previous ones, then the scene is the per-pixel minimum depth.
    Labels survive only where their own object stays visible at the grasp
    center and the fingers clear every neighbour. ``transforms`` pins the
    placements (one per object) instead of drawing them.
    """
    if not 1 <= n_objects <= 5:
        raise ValueError("n_objects must be between 1 and 5")
    if not sources:
        raise ValueError("no source samples")
    shape = sources[0].shape
    gripper = gripper or Gripper.for_image(shape[0])
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        picks = [int(i) for i in rng.choice(len(sources), size=n_objects, replace=len(sources) < n_objects)]
        placed, provenance = [], []
        for j, i in enumerate(picks):
            src = isolate(sources[i])
            t = transforms[j] if transforms is not None else place_object(src, rng, zoom_range)
            moved = apply_transform(src, t)
            lift = STACK_LIFT * j
            bg = background_depth(src.depth, src.meta)
            obj = foreground_mask(moved.depth, bg)
            depth = np.where(obj, moved.depth - lift, bg).astype(np.float32)
            placed.append((Sample(depth, moved.labels, moved.meta), obj))
            provenance.append({"source": sources[i].id, "transform": t.to_dict(), "lift": lift})
        bg = background_depth(sources[picks[0]].depth, sources[picks[0]].meta)
        depth, owner = composite([p.depth for p, _ in placed], bg)
        segments = np.stack([owner == j for j in range(n_objects)])
        labels, shapes = [], []
        for j, (p, _) in enumerate(placed):
            for g in p.labels:
                if owner[g.center] != j:
                    continue
                if collision_check(g, depth, gripper):
                    continue
                labels.append(g)
            shapes.extend(p.meta.get("shapes", []))
        if labels:
            meta = {
                "id": f"clutter-{'-'.join(str(i) for i in picks)}",
                "background": bg,
                "shapes": shapes,
                "augment": [],
                "sources": [sources[i].id for i in picks],
            }
            return ClutterScene(Sample(depth, tuple(labels), meta), segments, provenance)
        if transforms is not None:
            break
    raise ValueError(f"every label was pruned after {max_retries} placements")
