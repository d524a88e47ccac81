"""Grasp-prediction metrics: Top-k success, accuracy/recall, collision-free ratio."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from shapely.geometry import Point

from .data.collision import Gripper, collision_check
from .data.sample import Sample
from .data.toy import antipodal, polygon_rc
from .geometry import ANGLE_THRESHOLD, IOU_THRESHOLD, MAX_WIDTH, Grasp, is_success
from .maps import NMS_RADIUS, SMOOTH_SIGMA, ConfigMaps, extract_grasps
from .model import GraspNet, predict_batch

log = logging.getLogger(__name__)

Oracle = Callable[[Sample, Grasp], int]


@dataclass
class EvalReport:
    top1: float = math.nan
    top5: float = math.nan
    accuracy: float = math.nan
    recall: float = math.nan
    collision_free: float = math.nan
    n_samples: int = 0

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        vals = dict(line.split(" = ", 1) for line in text.splitlines() if " = " in line)
        return cls(**{f.name: (int if f.name == "n_samples" else float)(vals[f.name]) for f in fields(cls) if f.name in vals})

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    def append_csv(self, path, **extra) -> None:
        row = {**extra, **asdict(self)}
        path = Path(path)
        new = not path.exists()
        with path.open("a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            if new:
                w.writeheader()
            w.writerow(row)


def _maps_for(model_or_maps, dataset: Sequence[Sample]) -> list[ConfigMaps]:
    if isinstance(model_or_maps, GraspNet):
        return predict_batch(model_or_maps, [s.depth for s in dataset])
    maps = list(model_or_maps)
    if len(maps) != len(dataset):
        raise ValueError("one prediction per sample is required")
    return maps


@dataclass(frozen=True)
class SuccessCriteria:
    iou: float = IOU_THRESHOLD
    angle: float = ANGLE_THRESHOLD
    height_ratio: float = 0.5
    sigma: float = SMOOTH_SIGMA
    nms_radius: int = NMS_RADIUS
    max_width: float = MAX_WIDTH  # pixels represented by a width map value of 1


def first_hit_ranks(maps: Sequence[ConfigMaps], dataset: Sequence[Sample], k: int,
                    crit: SuccessCriteria = SuccessCriteria()) -> list[int | None]:
    """Per sample, the 1-based rank of the first successful grasp among the top ``k`` (None if none)."""
    out = []
    for m, s in zip(maps, dataset):
        if not s.labels:
            raise ValueError(f"validation sample {s.id!r} has no labels")
        grasps = extract_grasps(m, k, crit.sigma, crit.nms_radius, crit.max_width)
        ok = (i for i, g in enumerate(grasps, 1) if is_success(g, s.labels, crit.iou, crit.angle, crit.height_ratio))
        out.append(next(ok, None))
    return out


def topk_hits(maps: Sequence[ConfigMaps], dataset: Sequence[Sample], k: int, crit: SuccessCriteria = SuccessCriteria()) -> list[bool]:
    return [r is not None for r in first_hit_ranks(maps, dataset, k, crit)]


def topk_success(model, dataset: Sequence[Sample], k: int, crit: SuccessCriteria = SuccessCriteria()) -> float:
    """Percentage of samples where one of the ``k`` strongest peaks matches a label.

    ``model`` is a network or a precomputed list of maps, one per sample.
    """
    if not dataset:
        raise ValueError("empty dataset")
    hits = topk_hits(_maps_for(model, dataset), dataset, k, crit)
    return 100.0 * sum(hits) / len(hits)


def analytic_oracle(sample: Sample, g: Grasp, gripper: Gripper | None = None) -> int:
    """1 if ``g`` is an antipodal, collision-free grasp on a toy object, else 0.

    Needs the toy outlines in ``sample.meta['shapes']``; for other data use
    ``label_oracle``.
    """
    shapes = sample.meta.get("shapes")
    if not shapes:
        raise ValueError(f"sample {sample.id!r} carries no shape metadata; use label_oracle")
    gripper = gripper or Gripper.for_image(sample.shape[0])
    if g.width <= 0:
        return 0
    polys = [polygon_rc(sh["polygon"]) for sh in shapes]
    c = Point(g.center_col, g.center_row)
    owner = next((p for p in reversed(polys) if p.contains(c)), None)
    if owner is None:
        return 0
    if not antipodal(owner, g, gripper.max_width):
        return 0
    return int(not collision_check(g, sample.depth, gripper))


def label_oracle(sample: Sample, g: Grasp) -> int:
    return int(is_success(g, sample.labels))


def grasp_at(maps: ConfigMaps, row: int, col: int, max_width: float = MAX_WIDTH) -> Grasp:
    s, c = float(maps.phi_s[row, col]), float(maps.phi_c[row, col])
    angle = 0.5 * math.atan2(s, c)
    width = float(np.clip(maps.width[row, col] * max_width, 0.0, MAX_WIDTH))
    q = float(np.clip(maps.q[row, col], 0.0, 1.0))
    return Grasp(row, col, angle, width, q)


def accuracy_recall(
    model,
    dataset: Sequence[Sample],
    oracle: Oracle = analytic_oracle,
    n_samples: int = 100,
    threshold: float = 0.5,
    seed: int = 0,
    max_width: float = MAX_WIDTH,
) -> tuple[float, float]:
    """Per-image accuracy and recall of thresholded quality at uniformly drawn pixels, averaged.

    Images without any oracle-positive draw have no recall and are left out of
    the recall average (100 if no image has one).
    """
    if not dataset:
        raise ValueError("empty dataset")
    maps = _maps_for(model, dataset)
    accs, recs = [], []
    for i, (m, s) in enumerate(zip(maps, dataset)):
        rng = np.random.default_rng([seed, i])
        h, w = s.shape
        flat = rng.integers(0, h * w, size=n_samples)
        tp = tn = fp = fn = 0
        for f in flat:
            r, c = divmod(int(f), w)
            g = grasp_at(m, r, c, max_width)
            try:
                truth = bool(oracle(s, g))
            except Exception as exc:  # oracle failures only shrink the draw
                log.warning("oracle failed on %s at (%d, %d): %s", s.id, r, c, exc)
                continue
            pos = g.quality >= threshold
            tp += pos and truth
            tn += (not pos) and (not truth)
            fp += pos and not truth
            fn += (not pos) and truth
        n = tp + tn + fp + fn
        if n == 0:
            continue
        accs.append((tp + tn) / n)
        if tp + fn:
            recs.append(tp / (tp + fn))
    acc = 100.0 * float(np.mean(accs)) if accs else 0.0
    rec = 100.0 * float(np.mean(recs)) if recs else 100.0
    return acc, rec


def collision_free_ratio(model, dataset: Sequence[Sample], gripper: Gripper | None = None,
                         crit: SuccessCriteria = SuccessCriteria()) -> float:
    """Percentage of Top-1 grasps whose fingers clear the scene."""
    if not dataset:
        raise ValueError("empty dataset")
    maps = _maps_for(model, dataset)
    ok = 0
    for m, s in zip(maps, dataset):
        grip = gripper or Gripper.for_image(s.shape[0])
        top = extract_grasps(m, 1, crit.sigma, crit.nms_radius, crit.max_width)
        if top and not collision_check(top[0], s.depth, grip):
            ok += 1
    return 100.0 * ok / len(dataset)


def evaluate(model, dataset: Sequence[Sample], crit: SuccessCriteria = SuccessCriteria(),
             oracle: Oracle | None = None, gripper: Gripper | None = None,
             quality_threshold: float = 0.5, seed: int = 0, collision: bool = False) -> EvalReport:
    """All metrics from a single pass of predictions."""
    maps = _maps_for(model, dataset)
    rep = EvalReport(n_samples=len(dataset))
    rep.top1 = topk_success(maps, dataset, 1, crit)
    rep.top5 = topk_success(maps, dataset, 5, crit)
    if oracle is None:
        oracle = analytic_oracle if all(s.meta.get("shapes") for s in dataset) else label_oracle
    rep.accuracy, rep.recall = accuracy_recall(maps, dataset, oracle, threshold=quality_threshold, seed=seed,
                                                 max_width=crit.max_width)
    if collision:
        rep.collision_free = collision_free_ratio(maps, dataset, gripper, crit)
    return rep
