"""Training losses over predicted configuration maps.

``mlgsl`` treats every labeled grasp as a draw from the categorical pixel
distribution proportional to predicted quality, plus Gaussian angle and width
terms read at the labeled pixel, and returns the negative log-likelihood summed
over labels. ``mlgsl_log``, ``pix_mse`` and ``img_mse`` are the comparison losses.

All functions work on a single image (maps of shape ``(H, W)``); ``batch_loss``
sums over labels per image and averages over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import torch

from .geometry import Grasp
from .maps import ConfigMaps, SparseTargets, encode_labels_sparse

EPS = 1e-6
LOG_DELTA = 1e-8

Labels = Union[Sequence[Grasp], SparseTargets]


@dataclass
class LossValue:
    total: torch.Tensor
    pixel_term: torch.Tensor
    angle_term: torch.Tensor
    width_term: torch.Tensor

    def item(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in ("total", "pixel_term", "angle_term", "width_term")}


def _t(a, like: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(a), dtype=dtype)


def _as_torch(maps: ConfigMaps) -> ConfigMaps:
    q = _t(maps.q)
    return ConfigMaps(q, _t(maps.phi_s, q), _t(maps.phi_c, q), _t(maps.width, q))


def _targets(labels: Labels, shape) -> SparseTargets:
    if isinstance(labels, SparseTargets):
        t = labels
    else:
        t = encode_labels_sparse(labels, tuple(shape))
    if len(t) == 0:
        raise ValueError("loss is undefined without labels")
    if t.index.min() < 0 or t.index.max() >= shape[0] * shape[1]:
        raise ValueError("label index outside the image")
    return t


def pixel_log_likelihood(q, index: int, eps: float = EPS) -> torch.Tensor:
    """``log P(index | Q)`` for the categorical distribution proportional to clamped ``Q``."""
    q = _t(q)
    flat = q.reshape(-1)
    if not 0 <= int(index) < flat.numel():
        raise ValueError(f"pixel index {index} outside a map of {flat.numel()} pixels")
    qc = flat.clamp(eps, 1.0)
    return torch.log(qc[int(index)]) - torch.log(qc.sum())


def _gather(maps: ConfigMaps, t: SparseTargets):
    idx = torch.as_tensor(t.index)
    like = maps.q
    q = maps.q.reshape(-1)[idx]
    s = maps.phi_s.reshape(-1)[idx]
    c = maps.phi_c.reshape(-1)[idx]
    w = maps.width.reshape(-1)[idx]
    return q, s, c, w, _t(t.sin2, like), _t(t.cos2, like), _t(t.width, like)


def _nll_pixels(maps: ConfigMaps, t: SparseTargets, eps: float) -> torch.Tensor:
    qc = maps.q.reshape(-1).clamp(eps, 1.0)
    idx = torch.as_tensor(t.index)
    # labels share one normalizer
    return len(t) * torch.log(qc.sum()) - torch.log(qc[idx]).sum()


def mlgsl(pred: ConfigMaps, labels: Labels, eps: float = EPS) -> LossValue:
    pred = _as_torch(pred)
    t = _targets(labels, pred.shape)
    _, s, c, w, ts, tc, tw = _gather(pred, t)
    pixel = _nll_pixels(pred, t, eps)
    angle = ((s - ts) ** 2 + (c - tc) ** 2).sum()
    width = ((w - tw) ** 2).sum()
    return LossValue(pixel + angle + width, pixel, angle, width)


def mlgsl_log(pred: ConfigMaps, labels: Labels, eps: float = EPS, delta: float = LOG_DELTA) -> LossValue:
    pred = _as_torch(pred)
    t = _targets(labels, pred.shape)
    _, s, c, w, ts, tc, tw = _gather(pred, t)
    pixel = _nll_pixels(pred, t, eps)
    angle = torch.log((s - ts) ** 2 + (c - tc) ** 2 + delta).sum()
    width = torch.log((w - tw) ** 2 + delta).sum()
    return LossValue(pixel + angle + width, pixel, angle, width)


def pix_mse(pred: ConfigMaps, labels: Labels) -> torch.Tensor:
    """Squared error at the labeled pixels only, with target quality 1."""
    pred = _as_torch(pred)
    t = _targets(labels, pred.shape)
    q, s, c, w, ts, tc, tw = _gather(pred, t)
    return ((q - 1.0) ** 2 + (s - ts) ** 2 + (c - tc) ** 2 + (w - tw) ** 2).sum()


def img_mse(pred: ConfigMaps, dense: ConfigMaps) -> torch.Tensor:
    """Per-pixel mean squared error of each grid against the densified labels, summed over grids."""
    pred = _as_torch(pred)
    if tuple(pred.shape) != tuple(dense.shape):
        raise ValueError(f"shape mismatch: {pred.shape} vs {dense.shape}")
    total = 0.0
    for p, d in zip(pred.grids, dense.grids):
        total = total + ((p - _t(d, p)) ** 2).mean()
    return total


LOSS_NAMES = ("mlgsl", "img_mse", "mlgsl_log", "pix_mse")


def batch_loss(name: str, pred: ConfigMaps, targets: Sequence) -> torch.Tensor:
    """Mean over the batch of a per-image loss.

    ``pred`` holds ``(B, H, W)`` tensors. ``targets`` holds one entry per image:
    a ``ConfigMaps`` of dense targets for ``img_mse``, labels otherwise.
    """
    fn: Callable = {
        "mlgsl": lambda p, t: mlgsl(p, t).total,
        "mlgsl_log": lambda p, t: mlgsl_log(p, t).total,
        "pix_mse": pix_mse,
        "img_mse": img_mse,
    }[name]
    if name == "img_mse":
        dense = ConfigMaps(*(torch.stack([_t(getattr(t, f), pred.q) for t in targets]) for f in ("q", "phi_s", "phi_c", "width")))
        return img_mse(pred, dense)
    per = [fn(pred[i], targets[i]) for i in range(len(targets))]
    return torch.stack(per).mean()
