"""Dataset assembly and the training loop."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig
from .data.augment import augment, downsample_labels
from .data.clutter import fuse_clutter
from .data.io import load_split
from .data.sample import Sample
from .data.toy import gen_toy_dataset
from .evaluation import first_hit_ranks
from .losses import batch_loss
from .maps import encode_labels_dense, encode_labels_sparse
from .model import build, predict_batch, prepare_batch, save

log = logging.getLogger(__name__)

VAL_SEED_OFFSET = 1_000_003
CURVE_FIELDS = ("epoch", "train_loss", "val_top1", "val_top5")


class DivergenceError(RuntimeError):
    pass


@lru_cache(maxsize=8)
def _toy(n: int, seed: int, size: int, prefix: str) -> tuple[Sample, ...]:
    return tuple(gen_toy_dataset(n, seed, image_size=size, prefix=prefix))


@lru_cache(maxsize=8)
def _clutter(n: int, seed: int, size: int, lo: int, hi: int, prefix: str) -> tuple[Sample, ...]:
    sources = _toy(max(n, 20), seed, size, prefix + "src")
    out = []
    for i in range(n):
        k = int(np.random.default_rng([seed, i, 7]).integers(lo, hi + 1))
        scene = fuse_clutter(sources, k, seed=[seed, i])
        meta = dict(scene.sample.meta, id=f"{prefix}{i:05d}")
        out.append(Sample(scene.sample.depth, scene.sample.labels, meta))
    return tuple(out)


def build_datasets(cfg: ExperimentConfig) -> tuple[list[Sample], list[Sample]]:
    """Training and validation samples for a config.

    Training labels are sub-sampled to ``labels_per_image``; validation keeps
    every label. The validation set does not depend on ``n_train``.
    """
    if cfg.dataset == "jacquard_dir":
        train, val = load_split(cfg.data_dir, "train"), load_split(cfg.data_dir, "val")
        if not train or not val:
            raise ValueError(f"{cfg.data_dir}: manifest lists no train or no val samples")
    elif cfg.dataset == "toy":
        train = list(_toy(cfg.n_train, cfg.data_seed, cfg.image_size, "toy"))
        val = list(_toy(cfg.n_val, cfg.data_seed + VAL_SEED_OFFSET, cfg.image_size, "val"))
    else:
        lo, hi = cfg.clutter_min_objects, cfg.clutter_max_objects
        train = list(_clutter(cfg.n_train, cfg.data_seed, cfg.image_size, lo, hi, "clutter"))
        val = list(_clutter(cfg.n_val, cfg.data_seed + VAL_SEED_OFFSET, cfg.image_size, lo, hi, "cval"))
    train = [downsample_labels(s, cfg.labels_per_image, [cfg.data_seed, i]) for i, s in enumerate(train)]
    return train, val


@dataclass
class TrainResult:
    curve: list[dict]
    best_top1: float
    best_epoch: int
    checkpoint: Path | None
    model: torch.nn.Module

    def curve_csv(self) -> str:
        return format_curve(self.curve)


def format_curve(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CURVE_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({"epoch": r["epoch"], "train_loss": f"{r['train_loss']:.8f}",
                    "val_top1": f"{r['val_top1']:.2f}", "val_top5": f"{r['val_top5']:.2f}"})
    return buf.getvalue()


def _targets(cfg: ExperimentConfig, batch: list[Sample]):
    unit = cfg.model_spec().width_unit
    if cfg.loss == "img_mse":
        return [encode_labels_dense(s.labels, s.shape, cfg.footprint_ratio, max_width=unit) for s in batch]
    return [encode_labels_sparse(s.labels, s.shape, unit) for s in batch]


def _epoch_batch(cfg: ExperimentConfig, train: list[Sample], epoch: int, idx: np.ndarray) -> list[Sample]:
    out = []
    for i in idx:
        s = train[int(i)]
        if cfg.augment:
            try:
                s = augment(s, [cfg.seed, epoch, int(i)])
            except ValueError:
                pass  # keep the original when every draw lost all labels
        out.append(s)
    return out


def validate(model, val: list[Sample], cfg: ExperimentConfig) -> tuple[float, float]:
    maps = predict_batch(model, [s.depth for s in val])
    crit = cfg.criteria()
    ranks = first_hit_ranks(maps, val, 5, crit)
    t1 = sum(r == 1 for r in ranks)
    t5 = sum(r is not None for r in ranks)
    return 100.0 * t1 / len(val), 100.0 * t5 / len(val)


def train(cfg: ExperimentConfig, out_dir=None, datasets=None, progress: bool = False) -> TrainResult:
    """Train one model; writes ``curve.csv``, ``best.pt`` and ``last.pt`` under ``out_dir``.

    ``out_dir=None`` keeps everything in memory (the best weights are restored
    into the returned model). Runs are reproducible for a fixed config on a
    single thread.
    """
    cfg.validate()
    train_set, val_set = datasets if datasets is not None else build_datasets(cfg)
    spec = cfg.model_spec()
    torch.manual_seed(cfg.seed)
    model = build(spec, cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 0xBA7C4])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.ini")
    curve, best, best_epoch, best_state = [], -1.0, 0, None
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = _epoch_batch(cfg, train_set, epoch, idx)
            x = prepare_batch([s.depth for s in batch], spec)
            loss = batch_loss(cfg.loss, model(x), _targets(cfg, batch))
            if not torch.isfinite(loss):
                ids = ", ".join(s.id for s in batch)
                raise DivergenceError(
                    f"non-finite {cfg.loss} loss ({loss.item()}) at epoch {epoch}, step {start // cfg.batch_size}; "
                    f"batch: {ids}; try a lower learning_rate (now {cfg.learning_rate})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        top1, top5 = validate(model, val_set, cfg)
        row = {"epoch": epoch, "train_loss": total / count, "val_top1": top1, "val_top5": top5}
        curve.append(row)
        if top1 > best:
            best, best_epoch = top1, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            if out is not None:
                save(model, out / "best.pt", opt, cfg.digest(), {"epoch": epoch, "val_top1": top1})
        if out is not None:
            (out / "curve.csv").write_text(format_curve(curve))
        msg = "epoch %d/%d loss %.5f top1 %.1f top5 %.1f (%.1fs)"
        (log.info if not progress else print)(msg % (epoch, cfg.epochs, row["train_loss"], top1, top5, time.perf_counter() - t0))
    if out is not None:
        save(model, out / "last.pt", opt, cfg.digest(), {"epoch": cfg.epochs})
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(curve, best, best_epoch, out / "best.pt" if out is not None else None, model)
