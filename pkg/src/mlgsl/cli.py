"""Command-line driver: ``mlgsl {synth,train,eval,ablate,plot}``.

Settings come from ``--config`` (sectioned ``key = value`` text) and are then
overridden by flags. A relative ``output_dir`` is resolved against
``$MLGSL_OUTPUT_ROOT`` when set. Exit codes: 0 ok, 1 user error (bad flags,
config, missing data, checkpoint mismatch), 2 runtime error (divergence and
anything unexpected).
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig
from .data.clutter import fuse_clutter
from .data.io import save_sample, write_manifest
from .data.sample import Sample
from .data.toy import gen_toy_dataset
from .evaluation import (
    EvalReport,
    accuracy_recall,
    analytic_oracle,
    collision_free_ratio,
    evaluate,
    label_oracle,
    topk_success,
)
from .maps import extract_grasps
from .model import load, predict_batch
from .train import DivergenceError, build_datasets, train
from .viz import overlay, plot_curves, read_curve, save_image

log = logging.getLogger("mlgsl")

OUTPUT_ROOT_ENV = "MLGSL_OUTPUT_ROOT"
EXIT_OK, EXIT_USER, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# flag name -> (config field, type)
OVERRIDES = {
    "seed": ("seed", int),
    "output_dir": ("output_dir", str),
    "dataset": ("dataset", str),
    "data_dir": ("data_dir", str),
    "data_seed": ("data_seed", int),
    "image_size": ("image_size", int),
    "n_train": ("n_train", int),
    "n_val": ("n_val", int),
    "labels_per_image": ("labels_per_image", int),
    "loss": ("loss", str),
    "sam": ("sam_placement", str),
    "channels": ("channel_widths", lambda s: tuple(int(x) for x in s.split(","))),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "lr": ("learning_rate", float),
    "iou": ("iou_threshold", float),
    "angle_deg": ("angle_threshold_deg", float),
    "quality_threshold": ("quality_threshold", float),
}


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config file")
    g = p.add_argument_group("config overrides")
    for flag, (_, typ) in OVERRIDES.items():
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, type=str, default=None)
    g.add_argument("-k", dest="labels_per_image", type=str, help="alias of --labels-per-image")
    g.add_argument("--no-augment", action="store_true", help="disable on-the-fly augmentation")


def resolve_output(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def config_from_args(args, check_paths: bool = True) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    kw = {}
    for flag, (field, typ) in OVERRIDES.items():
        raw = getattr(args, flag, None)
        if raw is not None:
            try:
                kw[field] = typ(raw)
            except ValueError as exc:
                raise UsageError(f"--{flag.replace('_', '-')}: {exc}") from exc
    if getattr(args, "no_augment", False):
        kw["augment"] = False
    cfg = cfg.replace(**kw)
    cfg.validate(check_paths=check_paths)
    return cfg


def _digest_lines(lines) -> str:
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


# synth


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if not 0 <= args.val_fraction < 1:
        raise UsageError("--val-fraction must lie in [0, 1)")
    cfg = config_from_args(args)
    out = resolve_output(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    n_val = int(round(args.n * args.val_fraction))
    if args.clutter or cfg.dataset == "clutter":
        samples, masks = _synth_clutter(cfg, args.n, args.objects)
    else:
        samples = gen_toy_dataset(args.n, cfg.seed, image_size=cfg.image_size)
        masks = [(s.depth < 0.95).astype(np.uint8) for s in samples]
    entries = []
    for i, (s, m) in enumerate(zip(samples, masks)):
        save_sample(out, s, m)
        entries.append((s.id, "val" if i >= args.n - n_val else "train"))
    path = write_manifest(out, entries)
    (out / "manifest.sha256").write_text(hashlib.sha256(path.read_bytes()).hexdigest() + "\n")
    cfg.replace(dataset="jacquard_dir", data_dir=str(out)).save(out / "config.ini")
    print(f"wrote {len(samples)} samples ({args.n - n_val} train, {n_val} val) to {out}")
    return EXIT_OK


def _synth_clutter(cfg: ExperimentConfig, n: int, objects: int | None):
    if objects is not None and not 1 <= objects <= 5:
        raise UsageError("--objects must lie in 1..5")
    sources = gen_toy_dataset(max(n, 20), cfg.seed, image_size=cfg.image_size, prefix="src")
    samples, masks = [], []
    for i in range(n):
        k = objects or int(np.random.default_rng([cfg.seed, i, 7]).integers(cfg.clutter_min_objects, cfg.clutter_max_objects + 1))
        scene = fuse_clutter(sources, k, seed=[cfg.seed, i], gripper=cfg.gripper())
        s = scene.sample
        samples.append(Sample(s.depth, s.labels, dict(s.meta, id=f"clutter{i:05d}")))
        masks.append((scene.owner + 1).astype(np.uint8))
    return samples, masks


# train


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    out = resolve_output(cfg.output_dir)
    torch.set_num_threads(1)
    datasets = build_datasets(cfg)
    ids = [f"{s.id} train" for s in datasets[0]] + [f"{s.id} val" for s in datasets[1]]
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.sha256").write_text(_digest_lines(ids) + "\n")
    res = train(cfg, out, datasets, progress=not args.quiet)
    print(f"best val Top-1 {res.best_top1:.2f}% at epoch {res.best_epoch}; checkpoint {res.checkpoint}")
    return EXIT_OK


# eval


def cmd_eval(args) -> int:
    cfg = config_from_args(args)
    out = resolve_output(cfg.output_dir)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "best.pt"
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint {ckpt} not found")
    torch.set_num_threads(1)
    model = load(ckpt, cfg.model_spec())
    _, val = build_datasets(cfg)
    if args.limit:
        val = val[: args.limit]
    crit = cfg.criteria()
    maps = predict_batch(model, [s.depth for s in val])
    metrics = set(args.metric)
    want_all = "all" in metrics
    rep = EvalReport(n_samples=len(val))
    grip = cfg.gripper()
    if want_all or "topk" in metrics:
        rep.top1 = topk_success(maps, val, 1, crit)
        rep.top5 = topk_success(maps, val, 5, crit)
    if want_all or "accuracy" in metrics:
        if all(s.meta.get("shapes") for s in val):
            oracle = lambda s, g: analytic_oracle(s, g, grip)  # noqa: E731
        else:
            oracle = label_oracle
        rep.accuracy, rep.recall = accuracy_recall(maps, val, oracle, threshold=cfg.quality_threshold,
                                                   seed=cfg.seed, max_width=crit.max_width)
    if want_all or "collision" in metrics:
        rep.collision_free = collision_free_ratio(maps, val, grip, crit)
    out.mkdir(parents=True, exist_ok=True)
    rep.write(out / "report.txt")
    rep.append_csv(out / "results.csv", checkpoint=str(ckpt), config=cfg.digest())
    ids = args.ids or [s.id for s in val[: args.heatmaps]]
    by_id = {s.id: (s, m) for s, m in zip(val, maps)}
    for sid in ids:
        if sid not in by_id:
            raise UsageError(f"sample id {sid!r} is not in the evaluation set")
        s, m = by_id[sid]
        grasps = extract_grasps(m, 5, crit.sigma, crit.nms_radius, crit.max_width)
        save_image(out / "heatmaps" / f"{sid}.png", overlay(s.depth, m, grasps))
    print(rep.to_text(), end="")
    return EXIT_OK


# ablate


AXES = {
    "loss": str,
    "labels_per_image": int,
    "n_train": int,
    "sam_placement": str,
    "dataset": str,
    "seed": int,
}


def parse_axes(specs) -> dict[str, list]:
    axes = {}
    for spec in specs:
        if "=" not in spec:
            raise UsageError(f"--axis expects name=v1,v2,...; got {spec!r}")
        name, values = spec.split("=", 1)
        name = name.strip().replace("-", "_")
        if name == "sam":
            name = "sam_placement"
        if name not in AXES:
            raise UsageError(f"unknown sweep axis {name!r}; choose from {sorted(AXES)}")
        try:
            axes[name] = [AXES[name](v) for v in values.split(",") if v]
        except ValueError as exc:
            raise UsageError(f"--axis {name}: {exc}") from exc
        if not axes[name]:
            raise UsageError(f"--axis {name} has no values")
    return axes


def _cell_name(cell: dict) -> str:
    return "_".join(f"{k}-{v}" for k, v in cell.items())


def _run_cell(cfg: ExperimentConfig, cell: dict, out: Path) -> dict:
    torch.set_num_threads(1)
    row = dict(cell, status="ok", error="", best_epoch="", top1="", top5="", accuracy="", recall="")
    try:
        c = cfg.replace(**cell, output_dir=str(out))
        c.validate()
        res = train(c, out)
        _, val = build_datasets(c)
        rep = evaluate(res.model, val, c.criteria(), quality_threshold=c.quality_threshold, seed=c.seed)
        row.update(best_epoch=res.best_epoch, top1=f"{rep.top1:.2f}", top5=f"{rep.top5:.2f}",
                   accuracy=f"{rep.accuracy:.2f}", recall=f"{rep.recall:.2f}")
    except Exception as exc:  # keep going; the cell is marked failed
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
        log.error("cell %s failed:\n%s", cell, traceback.format_exc())
    return row


def cmd_ablate(args) -> int:
    import csv

    cfg = config_from_args(args)
    axes = parse_axes(args.axis)
    if not axes:
        raise UsageError("give at least one --axis")
    out = resolve_output(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.ini")
    cells = [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]
    dirs = [out / "cells" / _cell_name(c) for c in cells]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_run_cell, [cfg] * len(cells), cells, dirs))
    else:
        rows = [_run_cell(cfg, c, d) for c, d in zip(cells, dirs)]
    fields = list(axes) + ["status", "best_epoch", "top1", "top5", "accuracy", "recall", "error"]
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in fields})
    curves = {_cell_name(c): read_curve(d / "curve.csv") for c, r, d in zip(cells, rows, dirs)
              if r["status"] == "ok"}
    if curves:
        plot_curves(curves, out / "ablation_top1.png", "val_top1")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} cells completed; table {out / 'ablation.csv'}")
    return EXIT_RUNTIME if failed else EXIT_OK


# plot


def cmd_plot(args) -> int:
    runs = {}
    for p in args.runs:
        p = Path(p)
        csv_path = p / "curve.csv" if p.is_dir() else p
        if not csv_path.exists():
            raise FileNotFoundError(f"no curve at {csv_path}")
        runs[p.name if p.is_dir() else p.stem] = read_curve(csv_path)
    out = plot_curves(runs, resolve_output(args.out), args.metric)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mlgsl", description="Dense grasp prediction from sparse labels.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a toy or clutter dataset to disk")
    _add_config_args(s)
    s.add_argument("--n", type=int, required=True, help="number of samples")
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.add_argument("--clutter", action="store_true", help="fuse multi-object scenes")
    s.add_argument("--objects", type=int, default=None, help="objects per clutter scene (default: config range)")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one model")
    _add_config_args(t)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the validation split")
    _add_config_args(e)
    e.add_argument("--checkpoint", default=None, help="default: <output_dir>/best.pt")
    e.add_argument("--metric", action="append", choices=["all", "topk", "accuracy", "collision"], default=None)
    e.add_argument("--heatmaps", type=int, default=4, help="overlays for the first N samples")
    e.add_argument("--ids", nargs="*", default=None, help="overlays for these sample ids instead")
    e.add_argument("--limit", type=int, default=0, help="evaluate only the first N samples")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and evaluate a grid of configs")
    _add_config_args(a)
    a.add_argument("--axis", action="append", default=[], help="name=v1,v2,... (repeatable)")
    a.add_argument("--workers", type=int, default=1, help="parallel cells (determinism needs 1)")
    a.set_defaults(func=cmd_ablate)

    pl = sub.add_parser("plot", help="plot training curves")
    pl.add_argument("runs", nargs="+", help="run directories or curve CSV files")
    pl.add_argument("--metric", default="val_top1")
    pl.add_argument("--out", default="curves.png")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "metric", None) is None and args.command == "eval":
            args.metric = ["all"]
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
