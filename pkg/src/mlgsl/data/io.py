"""On-disk samples in the Jacquard layout.

Per sample ``<id>``:
  ``<id>_depth.png``   16-bit depth in millimeters (0 = missing, inpainted on load)
  ``<id>_grasps.txt``  one label per line, ``x;y;theta_degrees;opening_px;jaw_px``
  ``<id>_mask.png``    optional 8-bit segment ids (0 = background)
  ``<id>_shapes.json`` optional toy-object outlines for the analytic oracle

A dataset directory also holds ``manifest.txt`` with ``<id> <split>`` lines.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import cv2
import numpy as np

from ..geometry import DEFAULT_HEIGHT_RATIO, MAX_WIDTH, Grasp
from .sample import Sample

MANIFEST = "manifest.txt"
SPLITS = ("train", "val")


def parse_grasp_line(line: str, lineno: int = 0) -> Grasp:
    parts = [p.strip() for p in line.strip().split(";")]
    if len(parts) != 5:
        raise ValueError(f"line {lineno}: expected 5 ';'-separated fields, got {len(parts)}: {line.strip()!r}")
    try:
        x, y, theta, opening, _jaw = (float(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"line {lineno}: non-numeric field in {line.strip()!r}") from exc
    if not all(math.isfinite(v) for v in (x, y, theta, opening)):
        raise ValueError(f"line {lineno}: non-finite field in {line.strip()!r}")
    return Grasp(int(round(y)), int(round(x)), math.radians(theta), min(max(opening, 0.0), MAX_WIDTH))


def read_grasps(path) -> list[Grasp]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse_grasp_line(line, lineno))
    return out


def format_grasp_line(g: Grasp, height_ratio: float = DEFAULT_HEIGHT_RATIO) -> str:
    return f"{g.center_col};{g.center_row};{math.degrees(g.angle):.6f};{g.width:.4f};{height_ratio * g.width:.4f}"


def inpaint_depth(depth_m: np.ndarray) -> np.ndarray:
    """Fill zero / non-finite pixels from their neighbours."""
    d = np.asarray(depth_m, dtype=np.float32)
    missing = ~np.isfinite(d) | (d <= 0)
    if not missing.any():
        return d
    if missing.all():
        raise ValueError("depth image has no valid pixels")
    filled = np.where(missing, 0.0, d).astype(np.float32)
    return cv2.inpaint(filled, missing.astype(np.uint8), 3, cv2.INPAINT_NS)


def load_sample(directory, sample_id: str) -> Sample:
    directory = Path(directory)
    depth_path = directory / f"{sample_id}_depth.png"
    grasp_path = directory / f"{sample_id}_grasps.txt"
    if not depth_path.exists():
        raise FileNotFoundError(f"missing depth image {depth_path}")
    raw = cv2.imread(str(depth_path), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.ndim != 2:
        raise ValueError(f"{depth_path} is not a single-channel image")
    depth = inpaint_depth(raw.astype(np.float32) / 1000.0)
    if not grasp_path.exists():
        raise FileNotFoundError(f"missing label file {grasp_path}")
    try:
        labels = read_grasps(grasp_path)
    except ValueError as exc:
        raise ValueError(f"{grasp_path}: {exc}") from exc
    meta: dict = {"id": sample_id, "augment": []}
    shapes_path = directory / f"{sample_id}_shapes.json"
    if shapes_path.exists():
        meta.update(json.loads(shapes_path.read_text()))
    mask_path = directory / f"{sample_id}_mask.png"
    if mask_path.exists():
        meta["mask"] = cv2.imread(str(mask_path), cv2.IMREAD_UNCHANGED)
    return Sample(depth, tuple(labels), meta)


def save_sample(directory, s: Sample, mask: np.ndarray | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sid = s.id
    if not sid:
        raise ValueError("sample needs an id to be saved")
    mm = np.clip(np.round(s.depth * 1000.0), 0, 65535).astype(np.uint16)
    cv2.imwrite(str(directory / f"{sid}_depth.png"), mm)
    lines = [format_grasp_line(g) for g in s.labels]
    (directory / f"{sid}_grasps.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    if mask is not None:
        cv2.imwrite(str(directory / f"{sid}_mask.png"), mask.astype(np.uint8))
    if "shapes" in s.meta:
        extra = {k: s.meta[k] for k in ("shapes", "background") if k in s.meta}
        (directory / f"{sid}_shapes.json").write_text(json.dumps(extra, sort_keys=True))


def write_manifest(directory, entries) -> Path:
    """``entries`` is an iterable of ``(id, split)``."""
    path = Path(directory) / MANIFEST
    lines = []
    for sid, split in entries:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        lines.append(f"{sid} {split}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(directory) -> list[tuple[str, str]]:
    path = Path(directory) / MANIFEST
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in SPLITS:
            raise ValueError(f"{path}:{lineno}: expected '<id> <train|val>', got {line!r}")
        out.append((parts[0], parts[1]))
    return out


def load_split(directory, split: str) -> list[Sample]:
    return [load_sample(directory, sid) for sid, sp in read_manifest(directory) if sp == split]
