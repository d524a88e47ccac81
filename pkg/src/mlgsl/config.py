"""Experiment configuration stored as sectioned ``key = value`` text."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LOSS_NAMES
from .model import SAM_PLACEMENTS, ModelSpec

DATASETS = ("toy", "jacquard_dir", "clutter")


def _sec(name: str, **kw):
    return field(metadata={"section": name}, **kw)


@dataclass
class ExperimentConfig:
    seed: int = _sec("experiment", default=0)
    output_dir: str = _sec("experiment", default="runs/default")

    dataset: str = _sec("data", default="toy")
    data_dir: str = _sec("data", default="")
    data_seed: int = _sec("data", default=0)
    image_size: int = _sec("data", default=300)
    n_train: int = _sec("data", default=500)
    n_val: int = _sec("data", default=100)
    labels_per_image: int = _sec("data", default=16)
    augment: bool = _sec("data", default=True)
    clutter_min_objects: int = _sec("data", default=3)
    clutter_max_objects: int = _sec("data", default=5)

    sam_placement: str = _sec("model", default="none")
    channel_widths: tuple = _sec("model", default=(16, 32, 32, 64, 64, 64, 32, 16))
    depth_scale: float = _sec("model", default=10.0)
    padding: str = _sec("model", default="zeros")

    loss: str = _sec("train", default="mlgsl")
    epochs: int = _sec("train", default=50)
    batch_size: int = _sec("train", default=8)
    learning_rate: float = _sec("train", default=1e-3)
    footprint_ratio: float = _sec("train", default=1.0 / 3.0)

    iou_threshold: float = _sec("eval", default=0.25)
    angle_threshold_deg: float = _sec("eval", default=30.0)
    quality_threshold: float = _sec("eval", default=0.5)
    finger_thickness: float = _sec("eval", default=-1.0)  # < 0: 10 px scaled to image_size
    approach_offset: float = _sec("eval", default=0.03)

    def __post_init__(self) -> None:
        self.channel_widths = tuple(int(c) for c in self.channel_widths)

    def validate(self, check_paths: bool = True) -> None:
        if self.labels_per_image < 1:
            raise ValueError("labels_per_image must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.n_train < 1 or self.n_val < 1:
            raise ValueError("batch_size, n_train and n_val must be >= 1")
        if self.loss not in LOSS_NAMES:
            raise ValueError(f"loss must be one of {LOSS_NAMES}")
        if self.dataset not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}")
        if self.sam_placement not in SAM_PLACEMENTS:
            raise ValueError(f"sam_placement must be one of {SAM_PLACEMENTS}")
        if not 1 <= self.clutter_min_objects <= self.clutter_max_objects <= 5:
            raise ValueError("clutter object counts must satisfy 1 <= min <= max <= 5")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if check_paths and self.dataset == "jacquard_dir" and not Path(self.data_dir).is_dir():
            raise ValueError(f"data_dir {self.data_dir!r} does not exist")
        self.model_spec()

    @property
    def angle_threshold(self) -> float:
        return math.radians(self.angle_threshold_deg)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            input_size=self.image_size,
            channel_widths=self.channel_widths,
            sam_placement=self.sam_placement,
            depth_scale=self.depth_scale,
            padding=self.padding,
        )

    def criteria(self):
        from .evaluation import SuccessCriteria

        return SuccessCriteria(self.iou_threshold, self.angle_threshold, max_width=self.model_spec().width_unit)

    def gripper(self):
        from .data.collision import Gripper

        kw = {"approach_offset": self.approach_offset}
        if self.finger_thickness >= 0:
            kw["finger_thickness"] = self.finger_thickness
        return Gripper.for_image(self.image_size, **kw)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    # text form

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        for f in dataclasses.fields(self):
            sec = f.metadata["section"]
            if not cp.has_section(sec):
                cp.add_section(sec)
            v = getattr(self, f.name)
            cp.set(sec, f.name, ",".join(map(str, v)) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v))
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp.items(sec))
            lines.append("")
        return "\n".join(lines)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        known = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                if key not in known:
                    raise ValueError(f"unknown config key [{sec}] {key}")
                kw[key] = _parse(known[key], raw)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def digest(self) -> str:
        """Hash of everything but the output location."""
        text = self.replace(output_dir="").to_text()
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse(f: dataclasses.Field, raw: str):
    default = f.default
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{f.name}: not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
    return raw
