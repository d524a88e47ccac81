"""Samples, toy data synthesis, augmentation and clutter fusion."""

from .augment import Transform, apply_transform, augment, downsample_labels
from .clutter import fuse_clutter
from .collision import Gripper, collision_check
from .io import load_sample, load_split, read_manifest, save_sample, write_manifest
from .sample import ClutterScene, Sample, check_sample, foreground_mask
from .toy import antipodal, gen_toy_dataset, render_object

__all__ = [
    "ClutterScene",
    "Gripper",
    "Sample",
    "Transform",
    "antipodal",
    "apply_transform",
    "augment",
    "check_sample",
    "collision_check",
    "downsample_labels",
    "foreground_mask",
    "fuse_clutter",
    "gen_toy_dataset",
    "load_sample",
    "load_split",
    "read_manifest",
    "render_object",
    "save_sample",
    "write_manifest",
]
