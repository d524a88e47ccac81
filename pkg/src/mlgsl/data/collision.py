"""Finger-footprint collision test on depth images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import DEFAULT_HEIGHT_RATIO, REFERENCE_SIZE, Grasp, grasp_axis, oriented_rectangle, width_unit
from ..maps import rasterize



@dataclass(frozen=True)
class Gripper:
    """Parallel-jaw dimensions used for pruning and for the analytic oracle.

    ``finger_thickness`` is in pixels; ``approach_offset`` is how far (in depth
    units) the fingertips descend below the highest point under the grasp.
    """

    finger_thickness: float = 10.0
    height_ratio: float = DEFAULT_HEIGHT_RATIO
    approach_offset: float = 0.03
    max_width: float = 150.0

    @classmethod
    def for_image(cls, size: int, **kw) -> "Gripper":
        """Defaults with pixel quantities scaled from a 300 px frame to ``size``."""
        kw.setdefault("finger_thickness", cls.finger_thickness * size / REFERENCE_SIZE)
        kw.setdefault("max_width", width_unit(size))
        return cls(**kw)


def finger_rectangles(g: Grasp, gripper: Gripper):
    u = grasp_axis(g.angle)
    t = gripper.finger_thickness
    h = max(gripper.height_ratio * g.width, 2.0)
    off = g.width / 2.0 + t / 2.0
    return [
        oriented_rectangle(g.center_row + sgn * off * u[0], g.center_col + sgn * off * u[1], g.angle, t, h)
        for sgn in (1.0, -1.0)
    ]


def collision_check(g: Grasp, depth: np.ndarray, gripper: Gripper = Gripper()) -> bool:
    """True if either finger would hit something on its way down.

    The approach depth is the closest surface under the grasp rectangle plus
    ``gripper.approach_offset``; any finger-footprint pixel nearer the camera
    than that collides. Footprints leaving the image count as collisions.
    """
    h_img, w_img = depth.shape
    fingers = finger_rectangles(g, gripper)
    for rect in fingers:
        lo, hi = rect.corners.min(axis=0), rect.corners.max(axis=0)
        if lo[0] < -0.5 or lo[1] < -0.5 or hi[0] > h_img - 0.5 or hi[1] > w_img - 0.5:
            return True
    height = max(gripper.height_ratio * g.width, 2.0)
    under = rasterize(oriented_rectangle(g.center_row, g.center_col, g.angle, max(g.width, 1.0), height), depth.shape)
    top = float(depth[under].min()) if under.any() else float(depth[g.center_row, g.center_col])
    approach = top + gripper.approach_offset
    for rect in fingers:
        m = rasterize(rect, depth.shape)
        if m.any() and float(depth[m].min()) < approach:
            return True
    return False
