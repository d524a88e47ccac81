"""Planar antipodal grasps, oriented rectangles, and the IoU success test.

Coordinate conventions:
  * Pixel ``(row, col)``; the center of pixel ``(r, c)`` sits at ``(r, c)``.
  * Grasp angle 0 points along +col. Positive angles turn counterclockwise as
    seen on screen, so the closing direction of a grasp at angle ``a`` is
    ``(drow, dcol) = (-sin a, cos a)``.
  * Angles are pi-periodic: a parallel-jaw grasp rotated by pi is the same grasp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_WIDTH = 150.0
IOU_THRESHOLD = 0.25
ANGLE_THRESHOLD = math.pi / 6
DEFAULT_HEIGHT_RATIO = 0.5
DEGENERATE_AREA = 1e-12
REFERENCE_SIZE = 300  # image side the pixel constants above refer to

_HALF_PI = math.pi / 2


def normalize_angle(angle: float) -> float:
    """Map ``angle`` onto its pi-equivalent in ``[-pi/2, pi/2)``."""
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle!r}")
    if -_HALF_PI <= angle < _HALF_PI:
        return angle
    out = math.fmod(angle + _HALF_PI, math.pi)
    if out < 0:
        out += math.pi
    out -= _HALF_PI
    # fmod rounding can land exactly on the excluded upper end
    if out >= _HALF_PI:
        out -= math.pi
    return out


def angle_diff(a: float, b: float) -> float:
    """Distance between two grasp angles modulo pi, in ``[0, pi/2]``."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("angles must be finite")
    return abs(normalize_angle(a - b))


def grasp_axis(angle: float) -> np.ndarray:
    """Unit closing direction ``(drow, dcol)`` of a grasp at ``angle``."""
    return np.array([-math.sin(angle), math.cos(angle)])


def width_unit(image_size: int) -> float:
    """Largest opening in pixels for a frame of ``image_size``, scaled from the reference frame."""
    if image_size < 1:
        raise ValueError("image_size must be positive")
    return MAX_WIDTH * image_size / REFERENCE_SIZE


@dataclass(frozen=True)
class Grasp:
    center_row: int
    center_col: int
    angle: float
    width: float
    quality: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center_row", int(self.center_row))
        object.__setattr__(self, "center_col", int(self.center_col))
        object.__setattr__(self, "angle", normalize_angle(self.angle))
        width = float(self.width)
        if not (0.0 <= width <= MAX_WIDTH):
            raise ValueError(f"width must lie in [0, {MAX_WIDTH}], got {width}")
        quality = float(self.quality)
        if not (0.0 <= quality <= 1.0):
            raise ValueError(f"quality must lie in [0, 1], got {quality}")
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "quality", quality)

    @property
    def center(self) -> tuple[int, int]:
        return self.center_row, self.center_col

    def flat_index(self, image_width: int) -> int:
        return self.center_row * image_width + self.center_col


@dataclass(frozen=True)
class GraspRectangle:
    """Four ``(row, col)`` corners, counterclockwise on screen."""

    corners: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.corners, dtype=np.float64)
        if pts.shape != (4, 2):
            raise ValueError(f"expected 4x2 corners, got shape {pts.shape}")
        sides = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if abs(sides[0] - sides[2]) > 1e-6 or abs(sides[1] - sides[3]) > 1e-6:
            raise ValueError("corners do not form a rectangle")
        pts.setflags(write=False)
        object.__setattr__(self, "corners", pts)

    @property
    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def area(self) -> float:
        return abs(_signed_area(self.corners))


def to_rectangle(g: Grasp, height_ratio: float = DEFAULT_HEIGHT_RATIO) -> GraspRectangle:
    """Oriented rectangle of a grasp: ``width`` along the closing axis, ``height_ratio * width`` across it."""
    if height_ratio <= 0:
        raise ValueError("height_ratio must be positive")
    if g.width <= 0:
        raise ValueError("zero-width grasp has a degenerate rectangle")
    return oriented_rectangle(g.center_row, g.center_col, g.angle, g.width, height_ratio * g.width)


def oriented_rectangle(row: float, col: float, angle: float, length: float, height: float) -> GraspRectangle:
    u = grasp_axis(angle)
    # counterclockwise perpendicular on screen
    v = np.array([-u[1], u[0]])
    c = np.array([row, col], dtype=np.float64)
    a, b = length / 2.0, height / 2.0
    corners = np.stack([c - a * u - b * v, c + a * u - b * v, c + a * u + b * v, c - a * u + b * v])
    return GraspRectangle(corners)


def _signed_area(pts: np.ndarray) -> float:
    # shoelace in (x=col, y=row)
    x, y = pts[:, 1], pts[:, 0]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ccw(pts: np.ndarray) -> np.ndarray:
    return pts if _signed_area(pts) > 0 else pts[::-1]


def _clip(subject: list[np.ndarray], clipper: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman: clip a polygon against a convex polygon (both positively oriented)."""
    out = subject
    n = len(clipper)
    for i in range(n):
        if not out:
            break
        a, b = clipper[i], clipper[(i + 1) % n]
        edge = b - a

        def inside(p: np.ndarray) -> float:
            return edge[1] * (p[0] - a[0]) - edge[0] * (p[1] - a[1])

        src, out = out, []
        for j in range(len(src)):
            cur, prev = src[j], src[j - 1]
            s_cur, s_prev = inside(cur), inside(prev)
            if s_cur >= 0:
                if s_prev < 0:
                    out.append(prev + (cur - prev) * (s_prev / (s_prev - s_cur)))
                out.append(cur)
            elif s_prev >= 0:
                out.append(prev + (cur - prev) * (s_prev / (s_prev - s_cur)))
    return out


def rect_iou(a: GraspRectangle, b: GraspRectangle) -> float:
    area_a, area_b = a.area, b.area
    if area_a < DEGENERATE_AREA or area_b < DEGENERATE_AREA:
        raise ValueError("degenerate rectangle")
    if np.array_equal(a.corners, b.corners):
        return 1.0
    pa, pb = _ccw(a.corners), _ccw(b.corners)
    inter_poly = _clip([p for p in pa], pb)
    inter = abs(_signed_area(np.array(inter_poly))) if len(inter_poly) >= 3 else 0.0
    union = area_a + area_b - inter
    return float(min(max(inter / union, 0.0), 1.0))


def is_success(
    pred: Grasp,
    labels: Sequence[Grasp],
    iou_threshold: float = IOU_THRESHOLD,
    angle_threshold: float = ANGLE_THRESHOLD,
    height_ratio: float = DEFAULT_HEIGHT_RATIO,
) -> bool:
    """True if some label overlaps ``pred`` by IoU and agrees in angle."""
    if not labels:
        raise ValueError("success test needs at least one label")
    if pred.width <= 0:
        return False
    rp = to_rectangle(pred, height_ratio)
    if rp.area < DEGENERATE_AREA:
        return False
    for lab in labels:
        if angle_diff(pred.angle, lab.angle) > angle_threshold or lab.width <= 0:
            continue
        rl = to_rectangle(lab, height_ratio)
        if rl.area < DEGENERATE_AREA:
            continue
        if rect_iou(rp, rl) >= iou_threshold:
            return True
    return False
