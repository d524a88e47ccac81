"""Dense grasp configuration maps and conversions to and from grasp labels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter

from .geometry import DEFAULT_HEIGHT_RATIO, MAX_WIDTH, Grasp, GraspRectangle, oriented_rectangle

DEFAULT_FOOTPRINT_RATIO = 1.0 / 3.0
SMOOTH_SIGMA = 2.0
NMS_RADIUS = 10


@dataclass(frozen=True)
class ConfigMaps:
    """Per-pixel quality, doubled-angle components and normalized width.

    The grids may be numpy arrays or torch tensors; every grid has shape ``(H, W)``
    (a leading batch axis is allowed for tensors coming out of the network).
    """

    q: object
    phi_s: object
    phi_c: object
    width: object

    def __post_init__(self) -> None:
        shapes = {tuple(g.shape) for g in self.grids}
        if len(shapes) != 1:
            raise ValueError(f"map shapes differ: {sorted(shapes)}")

    @property
    def grids(self) -> tuple:
        return self.q, self.phi_s, self.phi_c, self.width

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.q.shape)

    def validate(self, tol: float = 0.0) -> None:
        """Raise if any grid leaves its value range."""
        ranges = {"q": (0, 1), "phi_s": (-1, 1), "phi_c": (-1, 1), "width": (0, 1)}
        for name, (lo, hi) in ranges.items():
            g = _np(getattr(self, name))
            if not np.all(np.isfinite(g)):
                raise ValueError(f"{name} has non-finite entries")
            if g.min() < lo - tol or g.max() > hi + tol:
                raise ValueError(f"{name} outside [{lo}, {hi}]: [{g.min()}, {g.max()}]")

    def numpy(self) -> "ConfigMaps":
        return ConfigMaps(*(_np(g) for g in self.grids))

    def angle(self) -> np.ndarray:
        return recover_angle_map(self.phi_s, self.phi_c)

    def __getitem__(self, i) -> "ConfigMaps":
        return ConfigMaps(*(g[i] for g in self.grids))


def _np(a) -> np.ndarray:
    if hasattr(a, "detach"):
        a = a.detach().cpu().numpy()
    return np.asarray(a)


def recover_angle_map(phi_s, phi_c) -> np.ndarray:
    """Half the quadrant-aware arctangent, folded into ``[-pi/2, pi/2)``."""
    s, c = _np(phi_s).astype(np.float64), _np(phi_c).astype(np.float64)
    if s.shape != c.shape:
        raise ValueError("phi_s and phi_c shapes differ")
    out = 0.5 * np.arctan2(s, c)
    return np.where(out >= math.pi / 2, out - math.pi, out)


@dataclass(frozen=True)
class SparseTargets:
    """Flat pixel indices of the labels and their regression targets."""

    index: np.ndarray
    sin2: np.ndarray
    cos2: np.ndarray
    width: np.ndarray

    def __len__(self) -> int:
        return len(self.index)


def encode_labels_sparse(labels: Sequence[Grasp], shape: tuple[int, int], max_width: float = MAX_WIDTH) -> SparseTargets:
    """Flat pixel indices, angle components and widths divided by ``max_width``."""
    h, w = shape
    idx, s, c, wd = [], [], [], []
    for g in labels:
        if not (0 <= g.center_row < h and 0 <= g.center_col < w):
            raise ValueError(f"label center {g.center} outside image of shape {shape}")
        idx.append(g.center_row * w + g.center_col)
        s.append(math.sin(2 * g.angle))
        c.append(math.cos(2 * g.angle))
        wd.append(g.width / max_width)
    return SparseTargets(
        np.asarray(idx, dtype=np.int64),
        np.asarray(s, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
        np.asarray(wd, dtype=np.float64),
    )


def rasterize(rect: GraspRectangle, shape: tuple[int, int]) -> np.ndarray:
    """Boolean mask of the pixels whose centers lie inside ``rect`` (clipped to the image)."""
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    pts = rect.corners
    r0, c0 = np.floor(pts.min(axis=0)).astype(int)
    r1, c1 = np.ceil(pts.max(axis=0)).astype(int)
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, h - 1), min(c1, w - 1)
    if r0 > r1 or c0 > c1:
        return mask
    rr, cc = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
    inside = np.ones(rr.shape, dtype=bool)
    nxt = pts[[1, 2, 3, 0]]
    area_sign = np.sign(np.dot(pts[:, 1], nxt[:, 0]) - np.dot(nxt[:, 1], pts[:, 0]))
    for a, b in zip(pts, nxt):
        cross = (b[1] - a[1]) * (rr - a[0]) - (b[0] - a[0]) * (cc - a[1])
        inside &= area_sign * cross >= -1e-9
    mask[r0 : r1 + 1, c0 : c1 + 1] = inside
    return mask


def footprint(g: Grasp, footprint_ratio: float, height_ratio: float = DEFAULT_HEIGHT_RATIO) -> GraspRectangle:
    return oriented_rectangle(g.center_row, g.center_col, g.angle, footprint_ratio * g.width, height_ratio * g.width)


def encode_labels_dense(
    labels: Sequence[Grasp],
    shape: tuple[int, int],
    footprint_ratio: float = DEFAULT_FOOTPRINT_RATIO,
    height_ratio: float = DEFAULT_HEIGHT_RATIO,
    max_width: float = MAX_WIDTH,
) -> ConfigMaps:
    """Paint every label's central footprint; everything else is a failure (all zeros).

    This is the densified target used by the image-wise MSE baseline.
    """
    q = np.zeros(shape, dtype=np.float32)
    s = np.zeros(shape, dtype=np.float32)
    c = np.zeros(shape, dtype=np.float32)
    wd = np.zeros(shape, dtype=np.float32)
    for g in labels:
        if g.width <= 0:
            continue
        m = rasterize(footprint(g, footprint_ratio, height_ratio), shape)
        q[m] = 1.0
        s[m] = math.sin(2 * g.angle)
        c[m] = math.cos(2 * g.angle)
        wd[m] = g.width / max_width
    return ConfigMaps(q, s, c, wd)


def _disc(radius: int) -> np.ndarray:
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return x * x + y * y <= radius * radius


def extract_grasps(
    maps: ConfigMaps,
    k: int,
    sigma: float = SMOOTH_SIGMA,
    nms_radius: int = NMS_RADIUS,
    max_width: float = MAX_WIDTH,
) -> list[Grasp]:
    """Top-``k`` quality peaks of the maps, strongest first.

    ``Q`` is Gaussian-smoothed, local maxima are found over a disc of radius
    ``nms_radius``, and peaks are accepted greedily in order of smoothed quality
    (ties go to the lower flat index) while rejecting any peak closer than
    ``nms_radius`` to an accepted one. Widths are read as fractions of
    ``max_width``. May return fewer than ``k`` grasps.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = maps.numpy()
    q = m.q.astype(np.float64)
    if q.ndim != 2:
        raise ValueError(f"expected a single (H, W) map, got shape {q.shape}")
    smooth = gaussian_filter(q, sigma=sigma) if sigma > 0 else q
    peaks = smooth >= maximum_filter(smooth, footprint=_disc(nms_radius), mode="nearest")
    flat = np.flatnonzero(peaks)
    order = flat[np.lexsort((flat, -smooth.ravel()[flat]))]
    ncols = q.shape[1]
    angle = recover_angle_map(m.phi_s, m.phi_c)
    chosen: list[tuple[int, int]] = []
    out: list[Grasp] = []
    r2 = nms_radius * nms_radius
    for f in order:
        r, c = divmod(int(f), ncols)
        if any((r - a) ** 2 + (c - b) ** 2 < r2 for a, b in chosen):
            continue
        chosen.append((r, c))
        width = float(np.clip(m.width[r, c] * max_width, 0.0, MAX_WIDTH))
        quality = float(np.clip(smooth[r, c], 0.0, 1.0))
        out.append(Grasp(r, c, float(angle[r, c]), width, quality))
        if len(out) == k:
            break
    return out
