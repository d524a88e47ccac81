"""Procedural single-object depth scenes with analytic antipodal labels.

Objects are flat-topped prisms (bar, T, L, disc with two flats) seen from
above: depth 0.9 on a 1.0 background. Every outline is kept as an exact polygon
so labels and the antipodal oracle work from geometry rather than pixels.
Sizes are given for a 300 px frame and scale with ``image_size``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon, box
from shapely.ops import unary_union

from ..geometry import MAX_WIDTH, Grasp, grasp_axis
from .collision import Gripper, collision_check
from .sample import Sample

BACKGROUND = 1.0
OBJECT_DEPTH = 0.9
MAX_LABELS = 16
CLEARANCE = 12.0  # px at 300, split evenly between the two sides
SHAPE_KINDS = ("bar", "tee", "ell", "disc")


@dataclass(frozen=True)
class Section:
    """A straight graspable stretch in local object coordinates.

    Grasps centered on the segment ``a``-``b`` close along ``axis_angle``
    (local radians) over an object thickness ``thickness``.
    """

    a: tuple[float, float]
    b: tuple[float, float]
    axis_angle: float
    thickness: float


def _local_shape(kind: str, p: dict):
    """Outline polygon and graspable sections, local frame: x right, y up."""
    if kind == "bar":
        L, T = p["length"], p["thickness"]
        poly = box(-L / 2, -T / 2, L / 2, T / 2)
        secs = [Section((-L / 2, 0), (L / 2, 0), math.pi / 2, T)]
    elif kind == "tee":
        L1, T1, L2, T2 = p["length"], p["thickness"], p["stem_length"], p["stem_thickness"]
        top = box(-L1 / 2, -T1 / 2, L1 / 2, T1 / 2)
        stem = box(-T2 / 2, -T1 / 2 - L2, T2 / 2, 0)
        poly = unary_union([top, stem])
        secs = [
            Section((-L1 / 2, 0), (L1 / 2, 0), math.pi / 2, T1),
            Section((0, -T1 / 2 - L2), (0, -T1 / 2), 0.0, T2),
        ]
    elif kind == "ell":
        L1, L2, T = p["length"], p["stem_length"], p["thickness"]
        arm1 = box(0, 0, L1, T)
        arm2 = box(0, 0, T, L2)
        poly = unary_union([arm1, arm2])
        secs = [
            Section((0, T / 2), (L1, T / 2), math.pi / 2, T),
            Section((T / 2, 0), (T / 2, L2), 0.0, T),
        ]
        poly = shapely.affinity.translate(poly, -L1 / 3, -L2 / 3)
        secs = [Section((s.a[0] - L1 / 3, s.a[1] - L2 / 3), (s.b[0] - L1 / 3, s.b[1] - L2 / 3), s.axis_angle, s.thickness) for s in secs]
    elif kind == "disc":
        R, gap = p["diameter"] / 2, p["flat_gap"]
        poly = Point(0, 0).buffer(R, quad_segs=64).intersection(box(-R, -gap / 2, R, gap / 2))
        half_chord = math.sqrt(max(R * R - (gap / 2) ** 2, 0.0))
        secs = [Section((-half_chord, 0), (half_chord, 0), math.pi / 2, gap)]
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    return shapely.geometry.polygon.orient(poly), secs


def _place(local_xy: np.ndarray, center_rc, angle: float) -> np.ndarray:
    """Local (x, y-up) points to image (row, col) after rotating by ``angle``."""
    u = grasp_axis(angle)  # local +x
    v = np.array([-u[1], u[0]])  # local +y, counterclockwise on screen
    pts = np.asarray(local_xy, dtype=np.float64)
    return np.asarray(center_rc, dtype=np.float64) + pts[:, :1] * u + pts[:, 1:2] * v


def polygon_rc(poly_rc) -> Polygon:
    """Shapely polygon (x=col, y=row) from an ``(N, 2)`` row/col array."""
    arr = np.asarray(poly_rc, dtype=np.float64)
    return Polygon(arr[:, ::-1])


def render_mask(polys_rc, shape) -> np.ndarray:
    h, w = shape
    rr, cc = np.mgrid[0:h, 0:w]
    mask = np.zeros(shape, dtype=bool)
    for p in polys_rc:
        mask |= shapely.contains_xy(polygon_rc(p), cc.ravel(), rr.ravel()).reshape(shape)
    return mask


def sample_shape_params(kind: str, rng: np.random.Generator, scale: float) -> dict:
    u = lambda lo, hi: float(rng.uniform(lo, hi)) * scale  # noqa: E731
    if kind == "bar":
        return {"length": u(120, 220), "thickness": u(24, 60)}
    if kind == "tee":
        return {"length": u(120, 200), "thickness": u(24, 44), "stem_length": u(70, 130), "stem_thickness": u(24, 44)}
    if kind == "ell":
        return {"length": u(100, 170), "stem_length": u(80, 150), "thickness": u(24, 44)}
    if kind == "disc":
        return {"diameter": u(160, 230), "flat_gap": u(50, 110)}
    raise ValueError(kind)


def render_object(kind: str, params: dict, center_rc, angle: float, shape, gripper: Gripper | None = None,
                  clearance: float | None = None, max_labels: int = MAX_LABELS, sample_id: str = "") -> Sample:
    """Draw one object and label its graspable sections.

    Labels sit on the centerline of each section, close across it with the
    object thickness plus ``clearance``, and must pass ``collision_check`` and
    fit the gripper; at most ``max_labels`` are kept, spread evenly.
    """
    scale = shape[0] / 300.0
    gripper = gripper or Gripper.for_image(shape[0])
    clearance = CLEARANCE * scale if clearance is None else clearance
    poly, secs = _local_shape(kind, params)
    ext = np.asarray(poly.exterior.coords)[:-1]
    poly_rc = _place(ext, center_rc, angle)
    mask = render_mask([poly_rc], shape)
    depth = np.where(mask, OBJECT_DEPTH, BACKGROUND).astype(np.float32)

    world_poly = polygon_rc(poly_rc)
    step = max(1.0, 2.0 * scale)
    cands: list[Grasp] = []
    for sec in secs:
        width = sec.thickness + clearance
        if width > gripper.max_width:
            continue
        a, b = np.array(sec.a), np.array(sec.b)
        n = max(int(np.linalg.norm(b - a) / step), 1)
        for t in np.linspace(0, 1, n + 1):
            r, c = _place((a + t * (b - a))[None], center_rc, angle)[0]
            g_angle = angle + sec.axis_angle
            ri, ci = int(round(r)), int(round(c))
            if not (0 <= ri < shape[0] and 0 <= ci < shape[1]) or not mask[ri, ci]:
                continue
            g = Grasp(ri, ci, g_angle, width)
            if not antipodal(world_poly, g, gripper.max_width):
                continue
            if collision_check(g, depth, gripper):
                continue
            cands.append(g)
    if len(cands) > max_labels:
        keep = np.unique(np.linspace(0, len(cands) - 1, max_labels).round().astype(int))
        cands = [cands[i] for i in keep]
    meta = {
        "id": sample_id,
        "background": BACKGROUND,
        "shapes": [{"kind": kind, "params": params, "polygon": poly_rc.tolist()}],
        "augment": [],
    }
    return Sample(depth, tuple(cands), meta)


def gen_toy_sample(rng: np.random.Generator, image_size: int = 300, gripper: Gripper | None = None,
                   kinds=SHAPE_KINDS, sample_id: str = "") -> Sample:
    scale = image_size / 300.0
    shape = (image_size, image_size)
    for _ in range(50):
        kind = kinds[int(rng.integers(len(kinds)))]
        params = sample_shape_params(kind, rng, scale)
        angle = float(rng.uniform(-math.pi, math.pi))
        poly, _ = _local_shape(kind, params)
        radius = max(math.hypot(x, y) for x, y in np.asarray(poly.exterior.coords))
        lo, hi = radius + 2, image_size - 1 - radius - 2
        if lo > hi:
            # too large to fit at every rotation; centre it
            lo = hi = (image_size - 1) / 2
        center = (float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)))
        s = render_object(kind, params, center, angle, shape, gripper, sample_id=sample_id)
        if s.labels:
            return s
    raise RuntimeError("could not generate a labelled toy object")


def gen_toy_dataset(n: int, seed: int, image_size: int = 300, gripper: Gripper | None = None,
                    prefix: str = "toy") -> list[Sample]:
    """``n`` single-object samples; identical for identical arguments."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        out.append(gen_toy_sample(rng, image_size, gripper, sample_id=f"{prefix}{i:05d}"))
    return out


def _outward_normal_at(poly: Polygon, pt: np.ndarray) -> np.ndarray:
    """Outward unit normal (x, y) of the edge of ``poly`` nearest to ``pt``."""
    coords = np.asarray(poly.exterior.coords)
    a, b = coords[:-1], coords[1:]
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", pt - a, ab) / np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-12), 0, 1)
    d = np.linalg.norm(a + t[:, None] * ab - pt, axis=1)
    e = ab[int(np.argmin(d))]
    # exterior oriented counterclockwise in (x, y): outward normal is (dy, -dx)
    n = np.array([e[1], -e[0]])
    return n / np.linalg.norm(n)


def antipodal(poly: Polygon, g: Grasp, max_width: float = MAX_WIDTH, cone_deg: float = 20.0) -> bool:
    """Whether ``g`` closes on two opposing edges of ``poly`` (x=col, y=row).

    The grasp center must lie inside the outline; the chord of the outline
    along the closing axis through the center must fit inside the opening;
    both contact normals must lie within ``cone_deg`` of the closing axis and
    be anti-parallel within ``cone_deg``.
    """
    if g.width <= 0 or g.width > max_width:
        return False
    poly = shapely.geometry.polygon.orient(poly)
    center = np.array([g.center_col, g.center_row], dtype=np.float64)
    if not poly.contains(Point(center)):
        return False
    d_rc = grasp_axis(g.angle)
    u = np.array([d_rc[1], d_rc[0]])  # (x=col, y=row)
    reach = 4 * max(poly.bounds[2] - poly.bounds[0], poly.bounds[3] - poly.bounds[1]) + 4
    chord = poly.intersection(LineString([center - reach * u, center + reach * u]))
    pieces = list(getattr(chord, "geoms", [chord]))
    piece = min(pieces, key=lambda p: p.distance(Point(center)))
    if piece.is_empty or piece.distance(Point(center)) > 1e-6:
        return False
    ends = np.asarray(piece.coords)
    proj = (ends - center) @ u
    pa, pb = ends[int(np.argmax(proj))], ends[int(np.argmin(proj))]
    if float(np.linalg.norm(pa - pb)) > g.width:
        return False
    na, nb = _outward_normal_at(poly, pa), _outward_normal_at(poly, pb)
    cos_cone = math.cos(math.radians(cone_deg))
    return bool(na @ u >= cos_cone and nb @ -u >= cos_cone and -(na @ nb) >= cos_cone)
