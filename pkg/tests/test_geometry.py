import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlgsl.geometry import (
    Grasp,
    GraspRectangle,
    angle_diff,
    is_success,
    normalize_angle,
    rect_iou,
    to_rectangle,
)

from oracles import raster_iou, rect_corners_trig

finite = st.floats(-50, 50, allow_nan=False)


@pytest.mark.parametrize(
    "angle, expected",
    [(0.0, 0.0), (math.pi, 0.0), (2.0, 2.0 - math.pi)],
)
def test_normalize_angle_examples(angle, expected):
    assert normalize_angle(angle) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_normalize_angle_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        normalize_angle(bad)


@given(finite)
def test_normalize_angle_range_and_idempotence(x):
    y = normalize_angle(x)
    assert -math.pi / 2 <= y < math.pi / 2
    assert normalize_angle(y) == y
    assert angle_diff(normalize_angle(x + math.pi), y) < 1e-9
    # same residue mod pi
    k = (x - y) / math.pi
    assert abs(k - round(k)) < 1e-9


def test_angle_diff_examples():
    assert angle_diff(0.3, 0.3) == 0.0
    assert angle_diff(math.pi / 2, -math.pi / 2) == pytest.approx(0.0, abs=1e-12)
    assert angle_diff(0.1, -0.4) == pytest.approx(0.5)


@given(finite, finite)
def test_angle_diff_bounds(a, b):
    d = angle_diff(a, b)
    assert 0.0 <= d <= math.pi / 2
    assert angle_diff(a, a) == 0.0


def test_grasp_normalizes_and_validates():
    g = Grasp(5, 6, math.pi, 40.0)
    assert g.angle == 0.0
    with pytest.raises(ValueError):
        Grasp(0, 0, 0.0, 151.0)
    with pytest.raises(ValueError):
        Grasp(0, 0, 0.0, 10.0, quality=1.5)


def test_axis_aligned_rectangle():
    r = to_rectangle(Grasp(50, 50, 0.0, 40.0), 0.5)
    lo, hi = r.corners.min(axis=0), r.corners.max(axis=0)
    np.testing.assert_allclose(lo, [40, 30])
    np.testing.assert_allclose(hi, [60, 70])
    np.testing.assert_allclose(r.center, [50, 50])


def test_rotated_quarter_turn():
    r = to_rectangle(Grasp(50, 50, math.pi / 2, 40.0), 0.5)
    lo, hi = r.corners.min(axis=0), r.corners.max(axis=0)
    np.testing.assert_allclose(lo, [30, 40], atol=1e-9)
    np.testing.assert_allclose(hi, [70, 60], atol=1e-9)


def test_rectangle_matches_trig_oracle():
    angle = math.pi / 6
    r = to_rectangle(Grasp(10, 20, angle, 30.0), 0.5)
    np.testing.assert_allclose(r.corners, rect_corners_trig(10, 20, angle, 30.0, 15.0), atol=1e-12)


def test_rectangle_errors():
    with pytest.raises(ValueError):
        to_rectangle(Grasp(0, 0, 0.0, 0.0))
    with pytest.raises(ValueError):
        to_rectangle(Grasp(0, 0, 0.0, 10.0), height_ratio=0.0)
    with pytest.raises(ValueError):
        GraspRectangle(np.array([[0, 0], [0, 1], [2, 3], [1, 0]], dtype=float))


def test_iou_examples():
    a = to_rectangle(Grasp(50, 50, 0.0, 40.0))
    assert rect_iou(a, a) == 1.0
    far = to_rectangle(Grasp(200, 200, 0.0, 40.0))
    assert rect_iou(a, far) == 0.0
    shifted = to_rectangle(Grasp(50, 70, 0.0, 40.0))
    assert rect_iou(a, shifted) == pytest.approx(1 / 3, abs=1e-12)
    assert raster_iou(a.corners, shifted.corners) == pytest.approx(1 / 3, abs=0.02)


def test_iou_degenerate():
    flat = GraspRectangle(np.array([[0, 0], [0, 5], [0, 5], [0, 0]], dtype=float))
    with pytest.raises(ValueError):
        rect_iou(flat, to_rectangle(Grasp(0, 0, 0.0, 10.0)))


rect_params = st.tuples(
    st.integers(0, 60), st.integers(0, 60), st.floats(-1.6, 1.6), st.floats(4, 60)
)


@settings(max_examples=200)
@given(rect_params, rect_params)
def test_iou_symmetric(p, q):
    a = to_rectangle(Grasp(p[0], p[1], p[2], p[3]))
    b = to_rectangle(Grasp(q[0], q[1], q[2], q[3]))
    iou = rect_iou(a, b)
    assert 0.0 <= iou <= 1.0
    assert iou == pytest.approx(rect_iou(b, a), abs=1e-12)
    assert rect_iou(a, a) == 1.0


def test_success_examples():
    lab = Grasp(50, 50, 0.2, 40.0)
    assert is_success(lab, [lab])
    assert not is_success(Grasp(150, 150, 0.2, 40.0), [lab])
    with pytest.raises(ValueError):
        is_success(lab, [])


def test_success_rejects_large_angle_error():
    lab = Grasp(50, 50, 0.0, 40.0)
    turned = math.radians(35)
    # find a center offset giving IoU near 0.30 at 35 degrees, using the oracle for the overlap
    chosen = None
    for dc in range(0, 20):
        cand = Grasp(50, 50 + dc, turned, 40.0)
        iou = raster_iou(to_rectangle(cand).corners, to_rectangle(lab).corners, step=0.1)
        if abs(iou - 0.30) < 0.03:
            chosen = cand
            break
    assert chosen is not None
    assert rect_iou(to_rectangle(chosen), to_rectangle(lab)) >= 0.25
    assert not is_success(chosen, [lab])
    # the same overlap with a 25 degree error passes
    ok = Grasp(chosen.center_row, chosen.center_col, math.radians(25), 40.0)
    if rect_iou(to_rectangle(ok), to_rectangle(lab)) >= 0.25:
        assert is_success(ok, [lab])


def test_vanishing_prediction_width_is_a_miss():
    label = Grasp(10, 10, 0.0, 20.0)
    assert not is_success(Grasp(10, 10, 0.0, 1e-7), [label])
    assert not is_success(Grasp(10, 10, 0.0, 20.0), [Grasp(10, 10, 0.0, 0.0)])
