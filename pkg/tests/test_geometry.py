import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttfnet.geometry import (
    BoundingBox,
    RegressionVector,
    decode_box,
    decode_boxes_array,
    giou,
    giou_arrays,
    giou_with_grad,
    iou,
    regression_target,
)


def giou_oracle(a, b):
    """Exact rational GIoU from interval overlaps; shares no code with the library."""
    ax1, ay1, ax2, ay2 = map(Fraction, a)
    bx1, by1, bx2, by2 = map(Fraction, b)
    ow = max(Fraction(0), min(ax2, bx2) - max(ax1, bx1))
    oh = max(Fraction(0), min(ay2, by2) - max(ay1, by1))
    inter = ow * oh
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    return inter / union - (hull - union) / hull, inter / union


coord = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
size = st.floats(0.5, 80, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(size), draw(size)
    return BoundingBox(x, y, x + w, y + h)


def test_box_rejects_inverted_corners():
    with pytest.raises(ValueError):
        BoundingBox(5, 0, 1, 3)


def test_box_properties():
    b = BoundingBox(8, 12, 40, 28)
    assert (b.width, b.height, b.area, b.center) == (32, 16, 512, (24, 20))
    assert b.scale(0.25).as_tuple() == (2, 3, 10, 7)
    assert b.translate(1, -2).as_tuple() == (9, 10, 41, 26)


def test_giou_identical_boxes():
    assert giou(BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 10)) == 1.0


def test_giou_disjoint_unit_boxes():
    assert giou(BoundingBox(0, 0, 1, 1), BoundingBox(2, 2, 3, 3)) == pytest.approx(-7 / 9, abs=1e-12)


def test_giou_half_overlap():
    g = giou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15))
    assert g == pytest.approx(25 / 175 - 50 / 225, abs=1e-12)
    assert g == pytest.approx(-0.07937, abs=1e-5)


def test_giou_zero_area_pair_is_zero():
    assert giou(BoundingBox(1, 1, 1, 1), BoundingBox(1, 1, 1, 1)) == 0.0


@given(boxes(), boxes())
def test_giou_matches_rational_oracle(a, b):
    g_ref, iou_ref = giou_oracle(a.as_tuple(), b.as_tuple())
    assert giou(a, b) == pytest.approx(float(g_ref), abs=1e-9)
    assert iou(a, b) == pytest.approx(float(iou_ref), abs=1e-9)


@given(boxes(), boxes())
def test_giou_symmetric_and_bounded(a, b):
    g = giou(a, b)
    assert g == pytest.approx(giou(b, a), abs=1e-12)
    assert iou(a, b) - 1 - 1e-12 <= g <= iou(a, b) + 1e-12


@given(boxes())
def test_giou_self_is_one(a):
    assert giou(a, a) == pytest.approx(1.0, abs=1e-12)


@given(boxes(), boxes(), st.floats(-50, 50), st.floats(-50, 50))
def test_giou_translation_invariant(a, b, dx, dy):
    assert giou(a.translate(dx, dy), b.translate(dx, dy)) == pytest.approx(giou(a, b), abs=1e-9)


def test_giou_arrays_agree_with_scalar():
    rng = np.random.default_rng(3)
    p = rng.uniform(0, 50, (64, 2))
    p = np.hstack([p, p + rng.uniform(0.5, 30, (64, 2))])
    t = rng.uniform(0, 50, (64, 2))
    t = np.hstack([t, t + rng.uniform(0.5, 30, (64, 2))])
    ref = [giou(BoundingBox(*a), BoundingBox(*b)) for a, b in zip(p, t)]
    np.testing.assert_allclose(giou_arrays(p, t), ref, atol=1e-12)


def test_giou_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    p = rng.uniform(0, 40, (200, 2))
    p = np.hstack([p, p + rng.uniform(1, 30, (200, 2))])
    t = rng.uniform(0, 40, (200, 2))
    t = np.hstack([t, t + rng.uniform(1, 30, (200, 2))])
    _, dg = giou_with_grad(p, t)
    h = 1e-6
    for k in range(4):
        up, down = p.copy(), p.copy()
        up[:, k] += h
        down[:, k] -= h
        num = (giou_arrays(up, t) - giou_arrays(down, t)) / (2 * h)
        np.testing.assert_allclose(dg[:, k], num, atol=1e-6)


def test_regression_target_worked_example():
    assert regression_target(BoundingBox(8, 12, 40, 28), 5, 4, 4) == (12, 4, 20, 12)


def test_regression_target_symmetric_center_and_corner():
    box = BoundingBox(0, 0, 8, 8)
    assert regression_target(box, 1, 1, 4) == (4, 4, 4, 4)
    assert regression_target(box, 0, 0, 4) == (0, 0, 8, 8)


def test_regression_target_outside_box_rejected():
    with pytest.raises(ValueError, match="outside box"):
        regression_target(BoundingBox(8, 12, 40, 28), 0, 0, 4)


def test_decode_box_worked_example():
    assert decode_box(10, 8, (1, 1, 1, 1), 4, 16).as_tuple() == (24, 16, 56, 48)


def test_decode_box_zero_prediction_is_point():
    assert decode_box(10, 8, (0, 0, 0, 0), 4, 16).as_tuple() == (40, 32, 40, 32)


def test_decode_box_clamps_to_image():
    b = decode_box(1, 1, (1, 1, 10, 10), 4, 16, image_size=(64, 48))
    assert b.as_tuple() == (0, 0, 64, 48)


def test_regression_vector_scaling():
    v = RegressionVector(16, 32, 8, 4)
    assert v / 16 == (1, 2, 0.5, 0.25)
    assert (v / 16) * 16 == v


@st.composite
def box_and_point(draw):
    r = draw(st.sampled_from([1, 2, 4, 8]))
    i, j = draw(st.integers(0, 40)), draw(st.integers(0, 40))
    px, py = i * r, j * r
    left, top = draw(st.floats(0, 60)), draw(st.floats(0, 60))
    right, bottom = draw(st.floats(0, 60)), draw(st.floats(0, 60))
    return BoundingBox(px - left, py - top, px + right, py + bottom), i, j, r


@given(box_and_point(), st.sampled_from([1.0, 4.0, 16.0, 10.0]))
def test_decode_inverts_regression_target(case, s):
    box, i, j, r = case
    got = decode_box(i, j, regression_target(box, i, j, r) / s, r, s)
    assert max(abs(p - q) for p, q in zip(got.as_tuple(), box.as_tuple())) <= 1e-9


def test_decode_boxes_array_matches_scalar():
    ref = np.array([[40.0, 32.0], [0.0, 4.0]])
    pred = np.array([[1, 1, 1, 1], [0.5, 0, 2, 0.25]])
    got = decode_boxes_array(ref, pred, 16)
    for row, (x, y), p in zip(got, ref, pred):
        assert tuple(row) == decode_box(x / 4, y / 4, p, 4, 16).as_tuple()
    assert not math.isnan(got.sum())
