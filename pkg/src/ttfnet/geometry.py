"""Box arithmetic: areas, GIoU, regression targets and stride/scale decoding.

Scalar helpers operate on :class:`BoundingBox` values; the ``*_arrays``
variants are the vectorized forms used by the loss module and work on
``(..., 4)`` float64 arrays in ``(x1, y1, x2, y2)`` order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image pixels, stored as two corners."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"malformed box {self.as_tuple()}: need x1<=x2 and y1<=y2")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scale(self, factor: float) -> "BoundingBox":
        return BoundingBox(self.x1 * factor, self.y1 * factor, self.x2 * factor, self.y2 * factor)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2


class RegressionVector(NamedTuple):
    """Distances from a reference point to the left, top, right and bottom sides."""

    w_l: float
    h_t: float
    w_r: float
    h_b: float

    def __truediv__(self, other: float) -> "RegressionVector":
        return RegressionVector(*(v / other for v in self))

    def __mul__(self, other: float) -> "RegressionVector":
        return RegressionVector(*(v * other for v in self))


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    return max(iw, 0.0) * max(ih, 0.0)


def enclosing_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    return BoundingBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU: ``IoU - (|C| - |U|) / |C|`` with C the enclosing box.

    Two zero-area boxes give 0 rather than 0/0.
    """
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    hull = enclosing_box(a, b).area
    if union <= 0.0 or hull <= 0.0:
        return 0.0
    return inter / union - (hull - union) / hull


def regression_target(box: BoundingBox, i: int, j: int, r: float) -> RegressionVector:
    """Distances from the reference point ``(i*r, j*r)`` to the four box sides.

    ``i`` is the grid column and ``j`` the grid row.
    """
    px, py = i * r, j * r
    if not box.contains_point(px, py):
        raise ValueError(
            f"reference point ({px}, {py}) of cell (i={i}, j={j}) lies outside box "
            f"{box.as_tuple()}; the encoder selected an invalid sample"
        )
    return RegressionVector(px - box.x1, py - box.y1, box.x2 - px, box.y2 - py)


def decode_box(
    i: float,
    j: float,
    pred,
    r: float,
    s: float,
    image_size: tuple[float, float] | None = None,
) -> BoundingBox:
    """Turn a per-cell prediction into an image-scale box.

    ``pred`` holds ``(w_l, h_t, w_r, h_b)`` on the enlarged scale, so each
    component is multiplied by ``s`` before being added to ``(i*r, j*r)``.
    With ``image_size=(width, height)`` the result is clamped to the image.
    """
    w_l, h_t, w_r, h_b = pred
    px, py = i * r, j * r
    x1, y1, x2, y2 = px - w_l * s, py - h_t * s, px + w_r * s, py + h_b * s
    if image_size is not None:
        width, height = image_size
        x1, x2 = min(max(x1, 0.0), width), min(max(x2, 0.0), width)
        y1, y2 = min(max(y1, 0.0), height), min(max(y2, 0.0), height)
    return BoundingBox(float(x1), float(y1), float(x2), float(y2))


# ---------------------------------------------------------------------------
# Vectorized forms
# ---------------------------------------------------------------------------


def decode_boxes_array(ref_xy: np.ndarray, pred: np.ndarray, s: float) -> np.ndarray:
    """Vectorized decode. ``ref_xy`` is ``(N, 2)`` image-scale reference points."""
    ref_xy = np.asarray(ref_xy, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    return np.stack(
        [
            ref_xy[:, 0] - pred[:, 0] * s,
            ref_xy[:, 1] - pred[:, 1] * s,
            ref_xy[:, 0] + pred[:, 2] * s,
            ref_xy[:, 1] + pred[:, 3] * s,
        ],
        axis=-1,
    )


def giou_arrays(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Element-wise GIoU of two ``(N, 4)`` box arrays."""
    return giou_with_grad(pred, target)[0]


def giou_with_grad(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """GIoU of ``pred`` against ``target`` and its gradient w.r.t. ``pred``.

    Returns ``(g, dg)`` with ``g`` of shape ``(N,)`` and ``dg`` of shape
    ``(N, 4)`` holding ``d giou / d (x1, y1, x2, y2)`` of the predicted box.
    At the non-differentiable ties of min/max the branch favouring the
    predicted box as the active side is taken.
    """
    p = np.asarray(pred, dtype=np.float64).reshape(-1, 4)
    t = np.asarray(target, dtype=np.float64).reshape(-1, 4)
    px1, py1, px2, py2 = p.T
    tx1, ty1, tx2, ty2 = t.T

    pw, ph = px2 - px1, py2 - py1
    area_p = pw * ph
    area_t = (tx2 - tx1) * (ty2 - ty1)

    # intersection
    ix1_p = px1 >= tx1  # predicted side is the max()
    iy1_p = py1 >= ty1
    ix2_p = px2 <= tx2  # predicted side is the min()
    iy2_p = py2 <= ty2
    iw_raw = np.minimum(px2, tx2) - np.maximum(px1, tx1)
    ih_raw = np.minimum(py2, ty2) - np.maximum(py1, ty1)
    iw_pos = iw_raw > 0
    ih_pos = ih_raw > 0
    iw = np.where(iw_pos, iw_raw, 0.0)
    ih = np.where(ih_pos, ih_raw, 0.0)
    inter = iw * ih

    union = area_p + area_t - inter

    # enclosing hull
    cx1_p = px1 <= tx1
    cy1_p = py1 <= ty1
    cx2_p = px2 >= tx2
    cy2_p = py2 >= ty2
    cw = np.maximum(px2, tx2) - np.minimum(px1, tx1)
    ch = np.maximum(py2, ty2) - np.minimum(py1, ty1)
    hull = cw * ch

    valid = (union > 0) & (hull > 0)
    safe_u = np.where(valid, union, 1.0)
    safe_c = np.where(valid, hull, 1.0)
    g = np.where(valid, inter / safe_u - (hull - union) / safe_c, 0.0)

    # derivatives of the partial quantities w.r.t. (x1, y1, x2, y2)
    d_area = np.stack([-ph, -pw, ph, pw], axis=-1)
    d_iw = np.stack(
        [
            -(iw_pos & ix1_p).astype(np.float64),
            np.zeros_like(iw),
            (iw_pos & ix2_p).astype(np.float64),
            np.zeros_like(iw),
        ],
        axis=-1,
    )
    d_ih = np.stack(
        [
            np.zeros_like(ih),
            -(ih_pos & iy1_p).astype(np.float64),
            np.zeros_like(ih),
            (ih_pos & iy2_p).astype(np.float64),
        ],
        axis=-1,
    )
    d_inter = d_iw * ih[:, None] + d_ih * iw[:, None]
    d_union = d_area - d_inter
    d_cw = np.stack(
        [-cx1_p.astype(np.float64), np.zeros_like(cw), cx2_p.astype(np.float64), np.zeros_like(cw)],
        axis=-1,
    )
    d_ch = np.stack(
        [np.zeros_like(ch), -cy1_p.astype(np.float64), np.zeros_like(ch), cy2_p.astype(np.float64)],
        axis=-1,
    )
    d_hull = d_cw * ch[:, None] + d_ch * cw[:, None]

    # g = I/U - 1 + U/C
    su, sc = safe_u[:, None], safe_c[:, None]
    dg = (
        d_inter / su
        - inter[:, None] * d_union / su**2
        + d_union / sc
        - union[:, None] * d_hull / sc**2
    )
    dg = np.where(valid[:, None], dg, 0.0)
    return g, dg
