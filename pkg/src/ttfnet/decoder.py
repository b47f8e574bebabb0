"""Peak-based decoding of heatmap and regression maps into detections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .encoder import center_collisions, encode_scene, feature_box
from .geometry import BoundingBox, decode_box
from .kernel import quantize_center


@dataclass(frozen=True)
class Detection:
    class_id: int
    score: float
    box: BoundingBox
    cell: tuple[int, int]  # (row, col) of the peak on the grid

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "score": self.score, "box": list(self.box.as_tuple())}


def peak_mask(heatmap, window: int = 3) -> np.ndarray:
    """Cells equal to the maximum of their ``window x window`` neighbourhood.

    Works per channel on ``(C, H, W)`` or on a single ``(H, W)`` grid. The
    border is zero-padded and tied cells are all kept. Cells at or below 0
    are background and never peaks.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    h = np.asarray(heatmap)
    size = (1,) * (h.ndim - 2) + (window, window)
    pooled = maximum_filter(h, size=size, mode="constant", cval=0.0)
    return (h == pooled) & (h > 0)


def detect(
    heatmap,
    reg_map,
    cfg,
    topk: int = 100,
    score_thresh: float = 0.01,
    window: int = 3,
    image_size: tuple[float, float] | None = None,
) -> list[Detection]:
    """Decode the top-scoring heatmap peaks into boxes.

    ``reg_map`` is the ``(4, H, W)`` prediction on the enlarged scale.
    Candidates are ordered by score (descending), then channel, then
    row-major cell index. Negative regression values are treated as 0.
    ``cfg`` only needs ``r`` and ``s`` attributes.
    """
    heatmap = np.asarray(heatmap)
    reg_map = np.asarray(reg_map)
    if heatmap.ndim != 3 or reg_map.ndim != 3 or reg_map.shape[0] != 4:
        raise ValueError(f"expected (C,H,W) heatmap and (4,H,W) regression, got {heatmap.shape}, {reg_map.shape}")
    if heatmap.shape[1:] != reg_map.shape[1:]:
        raise ValueError(f"grid mismatch: heatmap {heatmap.shape[1:]} vs regression {reg_map.shape[1:]}")
    if topk <= 0:
        return []

    mask = peak_mask(heatmap, window) & (heatmap >= score_thresh)
    ch, rows, cols = np.nonzero(mask)  # already channel-major, row-major
    scores = heatmap[ch, rows, cols]
    order = np.argsort(-scores.astype(np.float64), kind="stable")[:topk]

    out = []
    for k in order:
        c, j, i = int(ch[k]), int(rows[k]), int(cols[k])
        pred = np.maximum(reg_map[:, j, i].astype(np.float64), 0.0)
        box = decode_box(i, j, pred, cfg.r, cfg.s, image_size=image_size)
        out.append(Detection(class_id=c, score=float(scores[k]), box=box, cell=(j, i)))
    return out


@dataclass(frozen=True)
class RoundTrip:
    max_error: float  # over recovered, non-colliding annotations
    collisions: tuple[int, ...]
    missing: tuple[int, ...]  # non-colliding annotations with no matching detection


def ideal_roundtrip(scene, cfg) -> RoundTrip:
    """Encode a scene, decode its ideal targets and compare with the annotations.

    An annotation is recovered by the detection at its quantized centre cell
    with the same class. Colliding annotations (see
    :func:`~ttfnet.encoder.center_collisions`) are reported but not scored.
    """
    targets = encode_scene(scene, cfg)
    collisions = tuple(center_collisions(scene, targets))
    dets = detect(targets.heatmap, targets.reg_targets / cfg.s, cfg, topk=targets.heatmap.size)
    by_key = {(d.class_id, d.cell): d for d in dets}
    worst, missing = 0.0, []
    for k, a in enumerate(scene.annotations):
        if k in collisions:
            continue
        ci, cj = quantize_center(feature_box(a.box, cfg.r))
        d = by_key.get((a.class_id, (cj, ci)))
        if d is None or d.score != 1.0:
            missing.append(k)
            continue
        err = max(abs(p - q) for p, q in zip(d.box.as_tuple(), a.box.as_tuple()))
        worst = max(worst, err)
    return RoundTrip(worst, collisions, tuple(missing))
