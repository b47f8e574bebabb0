"""Training-target encoding: class heatmap, regression targets and sample weights."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .geometry import BoundingBox
from .ingest import Scene
from .kernel import gaussian, in_support, kernel_spec, quantize_center, render_kernel

SUBAREA_MODES = ("gaussian", "rectangle", "center-only")
WEIGHT_MODES = ("uniform", "norm", "norm-sqrt", "norm-log", "gaussian-norm-log")


@dataclass(frozen=True)
class EncoderConfig:
    alpha: float = 0.54
    beta: float = 0.54
    r: int = 4
    num_classes: int = 80
    s: float = 16.0
    subarea_mode: str = "gaussian"
    weight_mode: str = "gaussian-norm-log"
    aspect_aware: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.r < 1:
            raise ValueError(f"stride must be >= 1, got {self.r}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if not self.s > 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.subarea_mode not in SUBAREA_MODES:
            raise ValueError(f"unknown subarea mode {self.subarea_mode!r}; choose from {SUBAREA_MODES}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weight_mode!r}; choose from {WEIGHT_MODES}")

    def grid_shape(self, scene: Scene) -> tuple[int, int]:
        """``(rows, cols)`` of the target grid for a scene."""
        return math.ceil(scene.height / self.r), math.ceil(scene.width / self.r)

    def with_(self, **changes) -> "EncoderConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EncodedTargets:
    """Dense targets for one scene.

    ``heatmap`` is ``(C, H, W)``, ``reg_targets`` ``(4, H, W)`` raw pixel
    distances, ``weights`` ``(1, H, W)`` and ``owner`` ``(H, W)`` with the
    annotation index of each sample cell (-1 elsewhere). ``boxes`` is the
    ``(M, 4)`` image-scale annotation array indexed by ``owner``.
    """

    heatmap: np.ndarray
    reg_targets: np.ndarray
    weights: np.ndarray
    owner: np.ndarray
    boxes: np.ndarray
    class_ids: np.ndarray
    r: int
    s: float

    @property
    def num_annotations(self) -> int:
        return len(self.boxes)

    @property
    def num_samples(self) -> int:
        return int(np.count_nonzero(self.weights[0] > 0))

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.owner.shape


def feature_box(box: BoundingBox, r: float) -> BoundingBox:
    return box.scale(1.0 / r)


def _check_classes(scene: Scene, cfg: EncoderConfig) -> None:
    for k, a in enumerate(scene.annotations):
        if not 0 <= a.class_id < cfg.num_classes:
            raise ValueError(
                f"class out of range: image {scene.image_id} annotation {k} has class id "
                f"{a.class_id}, expected < {cfg.num_classes}"
            )


def encode_heatmap(scene: Scene, cfg: EncoderConfig) -> np.ndarray:
    """Per-class element-wise maximum of the localization kernels."""
    _check_classes(scene, cfg)
    gh, gw = cfg.grid_shape(scene)
    heat = np.zeros((cfg.num_classes, gh, gw), dtype=np.float64)
    for a in scene.annotations:
        rk = render_kernel(feature_box(a.box, cfg.r), cfg.alpha, gw, gh, cfg.aspect_aware)
        if rk.empty:
            continue
        view = heat[a.class_id, rk.rows, rk.cols]
        np.maximum(view, rk.patch, out=view)
    return heat


def sample_weight(mode: str, gaussian_prob, gaussian_prob_sum, area: float, n_samples: int):
    """Weight of one regression sample under a weighting mode.

    ``gaussian_prob`` may be an array; the result then has its shape.
    """
    if area <= 0 or n_samples < 1:
        raise ValueError(f"need area > 0 and n_samples >= 1, got {area}, {n_samples}")
    g = np.asarray(gaussian_prob, dtype=np.float64)
    if mode == "uniform":
        w = np.ones_like(g)
    elif mode == "norm":
        w = np.full_like(g, 1.0 / n_samples)
    elif mode == "norm-sqrt":
        w = np.full_like(g, math.sqrt(area) / n_samples)
    elif mode in ("norm-log", "gaussian-norm-log"):
        factor = math.log(area)
        if factor <= 0:
            warnings.warn(f"box area {area} <= 1 gives a non-positive log factor; weight set to 0", stacklevel=2)
            factor = 0.0
        if mode == "norm-log":
            w = np.full_like(g, factor / n_samples)
        else:
            w = factor * g / gaussian_prob_sum
    else:
        raise ValueError(f"unknown weight mode {mode!r}")
    return w if w.ndim else float(w)


def _subarea(box: BoundingBox, cfg: EncoderConfig, gw: int, gh: int):
    """Sample cells of one annotation.

    Returns ``(cols, rows, gauss)``: integer index arrays of the cells and the
    untruncated regression-kernel value at each (1.0 at the centre).
    """
    fbox = feature_box(box, cfg.r)
    ci, cj = quantize_center(fbox)
    if cfg.subarea_mode == "center-only" or cfg.beta == 0:
        spec = None
        cand = np.zeros((gh, gw), dtype=bool)
        if 0 <= ci < gw and 0 <= cj < gh:
            cand[cj, ci] = True
    else:
        spec = kernel_spec(fbox, cfg.beta, cfg.aspect_aware)
        ys, xs = np.mgrid[0:gh, 0:gw]
        if cfg.subarea_mode == "gaussian":
            cand = in_support(spec, xs, ys)
        else:
            # beta-scaled box about the true centre, on image scale
            cx, cy = box.center
            hw, hh = cfg.beta * box.width / 2.0, cfg.beta * box.height / 2.0
            px, py = xs * cfg.r, ys * cfg.r
            cand = (np.abs(px - cx) <= hw) & (np.abs(py - cy) <= hh)
            if 0 <= ci < gw and 0 <= cj < gh:
                cand[cj, ci] = True
    # keep only cells whose reference point lies inside the box
    xs_ref = np.arange(gw) * cfg.r
    ys_ref = np.arange(gh) * cfg.r
    inside = ((ys_ref >= box.y1) & (ys_ref <= box.y2))[:, None] & ((xs_ref >= box.x1) & (xs_ref <= box.x2))[None, :]
    rows, cols = np.nonzero(cand & inside)
    if spec is None:
        gauss = np.ones(len(rows))
    else:
        gauss = gaussian(spec, cols, rows)
    return cols, rows, gauss


def encode_regression(scene: Scene, cfg: EncoderConfig):
    """Regression targets, sample weights and owner map for a scene.

    Annotations are written largest-area first so that cells shared by
    several sub-areas end up owned by the smallest box; among equal areas
    the lower annotation index wins.
    """
    _check_classes(scene, cfg)
    gh, gw = cfg.grid_shape(scene)
    reg = np.zeros((4, gh, gw), dtype=np.float64)
    weights = np.zeros((1, gh, gw), dtype=np.float64)
    owner = np.full((gh, gw), -1, dtype=np.int32)

    anns = scene.annotations
    order = sorted(range(len(anns)), key=lambda k: (-anns[k].box.area, -k))
    for k in order:
        box = anns[k].box
        cols, rows, gauss = _subarea(box, cfg, gw, gh)
        if len(cols) == 0:
            warnings.warn(
                f"image {scene.image_id} annotation {k}: no grid reference point inside box "
                f"{box.as_tuple()}; it contributes no regression samples",
                stacklevel=2,
            )
            continue
        w = sample_weight(cfg.weight_mode, gauss, gauss.sum(), box.area, len(cols))
        px, py = cols * cfg.r, rows * cfg.r
        reg[0, rows, cols] = px - box.x1
        reg[1, rows, cols] = py - box.y1
        reg[2, rows, cols] = box.x2 - px
        reg[3, rows, cols] = box.y2 - py
        weights[0, rows, cols] = w
        owner[rows, cols] = k
    return reg, weights, owner


def encode_scene(scene: Scene, cfg: EncoderConfig) -> EncodedTargets:
    heat = encode_heatmap(scene, cfg)
    reg, weights, owner = encode_regression(scene, cfg)
    boxes = np.array([b.as_tuple() for b in scene.boxes], dtype=np.float64).reshape(-1, 4)
    return EncodedTargets(
        heatmap=heat,
        reg_targets=reg,
        weights=weights,
        owner=owner,
        boxes=boxes,
        class_ids=np.array(scene.class_ids, dtype=np.int64),
        r=cfg.r,
        s=cfg.s,
    )


def center_collisions(scene: Scene, targets: EncodedTargets) -> list[int]:
    """Annotations that an ideal decode cannot recover.

    An annotation collides when its centre cell is owned by another box,
    carries no weight, or is shared with a same-class annotation.
    """
    bad = set()
    seen: dict[tuple[int, int, int], int] = {}
    gh, gw = targets.grid_shape
    for k, a in enumerate(scene.annotations):
        ci, cj = quantize_center(feature_box(a.box, targets.r))
        key = (a.class_id, ci, cj)
        if key in seen:
            bad.update((k, seen[key]))
        seen.setdefault(key, k)
        if not (0 <= ci < gw and 0 <= cj < gh):
            bad.add(k)
            continue
        if targets.owner[cj, ci] != k or targets.weights[0, cj, ci] <= 0:
            bad.add(k)
    return sorted(bad)

