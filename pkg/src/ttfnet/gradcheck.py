"""Central finite-difference checks of the analytic loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, encode_scene
from .loss import LossConfig, focal_loss, giou_reg_loss
from .synthetic import random_scene

FD_STEP = 1e-5
TOLERANCE = 1e-4


def numeric_grad(f, x: np.ndarray, step: float = FD_STEP, index=None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``.

    ``index`` restricts the probe to a boolean mask; other entries stay 0.
    """
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    idx = np.arange(flat.size) if index is None else np.flatnonzero(np.asarray(index).reshape(-1))
    for k in idx:
        orig = flat[k]
        flat[k] = orig + step
        up = f(x)
        flat[k] = orig - step
        down = f(x)
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * step)
    return g


def relative_error(analytic, numeric) -> float:
    a, n = np.ravel(analytic), np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def _focal_trial(rng: np.random.Generator, cfg: LossConfig) -> float:
    c, h, w = rng.integers(1, 4), rng.integers(2, 7), rng.integers(2, 7)
    target = rng.uniform(0.0, 0.99, size=(c, h, w))
    npos = int(rng.integers(1, 4))
    for _ in range(npos):
        target[rng.integers(c), rng.integers(h), rng.integers(w)] = 1.0
    # stay clear of the clamp so the loss is smooth around every probe
    pred = rng.uniform(0.02, 0.98, size=target.shape)
    m = int(rng.integers(1, 5))
    _, grad = focal_loss(pred, target, m, cfg)
    num = numeric_grad(lambda p: focal_loss(p, target, m, cfg)[0], pred)
    return relative_error(grad, num)


def _giou_trial(rng: np.random.Generator, cfg: LossConfig, enc: EncoderConfig) -> float:
    scene = random_scene(rng, size=64, n_boxes=(1, 3), box_size=(10, 48), num_classes=enc.num_classes)
    targets = encode_scene(scene, enc)
    mask = targets.weights[0] > 0
    if not mask.any():
        return 0.0
    ideal = targets.reg_targets / enc.s
    pred = np.abs(ideal * rng.uniform(0.5, 1.5, size=ideal.shape) + rng.uniform(0.05, 0.5, size=ideal.shape))
    _, grad = giou_reg_loss(pred, targets, cfg)
    probe = np.broadcast_to(mask, pred.shape)
    num = numeric_grad(lambda p: giou_reg_loss(p, targets, cfg)[0], pred, index=probe)
    return relative_error(grad[probe], num[probe])


@dataclass(frozen=True)
class GradcheckReport:
    focal_max_error: float
    giou_max_error: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.focal_max_error < TOLERANCE and self.giou_max_error < TOLERANCE


def run_gradcheck(seed: int = 0, trials: int = 100, loss_cfg: LossConfig = LossConfig()) -> GradcheckReport:
    """Max relative gradient error over ``trials`` random focal and GIoU configurations."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    enc = EncoderConfig(num_classes=3)
    focal = max(_focal_trial(rng, loss_cfg) for _ in range(trials))
    gi = max(_giou_trial(rng, loss_cfg, enc) for _ in range(trials))
    return GradcheckReport(focal, gi, trials)
