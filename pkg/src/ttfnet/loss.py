"""Localization focal loss, weighted GIoU regression loss and their gradients.

All computations run in float64 regardless of the input dtype.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import EncodedTargets
from .geometry import decode_boxes_array, giou_with_grad

REG_NORMALIZERS = ("n-reg", "weight-sum")

# d(decoded x1, y1, x2, y2) / d(w_l, h_t, w_r, h_b), before multiplying by s
_DECODE_SIGN = np.array([-1.0, -1.0, 1.0, 1.0])


@dataclass(frozen=True)
class LossConfig:
    alpha_f: float = 2.0
    beta_f: float = 4.0
    w_loc: float = 1.0
    w_reg: float = 5.0
    reg_normalizer: str = "n-reg"
    eps: float = 1e-6

    def __post_init__(self):
        if self.alpha_f < 0 or self.beta_f < 0:
            raise ValueError("focal exponents must be non-negative")
        if self.w_loc < 0 or self.w_reg < 0:
            raise ValueError("loss weights must be non-negative")
        if self.reg_normalizer not in REG_NORMALIZERS:
            raise ValueError(f"unknown reg_normalizer {self.reg_normalizer!r}; choose from {REG_NORMALIZERS}")
        if not 0 < self.eps < 0.5:
            raise ValueError(f"eps must be in (0, 0.5), got {self.eps}")


@dataclass
class LossReport:
    loc_loss: float
    reg_loss: float
    total: float
    grad_heatmap: np.ndarray
    grad_regression: np.ndarray
    meta: dict = field(default_factory=dict)


def focal_loss(pred, target, num_annotations: int, cfg: LossConfig = LossConfig()):
    """Penalty-reduced focal loss over a heatmap and its gradient w.r.t. ``pred``.

    Cells with ``target == 1`` are positives; every other cell is a negative
    whose penalty is scaled by ``(1 - target) ** beta_f``. Predictions are
    clamped to ``[eps, 1 - eps]``; the gradient is zero where the clamp is
    active. The sum is divided by ``num_annotations``.
    """
    if num_annotations < 1:
        raise ValueError("no annotations: focal loss normalizer is undefined")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")

    a, b, eps = cfg.alpha_f, cfg.beta_f, cfg.eps
    p = np.clip(pred, eps, 1.0 - eps)
    active = (pred >= eps) & (pred <= 1.0 - eps)
    pos = target == 1.0
    q = 1.0 - p
    log_p, log_q = np.log(p), np.log(q)

    neg_w = np.where(pos, 0.0, (1.0 - target) ** b)
    pos_term = -(q**a) * log_p
    neg_term = -neg_w * (p**a) * log_q
    loss = np.where(pos, pos_term, neg_term).sum() / num_annotations

    # derivatives of the per-cell terms w.r.t. p
    d_pos = a * q ** (a - 1.0) * log_p - q**a / p if a else -1.0 / p
    d_neg = -neg_w * ((a * p ** (a - 1.0) * log_q if a else 0.0) - p**a / q)
    grad = np.where(pos, d_pos, d_neg) * active / num_annotations
    return float(loss), grad


def focal_loss_logits(logits, target, num_annotations: int, cfg: LossConfig = LossConfig()):
    """Focal loss of ``sigmoid(logits)`` with the gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    p = sigmoid(z)
    loss, dp = focal_loss(p, target, num_annotations, cfg)
    return loss, dp * p * (1.0 - p)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def _gather(targets: EncodedTargets):
    rows, cols = np.nonzero(targets.weights[0] > 0)
    return rows, cols, targets.weights[0, rows, cols]


def giou_reg_loss(
    pred_reg,
    targets: EncodedTargets,
    cfg: LossConfig = LossConfig(),
    r: float | None = None,
    s: float | None = None,
):
    """Weighted ``1 - GIoU`` over all positively weighted cells.

    ``pred_reg`` is the ``(4, H, W)`` prediction on the enlarged scale, so a
    cell's predicted box is ``(i*r - w_l*s, j*r - h_t*s, i*r + w_r*s, j*r + h_b*s)``.
    Returns ``(loss, grad)`` with ``grad`` shaped like ``pred_reg``.
    """
    r = targets.r if r is None else r
    s = targets.s if s is None else s
    pred_reg = np.asarray(pred_reg, dtype=np.float64)
    if pred_reg.shape != targets.reg_targets.shape:
        raise ValueError(f"shape mismatch: pred {pred_reg.shape} vs targets {targets.reg_targets.shape}")
    grad = np.zeros_like(pred_reg)
    rows, cols, w = _gather(targets)
    if len(rows) == 0:
        return 0.0, grad

    norm = float(len(rows)) if cfg.reg_normalizer == "n-reg" else float(w.sum())
    ref = np.stack([cols * float(r), rows * float(r)], axis=-1)
    pred = pred_reg[:, rows, cols].T
    boxes = decode_boxes_array(ref, pred, s)
    gt = targets.boxes[targets.owner[rows, cols]]
    g, dg = giou_with_grad(boxes, gt)
    loss = float(((1.0 - g) * w).sum() / norm)

    d_pred = -(w[:, None] * dg) * (_DECODE_SIGN * s) / norm
    grad[:, rows, cols] = d_pred.T
    return loss, grad


def total_loss(loc: float, reg: float, cfg: LossConfig = LossConfig()) -> float:
    return cfg.w_loc * loc + cfg.w_reg * reg


def compute_losses(pred_heatmap, pred_reg, targets: EncodedTargets, cfg: LossConfig = LossConfig()) -> LossReport:
    """Both loss branches for one scene, with gradients w.r.t. the predictions."""
    loc, g_heat = focal_loss(pred_heatmap, targets.heatmap, targets.num_annotations, cfg)
    reg, g_reg = giou_reg_loss(pred_reg, targets, cfg)
    return LossReport(
        loc_loss=loc,
        reg_loss=reg,
        total=total_loss(loc, reg, cfg),
        grad_heatmap=cfg.w_loc * g_heat,
        grad_regression=cfg.w_reg * g_reg,
        meta={"eps": cfg.eps, "reg_normalizer": cfg.reg_normalizer, "n_reg": targets.num_samples},
    )
