"""Full-batch gradient descent on directly parameterized prediction maps.

There is no backbone: each scene's heatmap logits and pre-softplus
regression maps are themselves the parameters. This isolates how the
encoding (sample count, weights) shapes the loss landscape and the usable
learning rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncodedTargets, EncoderConfig, encode_scene
from .loss import LossConfig, compute_losses, sigmoid, softplus

PRIOR_PROB = 0.01
INIT_REG = 1.0  # initial softplus output, i.e. 16 px per side at s=16
INIT_NOISE = 0.01
DIVERGENCE_FACTOR = 10.0

# Stable step size for the standard scene set at the default encoder settings.
DEFAULT_LR = 0.2
# Multiplier taking a detector learning-rate grid (e.g. 6e-3, 1.2e-2, 1.8e-2)
# to direct-parameterization runs, whose per-cell gradients are far smaller
# than a shared network's.
TOY_LR_SCALE = 200.0


@dataclass
class ToyModel:
    logits_heatmap: np.ndarray  # (C, H, W)
    raw_regression: np.ndarray  # (4, H, W)

    @classmethod
    def init(cls, num_classes: int, grid: tuple[int, int], seed: int = 0) -> "ToyModel":
        rng = np.random.default_rng(seed)
        gh, gw = grid
        bias = math.log(PRIOR_PROB / (1.0 - PRIOR_PROB))
        raw0 = math.log(math.expm1(INIT_REG))
        logits = bias + INIT_NOISE * rng.standard_normal((num_classes, gh, gw))
        raw = raw0 + INIT_NOISE * rng.standard_normal((4, gh, gw))
        return cls(logits, raw)

    def heatmap(self) -> np.ndarray:
        return sigmoid(self.logits_heatmap)

    def regression(self) -> np.ndarray:
        return softplus(self.raw_regression)

    def copy(self) -> "ToyModel":
        return ToyModel(self.logits_heatmap.copy(), self.raw_regression.copy())


@dataclass
class TrainRun:
    eta: float
    steps: int
    beta: float
    loss_curve: list[tuple[int, float]] = field(default_factory=list)
    diverged: bool = False
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    samples_per_scene: float = 0.0
    models: list[ToyModel] = field(default_factory=list, repr=False)

    @property
    def loss_ratio(self) -> float:
        return self.final_loss / self.initial_loss


def evaluate(model: ToyModel, targets: EncodedTargets, loss_cfg: LossConfig = LossConfig()):
    """Total loss of one scene and its gradients w.r.t. the model parameters.

    Returns ``(report, grad_logits, grad_raw)``; the report's own gradients
    are w.r.t. the predictions.
    """
    p = model.heatmap()
    report = compute_losses(p, model.regression(), targets, loss_cfg)
    grad_logits = report.grad_heatmap * p * (1.0 - p)
    grad_raw = report.grad_regression * sigmoid(model.raw_regression)
    return report, grad_logits, grad_raw


def sgd_step(model: ToyModel, targets, eta: float, loss_cfg: LossConfig = LossConfig()):
    """One descent step ``w <- w - eta * grad`` on a scene's total loss.

    Returns ``(new_model, report)``; the report is evaluated before the step.
    ``report.meta["finite"]`` is False when the gradient is not finite.
    """
    report, g_z, g_raw = evaluate(model, targets, loss_cfg)
    finite = bool(np.all(np.isfinite(g_z)) and np.all(np.isfinite(g_raw)) and math.isfinite(report.total))
    report.meta["finite"] = finite
    if eta == 0:
        return model.copy(), report
    new = ToyModel(model.logits_heatmap - eta * g_z, model.raw_regression - eta * g_raw)
    return new, report


def _check_grid(scenes, cfg: EncoderConfig) -> tuple[int, int]:
    grids = {cfg.grid_shape(sc) for sc in scenes}
    if len(grids) != 1:
        raise ValueError(f"all scenes must share one grid size, got {sorted(grids)}")
    return grids.pop()


def run_training(
    scenes,
    cfg: EncoderConfig,
    eta: float,
    steps: int,
    loss_cfg: LossConfig = LossConfig(),
    seed: int = 0,
) -> TrainRun:
    """Full-batch descent on the summed per-scene loss from seeded models.

    Each scene owns one :class:`ToyModel`. The run is flagged as diverged
    (and stopped) when the loss turns non-finite or exceeds ten times its
    initial value, and also when the final loss is not below the initial one.
    """
    scenes = list(scenes)
    if not scenes:
        raise ValueError("run_training needs at least one scene")
    grid = _check_grid(scenes, cfg)
    targets = [encode_scene(sc, cfg) for sc in scenes]
    models = [ToyModel.init(cfg.num_classes, grid, seed + k) for k in range(len(scenes))]
    run = TrainRun(eta=eta, steps=steps, beta=cfg.beta)
    run.samples_per_scene = float(np.mean([t.num_samples for t in targets]))

    run.initial_loss = sum(evaluate(m, t, loss_cfg)[0].total for m, t in zip(models, targets))
    for step in range(steps):
        total, finite = 0.0, True
        for k, (m, t) in enumerate(zip(models, targets)):
            models[k], rep = sgd_step(m, t, eta, loss_cfg)
            total += rep.total
            finite &= rep.meta["finite"]
        run.loss_curve.append((step, total))
        if not finite or not math.isfinite(total) or total > DIVERGENCE_FACTOR * run.initial_loss:
            run.diverged = True
            break
    run.final_loss = sum(evaluate(m, t, loss_cfg)[0].total for m, t in zip(models, targets))
    if not math.isfinite(run.final_loss) or run.final_loss > DIVERGENCE_FACTOR * run.initial_loss:
        run.diverged = True
    if steps > 0 and eta > 0 and not run.final_loss < run.initial_loss:
        run.diverged = True
    run.models = models
    return run


@dataclass(frozen=True)
class SweepRow:
    beta: float
    eta: float
    initial_loss: float
    final_loss: float
    diverged: bool
    samples_per_scene: float


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def max_stable_lr(self) -> dict[float, float | None]:
        """Largest non-diverging learning rate per beta (None if all diverged)."""
        out: dict[float, float | None] = {}
        for row in self.rows:
            out.setdefault(row.beta, None)
            if not row.diverged and (out[row.beta] is None or row.eta > out[row.beta]):
                out[row.beta] = row.eta
        return out

    def is_monotone(self) -> bool:
        """True when the max stable lr never decreases as beta grows."""
        frontier = self.max_stable_lr()
        vals = [frontier[b] for b in sorted(frontier)]
        vals = [-math.inf if v is None else v for v in vals]
        return all(a <= b for a, b in zip(vals, vals[1:]))

    def to_csv(self) -> str:
        lines = ["beta,eta,final_loss,diverged"]
        for r in self.rows:
            lines.append(f"{r.beta!r},{r.eta!r},{r.final_loss:.10g},{str(r.diverged).lower()}")
        return "\n".join(lines) + "\n"


def lr_sweep(
    scenes,
    betas,
    etas,
    steps: int,
    cfg: EncoderConfig = EncoderConfig(),
    loss_cfg: LossConfig = LossConfig(),
    seed: int = 0,
) -> SweepResult:
    """Train every ``(beta, eta)`` pair and collect the outcomes in grid order."""
    betas, etas = list(betas), list(etas)
    if not betas or not etas:
        raise ValueError("lr_sweep needs non-empty beta and eta grids")
    rows = []
    for beta in betas:
        bcfg = cfg.with_(beta=beta)
        for eta in etas:
            run = run_training(scenes, bcfg, eta, steps, loss_cfg, seed)
            rows.append(SweepRow(beta, eta, run.initial_loss, run.final_loss, run.diverged, run.samples_per_scene))
    return SweepResult(rows)
