"""More regression samples per box tolerate larger learning rates.

Each scene's prediction maps are trained directly with full-batch descent.
The sweep reports the largest step size that still makes progress for each
beta. Takes about half a minute.

Run: python demos/04_learning_rate.py
"""

from ttfnet import EncoderConfig, encode_scene
from ttfnet.synthetic import standard_scenes
from ttfnet.trainer import DEFAULT_LR, TOY_LR_SCALE, lr_sweep, run_training

scenes = standard_scenes(0)
cfg = EncoderConfig(num_classes=3)

for beta in (0.01, 0.1, 0.3, 0.54):
    n = sum(encode_scene(s, cfg.with_(beta=beta)).num_samples for s in scenes)
    print(f"beta={beta:<5} regression samples across the set: {n}")

etas = [round(lr * TOY_LR_SCALE, 9) for lr in (6e-3, 1.2e-2, 1.8e-2)]
res = lr_sweep(scenes, [0.01, 0.1, 0.3, 0.54], etas, steps=500, cfg=cfg)
print(res.to_csv())
print("max stable lr per beta:", res.max_stable_lr(), "monotone:", res.is_monotone())

run = run_training(scenes, cfg, DEFAULT_LR, 500)
print(f"beta=0.54 at eta={DEFAULT_LR}: loss {run.initial_loss:.2f} -> {run.final_loss:.2f}")
for step, loss in run.loss_curve[::100]:
    print(f"  step {step:>3}: {loss:.3f}")

center = run_training(scenes, cfg.with_(subarea_mode="center-only"), DEFAULT_LR, 500)
print(f"center-only at the same eta: ratio {center.loss_ratio:.3f} vs {run.loss_ratio:.3f}")
