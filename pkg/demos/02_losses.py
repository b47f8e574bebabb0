"""Focal and GIoU losses on hand-made predictions, plus a gradient check.

Run: python demos/02_losses.py
"""

import numpy as np

from ttfnet import EncoderConfig, LossConfig, Scene, encode_scene, focal_loss, giou_reg_loss
from ttfnet.geometry import BoundingBox, giou
from ttfnet.gradcheck import run_gradcheck

# GIoU keeps a signal even when boxes do not touch
a = BoundingBox(0, 0, 10, 10)
for b in (BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15), BoundingBox(2, 2, 3, 3), BoundingBox(30, 30, 31, 31)):
    print(f"giou({a.as_tuple()}, {b.as_tuple()}) = {giou(a, b):+.5f}")

# Focal loss: a confident positive costs little; a hot negative near a centre is forgiven
print("positive, p=0.5:", focal_loss(np.array([0.5]), np.array([1.0]), 1)[0])
print("positive, p=0.9:", focal_loss(np.array([0.9]), np.array([1.0]), 1)[0])
print("negative at target 0.8, p=0.5:", focal_loss(np.array([0.5]), np.array([0.8]), 1)[0])
print("negative at target 0.0, p=0.5:", focal_loss(np.array([0.5]), np.array([0.0]), 1)[0])

# Regression loss over a scene: zero at the ideal targets, rising as predictions drift
scene = Scene.from_boxes(64, 64, [BoundingBox(4, 4, 40, 36)])
t = encode_scene(scene, EncoderConfig(num_classes=1))
ideal = t.reg_targets / t.s
for scale in (1.0, 1.1, 1.5, 3.0):
    print(f"predictions x{scale}: reg loss {giou_reg_loss(ideal * scale, t)[0]:.4f}")

# The two normalizers differ by how weights enter
for norm in ("n-reg", "weight-sum"):
    loss, _ = giou_reg_loss(ideal * 1.5, t, LossConfig(reg_normalizer=norm))
    print(f"{norm:>10}: {loss:.4f}")

rep = run_gradcheck(seed=0, trials=20)
print(f"gradient check: focal {rep.focal_max_error:.2e}, giou {rep.giou_max_error:.2e}, passed={rep.passed}")
