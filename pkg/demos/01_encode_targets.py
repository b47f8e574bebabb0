"""Turn one annotated scene into heatmap, regression and weight targets.

Run: python demos/01_encode_targets.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from ttfnet import EncoderConfig, Scene, encode_scene, write_pgm
from ttfnet.geometry import BoundingBox

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

# A wide car-like box and a tall person-like box, 128x128 image
scene = Scene.from_boxes(128, 128, [BoundingBox(8, 40, 104, 88), BoundingBox(96, 16, 120, 112)], [0, 1])
cfg = EncoderConfig(num_classes=2)
t = encode_scene(scene, cfg)

print("grid", t.grid_shape, "heatmap", t.heatmap.shape)
for c in range(2):
    j, i = np.unravel_index(np.argmax(t.heatmap[c]), t.grid_shape)
    print(f"class {c}: peak {t.heatmap[c].max():.1f} at cell (row {j}, col {i})")

# The kernel follows the box shape: compare how far each heatmap spreads
for c in range(2):
    rows, cols = np.nonzero(t.heatmap[c] > 0)
    print(f"class {c}: nonzero span {np.ptp(cols) + 1} cols x {np.ptp(rows) + 1} rows")

# Regression samples: every cell in the Gaussian sub-area, weighted toward the centre
for k, a in enumerate(scene.annotations):
    w = t.weights[0][t.owner == k]
    print(f"box {k}: {w.size} samples, weight sum {w.sum():.4f} = log(area) {np.log(a.box.area):.4f}")

# Beta controls how many samples each box contributes
for beta in (0.01, 0.1, 0.3, 0.54, 1.0):
    print(f"beta={beta:<4} samples={encode_scene(scene, cfg.with_(beta=beta)).num_samples}")

write_pgm(t.heatmap.max(axis=0), out / "heatmap.pgm")
write_pgm(t.weights[0] / t.weights.max(), out / "weights.pgm")
print("wrote", out / "heatmap.pgm", "and", out / "weights.pgm")
