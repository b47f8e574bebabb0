"""Peak decoding without NMS: ideal targets decode back to the annotations.

Run: python demos/03_decode.py
"""

import numpy as np

from ttfnet import EncoderConfig, detect, encode_scene, peak_mask
from ttfnet.decoder import ideal_roundtrip
from ttfnet.synthetic import standard_scenes

cfg = EncoderConfig(num_classes=3)
scene = standard_scenes(0)[0]
t = encode_scene(scene, cfg)

print("annotations:")
for a in scene.annotations:
    print("  class", a.class_id, a.box.as_tuple())

print("detections from ideal targets:")
for d in detect(t.heatmap, t.reg_targets / t.s, cfg):
    print(f"  class {d.class_id} score {d.score:.2f} box {d.box.as_tuple()} at cell {d.cell}")

# Perturbed heatmap: noise creates extra low peaks, the threshold removes them
rng = np.random.default_rng(0)
noisy = np.clip(t.heatmap + rng.uniform(0, 0.05, t.heatmap.shape), 0, 1)
print("peaks in noisy heatmap:", int(peak_mask(noisy).sum()))
for thresh in (0.01, 0.1, 0.5):
    print(f"  kept at score >= {thresh}: {len(detect(noisy, t.reg_targets / t.s, cfg, score_thresh=thresh))}")

print("round trip over the standard set:")
for sc in standard_scenes(0):
    rt = ideal_roundtrip(sc, cfg)
    print(f"  scene {sc.image_id}: {len(sc.annotations)} boxes, max error {rt.max_error:.1e}")
