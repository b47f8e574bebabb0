"""From a COCO-style document to tensor files and back, through the CLI.

Run: python demos/05_coco_files.py [work_dir]
"""

import json
import sys
from pathlib import Path

from ttfnet.cli import main
from ttfnet.ingest import load_annotations, read_tensor

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_coco")
work.mkdir(exist_ok=True)

# Sparse category ids (as in COCO) get remapped to 0..C-1
doc = {
    "images": [{"id": 42, "width": 96, "height": 64}],
    "annotations": [
        {"id": 1, "image_id": 42, "category_id": 18, "bbox": [4, 6, 40, 30]},
        {"id": 2, "image_id": 42, "category_id": 90, "bbox": [56, 10, 32, 50]},
        {"id": 3, "image_id": 42, "category_id": 18, "bbox": [90, 60, 20, 20]},  # clipped at the border
    ],
    "categories": [{"id": 18, "name": "dog"}, {"id": 90, "name": "toothbrush"}],
}
ann_path = work / "annotations.json"
ann_path.write_text(json.dumps(doc))

ann = load_annotations(ann_path)
print("category map:", ann.category_map(), "clipped:", ann.clipped, "dropped:", ann.dropped)
for a in ann.scenes[0].annotations:
    print("  class", a.class_id, a.box.as_tuple())

main(["encode", "--annotations", str(ann_path), "--out", str(work / "targets"), "--classes", "2", "--render"])
sdir = work / "targets" / "scene_42"
for name in ("heatmap", "reg", "weights", "owner"):
    print(f"{name}.ttft shape {read_tensor(sdir / f'{name}.ttft').shape}")

print("decoded:")
main(["decode", "--heatmap", str(sdir / "heatmap.ttft"), "--regression", str(sdir / "reg.ttft")])
