"""Seeded synthetic scenes used by the trainer, the CLI and the test suite."""

from __future__ import annotations

import numpy as np

from .encoder import EncoderConfig, center_collisions, encode_scene
from .geometry import BoundingBox
from .ingest import Annotation, Scene


def random_scene(
    rng: np.random.Generator,
    image_id: int = 0,
    size: int = 128,
    n_boxes: tuple[int, int] = (1, 4),
    box_size: tuple[int, int] = (8, 96),
    num_classes: int = 3,
) -> Scene:
    """One scene with integer-pixel boxes of side lengths in ``box_size``."""
    n = int(rng.integers(n_boxes[0], n_boxes[1] + 1))
    anns = []
    for _ in range(n):
        w = int(rng.integers(box_size[0], box_size[1] + 1))
        h = int(rng.integers(box_size[0], box_size[1] + 1))
        x1 = int(rng.integers(0, size - w + 1))
        y1 = int(rng.integers(0, size - h + 1))
        c = int(rng.integers(0, num_classes))
        anns.append(Annotation(c, BoundingBox(x1, y1, x1 + w, y1 + h)))
    return Scene(image_id=image_id, width=size, height=size, annotations=tuple(anns))


def standard_scenes(seed: int = 0, count: int = 8, num_classes: int = 3, cfg: EncoderConfig | None = None) -> list[Scene]:
    """The fixed scene set: ``count`` 128x128 scenes with 1-4 boxes of 8-96 px.

    Scenes whose annotations could not be recovered from ideal targets
    under ``cfg`` (default encoder settings) are redrawn, so every scene in
    the set round-trips through encode and decode.
    """
    cfg = cfg or EncoderConfig(num_classes=max(num_classes, 1))
    rng = np.random.default_rng(seed)
    scenes = []
    while len(scenes) < count:
        sc = random_scene(rng, image_id=len(scenes) + 1, num_classes=num_classes)
        if center_collisions(sc, encode_scene(sc, cfg)):
            continue
        scenes.append(sc)
    return scenes
