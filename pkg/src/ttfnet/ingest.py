"""Scenes, COCO-subset annotation loading, TTFT tensors and PGM rendering."""

from __future__ import annotations

import json
import logging
import re
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import BoundingBox

logger = logging.getLogger(__name__)

TTFT_MAGIC = b"TTFT"
TTFT_VERSION = 1
TTFT_DTYPE_F32 = 1
_MAX_PAYLOAD = 2**32 - 1
_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


class FormatError(ValueError):
    """Raised for malformed tensor files."""


class AnnotationError(ValueError):
    """Raised for malformed or inconsistent annotation documents."""


@dataclass(frozen=True)
class Annotation:
    class_id: int
    box: BoundingBox


@dataclass(frozen=True)
class Scene:
    image_id: int
    width: int
    height: int
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.image_id}: non-positive size {self.width}x{self.height}")
        object.__setattr__(self, "annotations", tuple(self.annotations))
        for k, ann in enumerate(self.annotations):
            b = ann.box
            if b.x1 < 0 or b.y1 < 0 or b.x2 > self.width or b.y2 > self.height:
                raise ValueError(
                    f"image {self.image_id}: annotation {k} box {b.as_tuple()} leaves "
                    f"the {self.width}x{self.height} image"
                )
            if ann.class_id < 0:
                raise ValueError(f"image {self.image_id}: annotation {k} has negative class id")

    @property
    def boxes(self) -> list[BoundingBox]:
        return [a.box for a in self.annotations]

    @property
    def class_ids(self) -> list[int]:
        return [a.class_id for a in self.annotations]

    @classmethod
    def from_boxes(cls, width, height, boxes, class_ids=None, image_id=0) -> "Scene":
        """Convenience constructor from boxes or ``(x1, y1, x2, y2)`` tuples."""
        if class_ids is None:
            class_ids = [0] * len(boxes)
        if len(class_ids) != len(boxes):
            raise ValueError(f"{len(boxes)} boxes but {len(class_ids)} class ids")
        boxes = [b if isinstance(b, BoundingBox) else BoundingBox(*map(float, b)) for b in boxes]
        anns = tuple(Annotation(int(c), b) for c, b in zip(class_ids, boxes))
        return cls(image_id=image_id, width=width, height=height, annotations=anns)


@dataclass
class AnnotationSet:
    """Result of loading a COCO-subset document."""

    scenes: list[Scene]
    category_ids: list[int]  # contiguous index -> original COCO category id
    dropped: int = 0
    clipped: int = 0
    category_names: dict[int, str] = field(default_factory=dict)

    def category_map(self) -> dict[str, int]:
        return {str(cid): idx for idx, cid in enumerate(self.category_ids)}


def _require(record: dict, key: str, kind: str, index: int):
    if key not in record:
        ident = record.get("id", f"#{index}")
        raise AnnotationError(f"{kind} record {ident}: missing field '{key}'")
    return record[key]


def load_annotations(path) -> AnnotationSet:
    """Parse a COCO-style document into scenes.

    Boxes are converted from ``[x, y, w, h]`` to corners, clipped to the
    image and dropped when the clipped area is zero. Category ids are
    remapped to ``0..C-1`` in ascending id order. An empty file holds no
    scenes.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        return AnnotationSet([], [], dropped=0, clipped=0, category_names={})
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise AnnotationError("annotation document must be an object")
    images = doc.get("images")
    if images is None:
        raise AnnotationError("document has no 'images' list")
    anns = doc.get("annotations", [])

    order: list[int] = []
    sizes: dict[int, tuple[int, int]] = {}
    for k, img in enumerate(images):
        iid = int(_require(img, "id", "image", k))
        w = int(_require(img, "width", "image", k))
        h = int(_require(img, "height", "image", k))
        if iid in sizes:
            raise AnnotationError(f"image record {iid}: duplicate image id")
        sizes[iid] = (w, h)
        order.append(iid)

    if "categories" in doc:
        cat_ids = sorted({int(_require(c, "id", "category", k)) for k, c in enumerate(doc["categories"])})
        names = {int(c["id"]): str(c.get("name", "")) for c in doc["categories"]}
    else:
        cat_ids = sorted({int(_require(a, "category_id", "annotation", k)) for k, a in enumerate(anns)})
        names = {}
    cat_index = {cid: idx for idx, cid in enumerate(cat_ids)}

    per_image: dict[int, list[Annotation]] = {iid: [] for iid in order}
    dropped = clipped = 0
    for k, a in enumerate(anns):
        iid = int(_require(a, "image_id", "annotation", k))
        cid = int(_require(a, "category_id", "annotation", k))
        bbox = _require(a, "bbox", "annotation", k)
        ident = a.get("id", f"#{k}")
        if iid not in sizes:
            raise AnnotationError(f"annotation record {ident}: unknown image_id {iid}")
        if cid not in cat_index:
            raise AnnotationError(f"annotation record {ident}: unknown category_id {cid}")
        if len(bbox) != 4:
            raise AnnotationError(f"annotation record {ident}: bbox must have 4 numbers")
        x, y, bw, bh = (float(v) for v in bbox)
        w, h = (float(v) for v in sizes[iid])
        x1, y1 = min(max(x, 0.0), w), min(max(y, 0.0), h)
        x2, y2 = min(max(x + bw, 0.0), w), min(max(y + bh, 0.0), h)
        if (x1, y1, x2, y2) != (x, y, x + bw, y + bh):
            clipped += 1
        if x2 <= x1 or y2 <= y1:
            dropped += 1
            continue
        per_image[iid].append(Annotation(cat_index[cid], BoundingBox(x1, y1, x2, y2)))

    if dropped:
        logger.info("dropped %d zero-area annotation(s)", dropped)
    scenes = [Scene(iid, *sizes[iid], tuple(per_image[iid])) for iid in order]
    return AnnotationSet(scenes, cat_ids, dropped=dropped, clipped=clipped, category_names=names)


def load_scenes(path) -> list[Scene]:
    return load_annotations(path).scenes


def scenes_to_coco(scenes, num_classes: int | None = None) -> dict:
    """Inverse of :func:`load_annotations` for contiguous class ids."""
    images, anns = [], []
    seen = set()
    for sc in scenes:
        images.append({"id": sc.image_id, "width": sc.width, "height": sc.height})
        for a in sc.annotations:
            b = a.box
            seen.add(a.class_id)
            anns.append(
                {
                    "id": len(anns) + 1,
                    "image_id": sc.image_id,
                    "category_id": a.class_id,
                    "bbox": [b.x1, b.y1, b.width, b.height],
                }
            )
    n = num_classes if num_classes is not None else (max(seen) + 1 if seen else 0)
    cats = [{"id": c, "name": f"class{c}"} for c in range(n)]
    return {"images": images, "annotations": anns, "categories": cats}


# ---------------------------------------------------------------------------
# TTFT tensors
# ---------------------------------------------------------------------------


def encode_tensor(arr) -> bytes:
    a = np.asarray(arr)
    if a.ndim < 1:
        raise FormatError("rank-0 tensors are not supported (rank >= 1 required)")
    if a.ndim > 255:
        raise FormatError(f"rank {a.ndim} does not fit in one byte")
    dims = a.shape
    for d in dims:
        if d > 0xFFFFFFFF:
            raise FormatError(f"dimension {d} does not fit in 32 bits")
    count = int(np.prod(dims, dtype=object))
    if count * 4 > _MAX_PAYLOAD:
        raise FormatError(f"payload of {count} floats exceeds the 32-bit length limit")
    header = TTFT_MAGIC + struct.pack("<BBB", TTFT_VERSION, TTFT_DTYPE_F32, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *dims)
    payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    return header + payload


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 7:
        raise FormatError("truncated header")
    if data[:4] != TTFT_MAGIC:
        raise FormatError("bad magic")
    version, dtype, rank = struct.unpack_from("<BBB", data, 4)
    if version != TTFT_VERSION:
        raise FormatError(f"unsupported version {version}")
    if dtype != TTFT_DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if rank < 1:
        raise FormatError("rank-0 tensors are not supported (rank >= 1 required)")
    off = 7 + 4 * rank
    if len(data) < off:
        raise FormatError("truncated header")
    dims = struct.unpack_from(f"<{rank}I", data, 7)
    count = int(np.prod(dims, dtype=object))
    if count * 4 > _MAX_PAYLOAD:
        raise FormatError(f"payload of {count} floats exceeds the 32-bit length limit")
    if len(data) - off != count * 4:
        raise FormatError(f"truncated payload: expected {count * 4} bytes, got {len(data) - off}")
    return np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(dims).astype(np.float32)


def write_tensor(arr, path) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def pgm_bytes(channel) -> bytes:
    v = np.asarray(channel, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {v.shape}")
    if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
        warnings.warn("PGM values outside [0, 1] were clamped", stacklevel=3)
        v = np.clip(np.nan_to_num(v, nan=0.0), 0.0, 1.0)
    pix = np.floor(255.0 * v + 0.5).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(channel, path) -> None:
    """Write a grid of values in [0, 1] as a binary 8-bit greyscale image."""
    Path(path).write_bytes(pgm_bytes(channel))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise FormatError("not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}")
    pix = np.frombuffer(data, dtype=np.uint8, offset=m.end())
    if pix.size != w * h:
        raise FormatError("truncated PGM payload")
    return pix.reshape(h, w)
