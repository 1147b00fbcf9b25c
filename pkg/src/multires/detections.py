"""Detection data model, IoU, class-wise NMS and multi-model fusion.

Boxes use the VOC convention: 1-based inclusive pixel corners, so a box
``(x1, y1, x2, y2)`` covers ``(x2 - x1 + 1) * (y2 - y1 + 1)`` pixels.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from multires.errors import CapViolationError, InvalidInputError, ParseError, SchemaError
from multires.vocab import is_voc_class

DETECTION_CAP = 300
DEFAULT_FUSE_IOU = 0.7
FUSED_MODEL_TAG = "multi"


@dataclass(frozen=True, order=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        coords = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in coords):
            raise SchemaError(f"box coordinates must be finite numbers, got {coords}")
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise SchemaError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin + 1

    @property
    def height(self) -> float:
        return self.ymax - self.ymin + 1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin) + 1
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_name: str
    bbox: BoundingBox
    score: float
    model_tag: str = ""

    def __post_init__(self):
        if not is_voc_class(self.class_name):
            raise SchemaError(f"unknown class {self.class_name!r}")
        if not (isinstance(self.score, (int, float)) and 0.0 <= self.score <= 1.0):
            raise SchemaError(f"score must lie in [0, 1], got {self.score!r}")


def rank_key(det: Detection):
    """Total order: score desc, then model_tag, image_id, bbox ascending."""
    return (-det.score, det.model_tag, det.image_id, det.bbox.as_tuple())


def check_cap(detections: Iterable[Detection], cap: int = DETECTION_CAP) -> None:
    counts = Counter((d.image_id, d.model_tag) for d in detections)
    for (image_id, model_tag), n in sorted(counts.items()):
        if n > cap:
            raise CapViolationError(image_id, model_tag, n, cap)


@dataclass
class DetectionSet:
    """A list of detections with at most ``cap`` per (image_id, model_tag)."""

    detections: list[Detection] = field(default_factory=list)
    cap: int = DETECTION_CAP

    def __post_init__(self):
        self.detections = list(self.detections)
        check_cap(self.detections, self.cap)

    def __iter__(self) -> Iterator[Detection]:
        return iter(self.detections)

    def __len__(self) -> int:
        return len(self.detections)

    def model_tags(self) -> set[str]:
        return {d.model_tag for d in self.detections}

    def canonical(self) -> list[Detection]:
        return sorted(self.detections, key=lambda d: (d.image_id, d.class_name) + rank_key(d))


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy NMS over detections of a single image and class.

    A candidate is suppressed when its IoU with an already kept detection is
    strictly greater than ``iou_threshold``.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise InvalidInputError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    if not dets:
        return []
    groups = {(d.image_id, d.class_name) for d in dets}
    if len(groups) > 1:
        raise InvalidInputError(f"nms expects one (image, class) group, got {len(groups)}")
    return _greedy(sorted(dets, key=rank_key), iou_threshold)


def _greedy(ordered: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    kept: list[Detection] = []
    for det in ordered:
        if all(iou(det.bbox, k.bbox) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


def _pool(per_model: Sequence[DetectionSet]) -> list[Detection]:
    seen: set[str] = set()
    pooled: list[Detection] = []
    for ds in per_model:
        tags = ds.model_tags()
        dup = tags & seen
        if dup:
            raise InvalidInputError(f"duplicate model tags across inputs: {sorted(dup)}")
        seen |= tags
        pooled.extend(ds.detections)
    return pooled


def _group(dets: Iterable[Detection], cross_class: bool) -> dict[tuple, list[Detection]]:
    groups: dict[tuple, list[Detection]] = defaultdict(list)
    for d in dets:
        key = (d.image_id,) if cross_class else (d.image_id, d.class_name)
        groups[key].append(d)
    return groups


def fuse(
    per_model: Sequence[DetectionSet],
    iou_threshold: float = DEFAULT_FUSE_IOU,
    cross_class: bool = False,
) -> DetectionSet:
    """Pool detections from several models and suppress redundancy.

    NMS runs per (image, class) group unless ``cross_class`` is set, in which
    case all classes of an image compete. Output is ordered by group key and
    then by rank within the group.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise InvalidInputError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    groups = _group(_pool(per_model), cross_class)
    out: list[Detection] = []
    for key in sorted(groups):
        out.extend(_greedy(sorted(groups[key], key=rank_key), iou_threshold))
    return DetectionSet(out)


def fuse_oracle(
    per_model: Sequence[DetectionSet],
    gt,
    iou_threshold: float = DEFAULT_FUSE_IOU,
) -> DetectionSet:
    """Ground-truth-aware fusion. Evaluation-only: it reads test labels.

    For every ground-truth object the pooled detection of the same class with
    the highest IoU is protected: protected detections are visited first (in
    rank order) by the greedy pass, the rest follow in rank order. ``gt`` is a
    :class:`~multires.voc.DatasetManifest`.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise InvalidInputError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    groups = _group(_pool(per_model), cross_class=False)
    gt_boxes: dict[tuple[str, str], list[BoundingBox]] = defaultdict(list)
    for rec in gt.records:
        for obj in rec.objects:
            gt_boxes[(rec.image_id, obj.class_name)].append(obj.bbox)

    out: list[Detection] = []
    for key in sorted(groups):
        ranked = sorted(groups[key], key=rank_key)
        protected: set[int] = set()
        for g in gt_boxes.get(key, ()):
            best, best_iou = None, 0.0
            for i, d in enumerate(ranked):
                o = iou(d.bbox, g)
                if o > best_iou:
                    best, best_iou = i, o
            if best is not None:
                protected.add(best)
        order = [ranked[i] for i in sorted(protected)]
        order += [d for i, d in enumerate(ranked) if i not in protected]
        out.extend(_greedy(order, iou_threshold))
    return DetectionSet(out)


# JSON Lines serialisation: keys image_id, class, bbox, score, model.


def detection_to_json(det: Detection) -> dict:
    return {
        "image_id": det.image_id,
        "class": det.class_name,
        "bbox": list(det.bbox.as_tuple()),
        "score": det.score,
        "model": det.model_tag,
    }


def detection_from_json(obj: dict) -> Detection:
    if not isinstance(obj, dict):
        raise SchemaError("detection must be a JSON object")
    missing = [k for k in ("image_id", "class", "bbox", "score", "model") if k not in obj]
    if missing:
        raise SchemaError(f"missing keys: {', '.join(missing)}")
    bbox = obj["bbox"]
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise SchemaError("bbox must be an array of 4 numbers")
    if any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in bbox):
        raise SchemaError("bbox must be an array of 4 numbers")
    score = obj["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise SchemaError("score must be a number")
    for k in ("image_id", "class", "model"):
        if not isinstance(obj[k], str):
            raise SchemaError(f"{k} must be a string")
    return Detection(
        image_id=obj["image_id"],
        class_name=obj["class"],
        bbox=BoundingBox(*bbox),
        score=score,
        model_tag=obj["model"],
    )


def dumps_detections(ds: Iterable[Detection]) -> str:
    return "".join(json.dumps(detection_to_json(d)) + "\n" for d in ds)


def loads_detections(text: str, cap: int = DETECTION_CAP) -> DetectionSet:
    dets = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        try:
            dets.append(detection_from_json(obj))
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return DetectionSet(dets, cap=cap)


def write_detections(ds: Iterable[Detection], path) -> None:
    Path(path).write_text(dumps_detections(ds), encoding="utf-8", newline="\n")


def read_detections(path, cap: int = DETECTION_CAP) -> DetectionSet:
    return loads_detections(Path(path).read_text(encoding="utf-8"), cap=cap)

