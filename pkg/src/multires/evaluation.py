"""VOC-protocol matching, per-class Average Precision, mAP and report CSV."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from multires.detections import Detection, iou, rank_key
from multires.errors import InvalidInputError, SchemaError
from multires.spectral import ResolutionLevel
from multires.voc import DatasetManifest, positives_per_class
from multires.vocab import VOC_CLASSES, is_voc_class

DEFAULT_MATCH_IOU = 0.5


class APProtocol(str, Enum):
    VOC2007_11PT = "voc07"
    AUC_ALL_POINTS = "auc"

    @classmethod
    def parse(cls, text) -> "APProtocol":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "voc07": cls.VOC2007_11PT,
            "voc2007_11pt": cls.VOC2007_11PT,
            "11pt": cls.VOC2007_11PT,
            "auc": cls.AUC_ALL_POINTS,
            "auc_all_points": cls.AUC_ALL_POINTS,
            "all_points": cls.AUC_ALL_POINTS,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidInputError(f"unknown AP protocol {text!r}") from None


TP, FP, IGNORED = "tp", "fp", "ignored"


@dataclass
class MatchOutcome:
    """Per-detection verdicts in rank order.

    ``matched[i]`` is ``(image_id, object_index)`` of the ground truth claimed
    or hit by detection ``i``, else ``None``.
    """

    class_name: str
    detections: list[Detection]
    flags: list[str]
    matched: list[Optional[tuple[str, int]]]
    n_positive: int = 0

    @property
    def tp(self) -> np.ndarray:
        return np.array([f == TP for f in self.flags], dtype=bool)

    @property
    def fp(self) -> np.ndarray:
        return np.array([f == FP for f in self.flags], dtype=bool)


def match_detections(
    dets: Iterable[Detection],
    gt: DatasetManifest,
    class_name: str,
    iou_match: float = DEFAULT_MATCH_IOU,
) -> MatchOutcome:
    """Greedy VOC matching of one class's detections against ground truth.

    In rank order each detection takes the unclaimed non-difficult object with
    the highest IoU. If that IoU is below ``iou_match`` but a difficult object
    overlaps at least that much, the detection is ignored; otherwise it is a
    false positive. Detections of other classes are rejected.
    """
    if not is_voc_class(class_name):
        raise InvalidInputError(f"unknown class {class_name!r}")
    dets = list(dets)
    for d in dets:
        if d.class_name != class_name:
            raise InvalidInputError(f"detection of class {d.class_name!r} passed for {class_name!r}")
    objects: dict[str, list[tuple[int, object]]] = defaultdict(list)
    n_positive = 0
    for rec in gt.records:
        for i, obj in enumerate(rec.objects):
            if obj.class_name == class_name:
                objects[rec.image_id].append((i, obj))
                n_positive += not obj.difficult

    claimed: set[tuple[str, int]] = set()
    ranked = sorted(dets, key=rank_key)
    flags, matched = [], []
    for det in ranked:
        best, best_iou = None, -1.0
        best_difficult, best_difficult_iou = None, -1.0
        for i, obj in objects.get(det.image_id, ()):
            o = iou(det.bbox, obj.bbox)
            if obj.difficult:
                if o > best_difficult_iou:
                    best_difficult, best_difficult_iou = i, o
            elif (det.image_id, i) not in claimed and o > best_iou:
                best, best_iou = i, o
        if best is not None and best_iou >= iou_match:
            claimed.add((det.image_id, best))
            flags.append(TP)
            matched.append((det.image_id, best))
        elif best_difficult is not None and best_difficult_iou >= iou_match:
            flags.append(IGNORED)
            matched.append((det.image_id, best_difficult))
        else:
            flags.append(FP)
            matched.append(None)
    return MatchOutcome(class_name, ranked, flags, matched, n_positive)


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray


def pr_curve(outcome: MatchOutcome, n_positive: int) -> PRCurve:
    """Precision and recall after each counted (non-ignored) detection."""
    counted = [f for f in outcome.flags if f != IGNORED]
    tp = np.cumsum([f == TP for f in counted], dtype=np.int64)
    fp = np.cumsum([f == FP for f in counted], dtype=np.int64)
    if n_positive > 0:
        recall = tp / n_positive
    else:
        recall = np.zeros(len(counted))
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    return PRCurve(recall.astype(np.float64), precision.astype(np.float64))


def average_precision(
    outcome: MatchOutcome,
    n_positive: int,
    protocol: APProtocol = APProtocol.VOC2007_11PT,
) -> float:
    """Area under the interpolated PR curve; 0 when there are no positives."""
    protocol = APProtocol.parse(protocol)
    if n_positive <= 0:
        return 0.0
    curve = pr_curve(outcome, n_positive)
    rec, prec = curve.recall, curve.precision
    if protocol is APProtocol.VOC2007_11PT:
        points = []
        for i in range(11):
            mask = rec >= i / 10
            points.append(float(prec[mask].max()) if mask.any() else 0.0)
        return math.fsum(points) / 11
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return math.fsum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1])


def evaluate_cell(
    dets: Iterable[Detection],
    gt: DatasetManifest,
    protocol: APProtocol = APProtocol.VOC2007_11PT,
    iou_match: float = DEFAULT_MATCH_IOU,
) -> tuple[list[float], float]:
    """AP for each of the 20 classes (vocabulary order) and their mean."""
    by_class: dict[str, list[Detection]] = defaultdict(list)
    known = gt.by_id()
    for d in dets:
        if d.image_id in known:
            by_class[d.class_name].append(d)
    positives = positives_per_class(gt)
    aps = []
    for cls in VOC_CLASSES:
        outcome = match_detections(by_class.get(cls, ()), gt, cls, iou_match)
        aps.append(average_precision(outcome, positives.get(cls, 0), protocol))
    return aps, math.fsum(aps) / len(aps)


def classes_without_positives(gt: DatasetManifest) -> list[str]:
    positives = positives_per_class(gt)
    return [c for c in VOC_CLASSES if positives.get(c, 0) == 0]


# Report

REPORT_HEADER = ["model", "level", "ordinal", "mAP"] + [f"ap_{c}" for c in VOC_CLASSES]


@dataclass(frozen=True)
class ReportRow:
    model_tag: str
    level: ResolutionLevel
    aps: tuple[float, ...]
    mAP: float


@dataclass
class EvalReport:
    rows: list[ReportRow]
    empty_classes: list[str] = field(default_factory=list)

    def row(self, model_tag: str, level: ResolutionLevel) -> ReportRow:
        for r in self.rows:
            if r.model_tag == model_tag and r.level == level:
                return r
        raise KeyError((model_tag, level))

    def models(self) -> list[str]:
        return sorted({r.model_tag for r in self.rows})

    def curve(self, model_tag: str) -> tuple[list[int], list[float]]:
        rows = [r for r in self.rows if r.model_tag == model_tag]
        return [r.level.ordinal for r in rows], [r.mAP for r in rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in self.rows:
            writer.writerow(
                [r.model_tag, r.level.label, r.level.ordinal, f"{r.mAP:.4f}"]
                + [f"{ap:.4f}" for ap in r.aps]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="\n")

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != REPORT_HEADER:
            raise SchemaError("report CSV header does not match the expected columns")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(REPORT_HEADER):
                raise SchemaError(f"line {lineno}: expected {len(REPORT_HEADER)} fields, got {len(rec)}")
            level = ResolutionLevel.parse(rec[1])
            if level.ordinal != int(rec[2]):
                raise SchemaError(f"line {lineno}: ordinal {rec[2]} does not match level {rec[1]}")
            rows.append(ReportRow(rec[0], level, tuple(float(x) for x in rec[4:]), float(rec[3])))
        return cls(rows)


def build_report(
    cells: Mapping[tuple[str, ResolutionLevel], tuple[Sequence[float], float]],
    empty_classes: Sequence[str] = (),
) -> EvalReport:
    if not cells:
        raise InvalidInputError("a report needs at least one cell")
    rows = []
    for (model_tag, level), (aps, mAP) in cells.items():
        if len(aps) != len(VOC_CLASSES):
            raise InvalidInputError(f"cell {model_tag}/{level} has {len(aps)} APs, expected {len(VOC_CLASSES)}")
        rows.append(ReportRow(model_tag, level, tuple(float(a) for a in aps), float(mAP)))
    rows.sort(key=lambda r: (r.model_tag, r.level.ordinal))
    return EvalReport(rows, list(empty_classes))
