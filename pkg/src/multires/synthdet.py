"""A seeded, resolution-sensitive stand-in for a trained detector.

The simulator never looks at pixels. It reads ground-truth geometry and
labels and emits detections whose hit rate, localisation noise and false
positive rate depend on the distance (in level ordinals) between the level a
model was "trained" on and the level it is evaluated on. The functional form
is a behavioural model chosen so that resolution-specialised models win on
their own band; it makes no claim about any real network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from multires.detections import DETECTION_CAP, BoundingBox, Detection, DetectionSet, rank_key
from multires.errors import InvalidInputError
from multires.rng import CounterStream, derive_seed
from multires.spectral import FULL, ResolutionLevel
from multires.voc import DatasetManifest, GroundTruthObject, ImageRecord
from multires.vocab import VOC_CLASSES

DEFAULT_TRAIN_LEVELS = (
    ResolutionLevel(5),
    ResolutionLevel(10),
    ResolutionLevel(18),
    ResolutionLevel(20),
    FULL,
)


def model_tag_for(level: ResolutionLevel) -> str:
    """``"18/20"`` for a model trained at R18, ``"full"`` for full spectrum."""
    return "full" if level.is_full else f"{level.c}/20"


@dataclass(frozen=True)
class SynthModelSpec:
    train_level: ResolutionLevel
    p_max: float = 0.9
    sigma_mismatch: float = 6.0
    lowres_gamma: float = 2.0
    jitter_frac: float = 0.05
    fp_rate: float = 0.05
    score_noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.train_level, ResolutionLevel):
            raise InvalidInputError("train_level must be a ResolutionLevel")
        if not 0.0 < self.p_max <= 1.0:
            raise InvalidInputError(f"p_max must lie in (0, 1], got {self.p_max}")
        if not self.sigma_mismatch > 0:
            raise InvalidInputError(f"sigma_mismatch must be > 0, got {self.sigma_mismatch}")
        for name in ("lowres_gamma", "jitter_frac", "fp_rate", "score_noise"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise InvalidInputError(f"{name} must be a finite value >= 0, got {value}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")

    @property
    def model_tag(self) -> str:
        return model_tag_for(self.train_level)


def level_mismatch(spec: SynthModelSpec, eval_level: ResolutionLevel) -> int:
    return abs(eval_level.ordinal - spec.train_level.ordinal)


def hit_probability(spec: SynthModelSpec, eval_level: ResolutionLevel) -> float:
    delta = level_mismatch(spec, eval_level)
    e = eval_level.ordinal
    p = (
        spec.p_max
        * math.exp(-(delta * delta) / (2.0 * spec.sigma_mismatch**2))
        * (e / (e + spec.lowres_gamma))
    )
    return min(1.0, max(0.0, p))


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def _jittered_box(gt: BoundingBox, rec: ImageRecord, stream: CounterStream, scale: float) -> BoundingBox:
    sx = scale * gt.width
    sy = scale * gt.height
    x1 = _clamp(gt.xmin + stream.normal(0.0, sx), 1, rec.width)
    y1 = _clamp(gt.ymin + stream.normal(0.0, sy), 1, rec.height)
    x2 = _clamp(gt.xmax + stream.normal(0.0, sx), 1, rec.width)
    y2 = _clamp(gt.ymax + stream.normal(0.0, sy), 1, rec.height)
    x1, x2 = sorted((round(x1, 2), round(x2, 2)))
    y1, y2 = sorted((round(y1, 2), round(y2, 2)))
    return BoundingBox(x1, y1, x2, y2)


def _random_box(rec: ImageRecord, stream: CounterStream) -> BoundingBox:
    xs = sorted(round(stream.uniform(1, rec.width), 2) for _ in range(2))
    ys = sorted(round(stream.uniform(1, rec.height), 2) for _ in range(2))
    return BoundingBox(xs[0], ys[0], xs[1], ys[1])


def simulate_image(
    spec: SynthModelSpec, rec: ImageRecord, eval_level: ResolutionLevel, model_tag: str | None = None
) -> list[Detection]:
    tag = spec.model_tag if model_tag is None else model_tag
    delta = level_mismatch(spec, eval_level)
    p = hit_probability(spec, eval_level)
    jitter = spec.jitter_frac * (1.0 + delta / spec.sigma_mismatch)
    out: list[Detection] = []

    for index, obj in enumerate(rec.objects):
        if obj.difficult:
            continue
        stream = CounterStream(spec.seed, rec.image_id, obj.class_name, index)
        if not stream.uniform() < p:
            continue
        box = _jittered_box(obj.bbox, rec, stream, jitter)
        score = _clamp(stream.normal(p, spec.score_noise), 0.0, 1.0)
        out.append(Detection(rec.image_id, obj.class_name, box, score, tag))

    fp_lambda = spec.fp_rate * (1.0 + delta / 10.0)
    for cls in VOC_CLASSES:
        stream = CounterStream(spec.seed, rec.image_id, cls, "fp")
        for _ in range(stream.poisson(fp_lambda)):
            box = _random_box(rec, stream)
            out.append(Detection(rec.image_id, cls, box, stream.uniform(0.0, 0.5), tag))

    if len(out) > DETECTION_CAP:
        out = sorted(out, key=rank_key)[:DETECTION_CAP]
    return out


def simulate(
    spec: SynthModelSpec,
    scene: DatasetManifest,
    eval_level: ResolutionLevel,
    model_tag: str | None = None,
) -> DetectionSet:
    """Detections of one synthetic model on ``scene`` viewed at ``eval_level``.

    Every random draw comes from a stream keyed by (seed, image id, class,
    object index), so the result is independent of iteration order.
    """
    dets: list[Detection] = []
    for rec in scene.records:
        dets.extend(simulate_image(spec, rec, eval_level, model_tag))
    return DetectionSet(dets)


def procedural_scene(
    seed: int,
    n_images: int = 200,
    min_side: int = 200,
    max_side: int = 500,
    max_objects: int = 6,
    difficult_rate: float = 0.05,
) -> DatasetManifest:
    """A random VOC-like manifest: image sizes, boxes and labels from ``seed``."""
    if n_images < 0:
        raise InvalidInputError("n_images must be >= 0")
    if not 1 <= min_side <= max_side:
        raise InvalidInputError("need 1 <= min_side <= max_side")
    width_digits = max(6, len(str(n_images)))
    records = []
    for i in range(n_images):
        image_id = f"{i:0{width_digits}d}"
        stream = CounterStream(seed, "scene", image_id)
        width = int(stream.uniform(min_side, max_side + 1))
        height = int(stream.uniform(min_side, max_side + 1))
        n_obj = min(max_objects, 1 + stream.poisson(1.5))
        objects = []
        for _ in range(n_obj):
            cls = VOC_CLASSES[int(stream.uniform(0, len(VOC_CLASSES)))]
            bw = max(1, int(width * stream.uniform(0.1, 0.6)))
            bh = max(1, int(height * stream.uniform(0.1, 0.6)))
            x1 = 1 + int(stream.uniform(0, width - bw + 1))
            y1 = 1 + int(stream.uniform(0, height - bh + 1))
            difficult = stream.uniform() < difficult_rate
            objects.append(
                GroundTruthObject(cls, BoundingBox(x1, y1, x1 + bw - 1, y1 + bh - 1), difficult)
            )
        records.append(ImageRecord(image_id, width, height, tuple(objects)))
    return DatasetManifest(records, split_name="synthetic")


def model_seed(base_seed: int, train_level: ResolutionLevel) -> int:
    """Per-model seed so models in a sweep draw independent noise."""
    return derive_seed(base_seed, "model", model_tag_for(train_level))
