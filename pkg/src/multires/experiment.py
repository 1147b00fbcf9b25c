"""The resolution sweep: every (train level, eval level) cell plus fusion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from multires.detections import DEFAULT_FUSE_IOU, FUSED_MODEL_TAG, fuse
from multires.errors import InvalidInputError
from multires.evaluation import (
    DEFAULT_MATCH_IOU,
    APProtocol,
    EvalReport,
    build_report,
    classes_without_positives,
    evaluate_cell,
)
from multires.spectral import ResolutionLevel, all_levels
from multires.synthdet import DEFAULT_TRAIN_LEVELS, SynthModelSpec, model_seed, simulate
from multires.voc import DatasetManifest


@dataclass
class SweepConfig:
    train_levels: list[ResolutionLevel] = field(default_factory=lambda: list(DEFAULT_TRAIN_LEVELS))
    eval_levels: list[ResolutionLevel] = field(default_factory=all_levels)
    fuse_iou: float = DEFAULT_FUSE_IOU
    match_iou: float = DEFAULT_MATCH_IOU
    protocol: APProtocol = APProtocol.VOC2007_11PT
    seed: int = 0
    cross_class: bool = False
    model_params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("train_levels", "eval_levels"):
            levels = getattr(self, name)
            if not levels:
                raise InvalidInputError(f"{name} must not be empty")
            if len(set(levels)) != len(levels):
                raise InvalidInputError(f"{name} contains duplicates")
        for name in ("fuse_iou", "match_iou"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InvalidInputError(f"{name} must lie in (0, 1), got {value}")
        self.protocol = APProtocol.parse(self.protocol)


def model_specs(config: SweepConfig) -> list[SynthModelSpec]:
    return [
        SynthModelSpec(level, seed=model_seed(config.seed, level), **config.model_params)
        for level in config.train_levels
    ]


def run_sweep(config: SweepConfig, scene: DatasetManifest, fused_tag: Optional[str] = FUSED_MODEL_TAG) -> EvalReport:
    """Evaluate each model at each eval level, and the fused ensemble per level."""
    specs = model_specs(config)
    cells = {}
    for level in config.eval_levels:
        per_model = []
        for spec in specs:
            ds = simulate(spec, scene, level)
            per_model.append(ds)
            cells[(spec.model_tag, level)] = evaluate_cell(ds, scene, config.protocol, config.match_iou)
        if fused_tag is not None:
            fused = fuse(per_model, config.fuse_iou, cross_class=config.cross_class)
            cells[(fused_tag, level)] = evaluate_cell(fused, scene, config.protocol, config.match_iou)
    return build_report(cells, classes_without_positives(scene))
