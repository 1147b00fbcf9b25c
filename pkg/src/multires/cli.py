"""Command-line entry point.

Subcommands: blur, simulate, fuse, eval, sweep, plus the helpers manifest
(VOC XML directory to JSONL) and scene (procedural manifest).

Exit codes: 0 success, 1 usage error, 2 data or processing error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from multires import codecs
from multires.detections import (
    DEFAULT_FUSE_IOU,
    FUSED_MODEL_TAG,
    fuse,
    fuse_oracle,
    read_detections,
    write_detections,
)
from multires.errors import InvalidInputError, MultiresError
from multires.evaluation import (
    DEFAULT_MATCH_IOU,
    APProtocol,
    build_report,
    classes_without_positives,
    evaluate_cell,
)
from multires.experiment import SweepConfig, run_sweep
from multires.spectral import FULL, ResolutionLevel, apply_lowpass, parse_levels
from multires.synthdet import SynthModelSpec, model_seed, procedural_scene, simulate
from multires.voc import load_manifest, read_id_list, read_manifest, write_manifest

log = logging.getLogger("multires")

SEED_ENV = "MULTIRES_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _level(text: str) -> ResolutionLevel:
    try:
        return ResolutionLevel.parse(text)
    except InvalidInputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _levels(text: str) -> list[ResolutionLevel]:
    try:
        return parse_levels(text)
    except InvalidInputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _protocol(text: str) -> APProtocol:
    try:
        return APProtocol.parse(text)
    except InvalidInputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(seed=True, out=True, manifest=True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key=value file; explicit flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (default: ${SEED_ENV} or 0)")
    if out:
        p.add_argument("--out", default=None)
    if manifest:
        p.add_argument("--manifest", default=None, help="manifest JSONL")
    return p


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic model parameters")
    g.add_argument("--p-max", type=float, default=0.9)
    g.add_argument("--sigma-mismatch", type=float, default=6.0)
    g.add_argument("--lowres-gamma", type=float, default=2.0)
    g.add_argument("--jitter-frac", type=float, default=0.05)
    g.add_argument("--fp-rate", type=float, default=0.05)
    g.add_argument("--score-noise", type=float, default=0.1)


def _scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene-images", type=int, default=200,
                   help="size of the procedural scene used when --manifest is absent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multires", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("blur", parents=[_common(seed=False, manifest=False)],
                       help="write a resolution pyramid for every image in a directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--levels", type=_levels, default=_levels("5,10,18,20,full"))
    p.add_argument("--gain-plot", default=None, help="also plot filter gain profiles (SVG/PNG)")
    p.set_defaults(func=cmd_blur)

    p = sub.add_parser("simulate", parents=[_common()], help="run one synthetic model")
    p.add_argument("--train-level", type=_level, required=True)
    p.add_argument("--eval-level", type=_level, required=True)
    p.add_argument("--model-tag", default=None)
    _model_flags(p)
    _scene_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", parents=[_common(seed=False, manifest=False)],
                       help="pool detection files and apply NMS")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--iou", type=_unit_interval, default=DEFAULT_FUSE_IOU)
    p.add_argument("--cross-class", action="store_true",
                   help="suppress across classes instead of within each class")
    p.add_argument("--oracle-manifest", default=None,
                   help="evaluation-only: protect the best box per ground-truth object")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", parents=[_common(seed=False)], help="evaluate detections, write report CSV")
    p.add_argument("--detections", required=True)
    p.add_argument("--protocol", type=_protocol, default=APProtocol.VOC2007_11PT)
    p.add_argument("--match-iou", type=_unit_interval, default=DEFAULT_MATCH_IOU)
    p.add_argument("--model-tag", default=None)
    p.add_argument("--level", type=_level, default=FULL)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[_common()], help="full train x eval level sweep with fusion")
    p.add_argument("--train-levels", type=_levels, default=_levels("5,10,18,20,full"))
    p.add_argument("--eval-levels", type=_levels, default=_levels("all"))
    p.add_argument("--fuse-iou", type=_unit_interval, default=DEFAULT_FUSE_IOU)
    p.add_argument("--match-iou", type=_unit_interval, default=DEFAULT_MATCH_IOU)
    p.add_argument("--protocol", type=_protocol, default=APProtocol.VOC2007_11PT)
    p.add_argument("--cross-class", action="store_true")
    p.add_argument("--plot-format", choices=("svg", "png"), default="svg")
    _model_flags(p)
    _scene_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("manifest", parents=[_common(seed=False, manifest=False)],
                       help="parse a VOC annotation directory into manifest JSONL")
    p.add_argument("--annotations", required=True)
    p.add_argument("--ids", default=None, help="id list file (default: every *.xml)")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("scene", parents=[_common(manifest=False)], help="write a procedural manifest")
    p.add_argument("--images", type=int, default=200)
    p.set_defaults(func=cmd_scene)
    return parser


def _subparser(parser: argparse.ArgumentParser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action if name is None else action.choices[name]
    raise KeyError(name)


def read_config(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in config.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for this command")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            defaults[key] = value.split()
        else:
            defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        subparser = _subparser(parser, None)
        command = next((a for a in argv if a in subparser.choices), None)
        if command is not None:
            try:
                config = read_config(known.config)
            except OSError as exc:
                raise UsageError(f"cannot read config: {exc}") from None
            _apply_config(subparser.choices[command], config)
    args = parser.parse_args(argv)
    if hasattr(args, "seed") and args.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return args


def _load_scene(args):
    if args.manifest:
        return read_manifest(args.manifest)
    return procedural_scene(args.seed, args.scene_images)


def _model_params(args) -> dict:
    return {
        "p_max": args.p_max,
        "sigma_mismatch": args.sigma_mismatch,
        "lowres_gamma": args.lowres_gamma,
        "jitter_frac": args.jitter_frac,
        "fp_rate": args.fp_rate,
        "score_noise": args.score_noise,
    }


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def cmd_blur(args) -> int:
    out_dir = _require_out(args)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        log.error("input directory not found: %s", in_dir)
        return EXIT_DATA
    files = sorted(p for p in in_dir.iterdir() if p.is_file())
    if not files:
        log.warning("no images in %s", in_dir)
        return EXIT_OK
    failures = 0
    dims = None
    for path in files:
        try:
            img = codecs.read_image(path)
            dims = dims or (img.width, img.height)
            for level in args.levels:
                target = out_dir / level.label / path.name
                target.parent.mkdir(parents=True, exist_ok=True)
                codecs.write_image(apply_lowpass(img, level), target)
        except (MultiresError, OSError) as exc:
            failures += 1
            log.error("%s: %s", path.name, exc)
    if args.gain_plot and dims:
        from multires.plotting import plot_gain_profile

        plot_gain_profile(dims[0], dims[1], args.levels, args.gain_plot)
    if failures:
        log.error("%d of %d images failed", failures, len(files))
        return EXIT_DATA
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _require_out(args)
    scene = _load_scene(args)
    spec = SynthModelSpec(args.train_level, seed=model_seed(args.seed, args.train_level),
                          **_model_params(args))
    ds = simulate(spec, scene, args.eval_level, args.model_tag)
    write_detections(ds, out)
    log.info("wrote %d detections to %s", len(ds), out)
    return EXIT_OK


def cmd_fuse(args) -> int:
    out = _require_out(args)
    sets = [read_detections(p) for p in args.inputs]
    if args.oracle_manifest:
        if args.cross_class:
            raise UsageError("--oracle-manifest cannot be combined with --cross-class")
        fused = fuse_oracle(sets, read_manifest(args.oracle_manifest), args.iou)
    else:
        fused = fuse(sets, args.iou, cross_class=args.cross_class)
    write_detections(fused, out)
    log.info("fused %d inputs into %d detections", len(sets), len(fused))
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _require_out(args)
    if not args.manifest:
        raise UsageError("--manifest is required")
    gt = read_manifest(args.manifest)
    ds = read_detections(args.detections)
    tag = args.model_tag
    if tag is None:
        tags = ds.model_tags()
        tag = tags.pop() if len(tags) == 1 else FUSED_MODEL_TAG
    aps, mAP = evaluate_cell(ds, gt, args.protocol, args.match_iou)
    report = build_report({(tag, args.level): (aps, mAP)}, classes_without_positives(gt))
    _warn_empty(report.empty_classes)
    report.write_csv(out)
    print(f"{tag} {args.level.label} mAP={mAP:.4f}")
    return EXIT_OK


def _warn_empty(classes) -> None:
    if classes:
        log.warning("classes without ground truth (AP reported as 0): %s", ", ".join(classes))


def cmd_sweep(args) -> int:
    out_dir = _require_out(args)
    config = SweepConfig(
        train_levels=args.train_levels,
        eval_levels=args.eval_levels,
        fuse_iou=args.fuse_iou,
        match_iou=args.match_iou,
        protocol=args.protocol,
        seed=args.seed,
        cross_class=args.cross_class,
        model_params=_model_params(args),
    )
    scene = _load_scene(args)
    start = time.perf_counter()
    report = run_sweep(config, scene)
    _warn_empty(report.empty_classes)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "report.csv")

    from multires.plotting import plot_map_vs_level

    plot_map_vs_level(report, out_dir / f"report.{args.plot_format}",
                      title=f"mAP vs test resolution ({len(scene)} images, seed {args.seed})")
    log.info("sweep of %d rows in %.1f s -> %s", len(report.rows), time.perf_counter() - start, out_dir)
    return EXIT_OK


def cmd_manifest(args) -> int:
    out = _require_out(args)
    ann = Path(args.annotations)
    if args.ids:
        ids = read_id_list(args.ids)
    else:
        ids = sorted(p.stem for p in ann.glob("*.xml"))
    manifest = load_manifest(ann, ids, args.split)
    write_manifest(manifest, out)
    log.info("wrote %d records to %s", len(manifest), out)
    return EXIT_OK


def cmd_scene(args) -> int:
    out = _require_out(args)
    write_manifest(procedural_scene(args.seed, args.images), out)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"multires: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.verbose:
        log.setLevel(logging.INFO)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"multires: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MultiresError, OSError) as exc:
        print(f"multires: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
