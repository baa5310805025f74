"""Command line entry points.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 observer
error. Options for `distill` can also come from a flat key=value config
file; explicit command line flags win over the file, the file wins over
defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from pathlib import Path

from . import annotations as ann
from .engine import EngineConfig, SynthesisError, distill
from .errors import ConfigError, DataError, DistillError, ObserverError
from .observer import parse_observer_spec, run_selftest
from .placement import PlacementConfig
from .planner import build_plan, compute_ipd, write_plan
from .simulation import SimConfig, compare_forms, overlap_grid

log = logging.getLogger(__name__)

CANVAS_PRESETS = {"coco": (484, 578), "voc": (375, 500)}

# name -> (coercion, default); config-file keys and flag names coincide
# up to dashes.
DISTILL_OPTIONS: dict[str, tuple] = {
    "annotations": (str, None),
    "images": (str, None),
    "out": (str, None),
    "ratio": (float, None),
    "ipd": (int, None),
    "tau": (float, 0.6),
    "eta": (float, 0.2),
    "max_attempts": (int, 40),
    "extension_px": (float, 20.0),
    "canvas": (str, None),
    "preset": (str, None),
    "observer": (str, "heuristic"),
    "seed": (int, 0),
    "workers": (int, 1),
    "t_max": (int, 5),
    "patience": (int, 25),
    "match_iou_floor": (float, 0.5),
    "background_scope": (str, "segment"),
    "keep_partial": (bool, False),
}


def _coerce(key: str, raw: str):
    kind = DISTILL_OPTIONS[key][0]
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"config key {key}: {exc}") from exc


def read_config_file(path: str | Path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in DISTILL_OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def parse_canvas_spec(spec: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+)x(\d+)", spec.strip())
    if not match:
        raise ConfigError(f"canvas must look like 640x480, got {spec!r}")
    w, h = int(match.group(1)), int(match.group(2))
    if w < 4 or h < 4:
        raise ConfigError(f"canvas {w}x{h} is too small")
    return w, h


def resolve_canvas(options: dict) -> tuple[int, int]:
    """--canvas wins over --preset; default is the coco preset."""
    if options.get("canvas"):
        return parse_canvas_spec(options["canvas"])
    preset = options.get("preset")
    if preset is not None:
        if preset not in CANVAS_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; "
                              f"choose from {sorted(CANVAS_PRESETS)}")
        return CANVAS_PRESETS[preset]
    return CANVAS_PRESETS["coco"]


def merge_distill_options(args: argparse.Namespace) -> dict:
    options = {key: default for key, (_, default) in DISTILL_OPTIONS.items()}
    config_path = getattr(args, "config", None)
    if config_path:
        options.update(read_config_file(config_path))
    for key in DISTILL_OPTIONS:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    return options


def _validate_distill(options: dict):
    for key in ("annotations", "images", "out"):
        if not options.get(key):
            raise ConfigError(f"--{key.replace('_', '-')} is required")
    if (options["ratio"] is None) == (options["ipd"] is None):
        raise ConfigError("exactly one of --ratio or --ipd is required")
    if options["ratio"] is not None and not (0.0 < options["ratio"] <= 1.0):
        raise ConfigError(f"ratio must be in (0, 1], got {options['ratio']}")
    if not (0.0 <= options["tau"] <= 1.0):
        raise ConfigError(f"tau must be in [0, 1], got {options['tau']}")
    if not (0.0 <= options["eta"] <= 1.0):
        raise ConfigError(f"eta must be in [0, 1], got {options['eta']}")
    if not (0.0 < options["match_iou_floor"] <= 1.0):
        raise ConfigError("match-iou-floor must be in (0, 1], "
                          f"got {options['match_iou_floor']}")
    for key, minimum in (("max_attempts", 1), ("t_max", 1), ("patience", 1),
                         ("workers", 1), ("seed", 0), ("extension_px", 0)):
        if options[key] < minimum:
            raise ConfigError(f"{key.replace('_', '-')} must be >= {minimum}, "
                              f"got {options[key]}")
    if options["background_scope"] not in ("segment", "dataset"):
        raise ConfigError("background-scope must be 'segment' or 'dataset'")


def cmd_distill(args: argparse.Namespace) -> int:
    options = merge_distill_options(args)
    _validate_distill(options)
    canvas_w, canvas_h = resolve_canvas(options)

    dataset = ann.parse_dataset(options["annotations"], options["images"])
    if not dataset.images:
        raise DataError("dataset contains no images")
    ipd = options["ipd"] if options["ipd"] is not None else compute_ipd(
        len(dataset.images), options["ratio"])
    plan = build_plan([im.id for im in dataset.images], ipd, options["seed"])
    area_min, area_max = dataset.tight_area_range()

    config = EngineConfig(
        canvas_w=canvas_w, canvas_h=canvas_h, eta=options["eta"],
        t_max=options["t_max"], fullness_patience=options["patience"],
        match_iou_floor=options["match_iou_floor"], seed=options["seed"],
        workers=options["workers"], background_scope=options["background_scope"],
        placement=PlacementConfig(
            tau=options["tau"], max_attempts=options["max_attempts"],
            extension_px=options["extension_px"],
            area_min=area_min, area_max=area_max))
    backend = parse_observer_spec(options["observer"])

    exit_code = 0
    try:
        result = distill(dataset, plan, backend, config,
                         keep_partial=options["keep_partial"])
    except SynthesisError as exc:
        result = exc.result
        first = result.failures[min(result.failures)]
        exit_code = 4 if isinstance(first, ObserverError) else 3
        print(f"error: {exc}", file=sys.stderr)
    finally:
        close = getattr(backend, "close", None)
        if close is not None:
            close()

    out_dir = Path(options["out"])
    emit = ann.emit_dataset(result.distilled, out_dir)
    write_plan(plan, out_dir / "segments.txt")
    manifest = {
        "command": "distill",
        "complete": not result.failures,
        "config": {
            "annotations": str(options["annotations"]),
            "images": str(options["images"]),
            "ratio": options["ratio"],
            "ipd": ipd,
            "canvas": [canvas_w, canvas_h],
            "tau": options["tau"],
            "eta": options["eta"],
            "max_attempts": options["max_attempts"],
            "extension_px": options["extension_px"],
            "area_range": [area_min, area_max],
            "observer": options["observer"],
            "seed": options["seed"],
            "workers": options["workers"],
            "t_max": options["t_max"],
            "patience": options["patience"],
            "match_iou_floor": options["match_iou_floor"],
            "background_scope": options["background_scope"],
        },
        "source": {
            "num_images": len(dataset.images),
            "num_objects": dataset.num_objects,
            "dropped_degenerate": dataset.report.dropped_degenerate,
            "crowd_annotations": dataset.report.crowd_annotations,
        },
        "canvases": [
            {"id": s.canvas_id, "phi": round(s.phi, 6), "diversity": s.diversity,
             "objective": round(s.objective, 6), "iterations": s.iterations,
             "placed": s.placed_total, "removed": s.removed_total,
             "pool": s.pool_size}
            for s in result.stats],
        "failures": {str(cid): str(err) for cid, err in result.failures.items()},
        "elapsed_seconds": round(result.elapsed_seconds, 3),
        "totals": {
            "images": len(result.distilled.images),
            "objects": result.distilled.num_objects,
            "mean_phi": round(
                sum(s.phi for s in result.stats) / len(result.stats), 6)
                if result.stats else 0.0,
            "mean_objective": round(
                sum(s.objective for s in result.stats) / len(result.stats), 6)
                if result.stats else 0.0,
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    status = "complete" if manifest["complete"] else "INCOMPLETE"
    print(f"{status}: {len(result.distilled.images)}/{ipd} canvases, "
          f"{result.distilled.num_objects} objects, "
          f"{emit.images_written} images -> {out_dir}")
    return exit_code


def source_category_histogram(dataset: ann.SourceDataset) -> dict[int, dict[str, int]]:
    stats = {c.id: {"images": 0, "objects": 0} for c in dataset.categories}
    for image in dataset.images:
        seen = set()
        for obj in image.objects:
            stats[obj.category_id]["objects"] += 1
            seen.add(obj.category_id)
        for cid in seen:
            stats[cid]["images"] += 1
    return stats


def distilled_category_histogram(dataset: ann.DistilledDataset) -> dict[int, dict[str, int]]:
    stats = {c.id: {"images": 0, "objects": 0} for c in dataset.categories}
    for image in dataset.images:
        seen = set()
        for obj in image.objects:
            stats[obj.category_id]["objects"] += 1
            seen.add(obj.category_id)
        for cid in seen:
            stats[cid]["images"] += 1
    return stats


def tv_distance(counts_p: dict[int, int], counts_q: dict[int, int]) -> float:
    """Half the L1 distance between the two normalized distributions."""
    total_p = sum(counts_p.values())
    total_q = sum(counts_q.values())
    if total_p == 0 or total_q == 0:
        return 1.0
    keys = set(counts_p) | set(counts_q)
    return 0.5 * math.fsum(
        abs(counts_p.get(k, 0) / total_p - counts_q.get(k, 0) / total_q)
        for k in keys)


def cmd_stats(args: argparse.Namespace) -> int:
    source = ann.parse_dataset(args.source)
    distilled = ann.parse_distilled(args.distilled)
    src_hist = source_category_histogram(source)
    dst_hist = distilled_category_histogram(distilled)
    names = {c.id: c.name for c in source.categories}
    names.update({c.id: c.name for c in distilled.categories})
    print(f"{'category':<20} {'src_imgs':>8} {'src_objs':>8} "
          f"{'dst_imgs':>8} {'dst_objs':>8}")
    for cid in sorted(set(src_hist) | set(dst_hist)):
        src = src_hist.get(cid, {"images": 0, "objects": 0})
        dst = dst_hist.get(cid, {"images": 0, "objects": 0})
        label = f"{cid}:{names.get(cid, '?')}"
        print(f"{label:<20} {src['images']:>8} {src['objects']:>8} "
              f"{dst['images']:>8} {dst['objects']:>8}")
    tv = tv_distance({k: v["objects"] for k, v in src_hist.items()},
                     {k: v["objects"] for k, v in dst_hist.items()})
    print(f"tv_distance {tv:.6f}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.overlap_grid:
        print("p1\tp2\tremoved_either\tpersists_both\tholds")
        for cell in overlap_grid():
            print(f"{cell.p1}\t{cell.p2}\t{cell.removed_either}"
                  f"\t{cell.persists_both}\t{cell.holds}")
        return 0
    print("confidence\tmean_g1\tmean_g2\tdiff\tlcb99\tfrac_g2_ge_g1"
          "\tmonotonic_trials\tpartition_violations")
    for spec in args.confidence:
        config = SimConfig(
            trials=args.trials, iterations=args.iterations, eta=args.eta,
            capacity=args.capacity, confidence=spec, area=args.area,
            seed=args.seed,
            replacement=args.pool_size is None,
            pool_size=args.pool_size)
        report = compare_forms(config)
        print(f"{spec}\t{report.mean_g1:.6f}\t{report.mean_g2:.6f}"
              f"\t{report.diff_mean:.6f}\t{report.diff_lcb99:.6f}"
              f"\t{report.frac_g2_ge_g1:.4f}"
              f"\t{report.monotonic_trials}/{config.trials}"
              f"\t{report.partition_violations}")
    return 0


def cmd_observer_selftest(args: argparse.Namespace) -> int:
    backend = parse_observer_spec(args.observer)
    try:
        report = run_selftest(backend, args.match_iou_floor)
    finally:
        close = getattr(backend, "close", None)
        if close is not None:
            close()
    for message in report.messages:
        print(message)
    if report.ok:
        print("selftest passed")
        return 0
    print("selftest FAILED", file=sys.stderr)
    return 4


def cmd_inspect(args: argparse.Namespace) -> int:
    dataset = ann.parse_dataset(args.annotations)
    print(f"images {len(dataset.images)}")
    print(f"objects {dataset.num_objects}")
    print(f"categories {len(dataset.categories)}")
    print(f"dropped_degenerate {dataset.report.dropped_degenerate}")
    print(f"crowd_annotations {dataset.report.crowd_annotations}")
    if dataset.num_objects:
        area_min, area_max = dataset.tight_area_range()
        print(f"tight_area_range {area_min:.2f} {area_max:.2f}")
    hist = source_category_histogram(dataset)
    for cid in sorted(hist):
        name = dataset.category(cid).name
        print(f"category {cid}:{name} images={hist[cid]['images']} "
              f"objects={hist[cid]['objects']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detdistill",
        description="Condense an annotated detection dataset into a handful "
                    "of synthesized canvases.")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("distill", help="synthesize a distilled dataset")
    d.add_argument("--annotations", help="source annotations JSON")
    d.add_argument("--images", help="source image directory")
    d.add_argument("--out", help="output directory")
    d.add_argument("--ratio", type=float, help="compression ratio in (0, 1]")
    d.add_argument("--ipd", type=int, help="canvas count (alternative to --ratio)")
    d.add_argument("--tau", type=float, help="overlap threshold on extended boxes")
    d.add_argument("--eta", type=float, help="screening confidence threshold")
    d.add_argument("--max-attempts", type=int, dest="max_attempts",
                   help="placement attempts per candidate")
    d.add_argument("--extension-px", type=float, dest="extension_px",
                   help="context extension budget in pixels")
    d.add_argument("--canvas", help="canvas size WxH (overrides --preset)")
    d.add_argument("--preset", choices=sorted(CANVAS_PRESETS),
                   help="canvas size preset")
    d.add_argument("--observer",
                   help="heuristic | exec:CMD | http(s)://host:port")
    d.add_argument("--seed", type=int, help="run seed")
    d.add_argument("--workers", type=int, help="canvas worker threads")
    d.add_argument("--t-max", type=int, dest="t_max",
                   help="add/remove iterations per canvas")
    d.add_argument("--patience", type=int,
                   help="consecutive rejections before a canvas is full")
    d.add_argument("--match-iou-floor", type=float, dest="match_iou_floor",
                   help="IoU floor for detection-object matching")
    d.add_argument("--background-scope", dest="background_scope",
                   choices=["segment", "dataset"],
                   help="where canvas backgrounds are drawn from")
    d.add_argument("--keep-partial", action="store_const", const=True,
                   dest="keep_partial",
                   help="exit 0 with partial output if canvases fail")
    d.add_argument("--config", help="key=value config file")
    d.set_defaults(func=cmd_distill)

    s = sub.add_parser("stats", help="compare category distributions")
    s.add_argument("--source", required=True, help="source annotations JSON")
    s.add_argument("--distilled", required=True, help="distilled annotations JSON")
    s.set_defaults(func=cmd_stats)

    m = sub.add_parser("simulate", help="screening simulation and exact bounds")
    m.add_argument("--trials", type=int, default=1000)
    m.add_argument("--iterations", type=int, default=10)
    m.add_argument("--eta", type=float, default=0.2)
    m.add_argument("--capacity", type=float, default=50.0)
    m.add_argument("--confidence", nargs="+",
                   default=["uniform:0,1", "beta:2,5", "twopoint:0.5,0.1,0.9"],
                   help="confidence distribution specs")
    m.add_argument("--area", default="constant:1", help="area distribution spec")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--pool-size", type=int, dest="pool_size",
                   help="finite-pool mode: draws available per trial")
    m.add_argument("--overlap-grid", action="store_true", dest="overlap_grid",
                   help="print the exact two-pass overlap bound grid and exit")
    m.set_defaults(func=cmd_simulate)

    o = sub.add_parser("observer-selftest",
                       help="check an observer backend against a fixture canvas")
    o.add_argument("--observer", required=True,
                   help="heuristic | exec:CMD | http(s)://host:port")
    o.add_argument("--match-iou-floor", type=float, dest="match_iou_floor",
                   default=0.5)
    o.set_defaults(func=cmd_observer_selftest)

    i = sub.add_parser("inspect", help="summarize an annotations file")
    i.add_argument("--annotations", required=True)
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ObserverError as exc:
        print(f"observer error: {exc}", file=sys.stderr)
        return 4
    except DistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
