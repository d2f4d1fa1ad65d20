"""Command-line entry point wiring the pipeline into reproducible batch runs.

Subcommands: ``synth`` (benchmark generation), ``segment`` (scene stacks to
probability stacks), ``detect`` (per-location MLE reports), ``baseline``
(scalar changepoint methods), ``evaluate`` (metrics over labeled reports).

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.  Every run
echoes its arguments into ``run_config.json`` next to the outputs, and all
randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    METHOD_BCP_NDVI,
    METHOD_BCP_PIXELCOUNT,
    METHOD_BFAST_NDVI,
    baseline_record,
    bocpd,
    ndvi_series,
    series_from_probmaps,
    trend_break,
)
from .detector import (
    FitConfig,
    NullDistribution,
    detect,
    detection_record,
    read_records_jsonl,
    write_records_jsonl,
)
from .evaluation import (
    evaluate_scores,
    read_labels_csv,
    scores_from_records,
    write_eval_outputs,
)
from .scene_store import MANIFEST_NAME, read_scene_stack
from .spectral import (
    PROB_BAND,
    ProbMap,
    ProbMapSeries,
    confidences_to_probs,
    read_prob_stack,
    segment_series,
    smooth,
    write_prob_stack,
)
from .scene_store import read_raw_stack
from .synthgen import SyntheticSpec, generate_benchmark

REPORTS_FILE = "reports.jsonl"
RANKING_FILE = "ranking.csv"
RUN_CONFIG_FILE = "run_config.json"

_BASELINE_FLAGS = {
    "bcp-ndvi": METHOD_BCP_NDVI,
    "bcp-pixels": METHOD_BCP_PIXELCOUNT,
    "bfast-ndvi": METHOD_BFAST_NDVI,
}


class UsageError(Exception):
    """Invalid arguments or missing required inputs (exit code 2)."""


def _write_run_config(out_dir: Path, subcommand: str, args: argparse.Namespace) -> None:
    payload = {
        "subcommand": subcommand,
        "version": __version__,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / RUN_CONFIG_FILE, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def _manifest_bands(path: Path) -> list[str] | None:
    mf = path / MANIFEST_NAME
    if not mf.is_file():
        return None
    try:
        with open(mf, "r", encoding="utf-8") as fh:
            return list(json.load(fh).get("bands", []))
    except (OSError, json.JSONDecodeError):
        return None


def _find_stacks(root: Path, want_prob: bool) -> list[Path]:
    """Stack directories under ``root``: the root itself, direct children,
    or the conventional scene/probs subdirectories of location dirs."""

    def matches(path: Path) -> bool:
        bands = _manifest_bands(path)
        if bands is None:
            return False
        return (bands == [PROB_BAND]) == want_prob

    if matches(root):
        return [root]
    found = []
    for child in sorted(p for p in root.iterdir() if p.is_dir()):
        if matches(child):
            found.append(child)
            continue
        for sub in ("probs", "scene"):
            if matches(child / sub):
                found.append(child / sub)
                break
    return found


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    if args.static < 0 or args.expanded < 0 or args.static + args.expanded < 1:
        raise UsageError("need a non-negative, non-empty location count")
    template = SyntheticSpec(
        width=args.width, height=args.height, n_frames=args.frames,
        transition_frames=args.transition_frames, noise=args.noise,
        seasonal_amplitude=args.seasonal_amplitude, missing_rate=args.missing_rate,
        pixel_size_m=args.pixel_size,
    )
    out = Path(args.out)
    generate_benchmark(out, n_static=args.static, n_expanded=args.expanded,
                       template=template, seed=args.seed,
                       write_scenes=not args.no_scenes)
    _write_run_config(out, "synth", args)
    return 0


# --------------------------------------------------------------------------
# segment
# --------------------------------------------------------------------------

def _segment_confidences(stack_dir: Path, kernel: int) -> ProbMapSeries:
    manifest, pixels_list, masks_list = read_raw_stack(stack_dir)
    if len(manifest["bands"]) != 1:
        raise ValueError("a confidence stack must hold exactly one band")
    maps = []
    for px, mk, ts in zip(pixels_list, masks_list, manifest["timestamps"]):
        pm = confidences_to_probs(px[0], mask=mk, timestamp=ts)
        maps.append(smooth(pm, kernel))
    return ProbMapSeries(location_id=str(manifest["location_id"]), maps=tuple(maps),
                         pixel_size_m=float(manifest["pixel_size_m"]))


def _cmd_segment(args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise UsageError(f"input directory {src} does not exist")
    out = Path(args.out)
    if (src / MANIFEST_NAME).is_file():
        jobs = [(src, out)]
    else:
        stacks = _find_stacks(src, want_prob=False)
        if not stacks:
            raise UsageError(f"no scene stacks found under {src}")
        jobs = []
        for stack in stacks:
            parts = ["probs" if part == "scene" else part
                     for part in stack.relative_to(src).parts]
            jobs.append((stack, out.joinpath(*parts) if parts else out))
    for stack_dir, out_dir in jobs:
        if args.from_confidences:
            probs = _segment_confidences(stack_dir, args.kernel)
        else:
            scene = read_scene_stack(stack_dir)
            probs = segment_series(scene, gain=args.gain, center=args.center,
                                   kernel=args.kernel)
            probs = ProbMapSeries(
                location_id=probs.location_id,
                maps=tuple(ProbMap(values=m.values.astype(np.float32), mask=m.mask,
                                   timestamp=m.timestamp) for m in probs.maps),
                pixel_size_m=probs.pixel_size_m)
        write_prob_stack(probs, out_dir)
    _write_run_config(out, "segment", args)
    return 0


# --------------------------------------------------------------------------
# detect
# --------------------------------------------------------------------------

def _detect_job(job) -> tuple[str, dict]:
    stack_dir, config, null_values = job
    series = read_prob_stack(stack_dir)
    null = None if null_values is None else NullDistribution(np.asarray(null_values))
    report = detect(series, config, null)
    return report.location_id, detection_record(report)


def _run_detections(stacks, config: FitConfig, threads: int,
                    null_values) -> list[tuple[str, dict]]:
    jobs = [(stack, config, null_values) for stack in stacks]
    if threads <= 1:
        results = [_detect_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_detect_job, jobs))
    return sorted(results, key=lambda item: item[0])


def _fit_config_from_args(args) -> FitConfig:
    return FitConfig(
        max_iterations=args.max_iterations, step_size=args.step_size,
        momentum=args.momentum, convergence_tol=args.tol, alpha=args.alpha,
        restarts=args.restarts, seed=args.seed, sparsity=args.sparsity,
        solver=args.solver,
    )


def _cmd_detect(args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise UsageError(f"input directory {root} does not exist")
    stacks = _find_stacks(root, want_prob=True)
    if not stacks:
        raise UsageError(f"no probability stacks found under {root}")
    config = _fit_config_from_args(args)

    null_values = None
    if args.null_from:
        null_root = Path(args.null_from)
        if not null_root.is_dir():
            raise UsageError(f"null directory {null_root} does not exist")
        null_stacks = _find_stacks(null_root, want_prob=True)
        if not null_stacks:
            raise UsageError(f"no probability stacks found under {null_root}")
        null_results = _run_detections(null_stacks, config, args.threads, None)
        null_values = [rec["test_statistic"] for _, rec in null_results]

    results = _run_detections(stacks, config, args.threads, null_values)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records_jsonl([rec for _, rec in results], out / REPORTS_FILE)
    ranked = sorted(results, key=lambda item: (-item[1]["test_statistic"], item[0]))
    with open(out / RANKING_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_id", "test_statistic", "expansion_area_m2",
                         "null_percentile"])
        for loc, rec in ranked:
            pct = rec["null_percentile"]
            writer.writerow([loc, repr(rec["test_statistic"]),
                             repr(rec["expansion_area_m2"]),
                             "" if pct is None else repr(pct)])
    _write_run_config(out, "detect", args)
    return 0


# --------------------------------------------------------------------------
# baseline
# --------------------------------------------------------------------------

def _cmd_baseline(args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise UsageError(f"input directory {root} does not exist")
    method = _BASELINE_FLAGS[args.method]
    needs_scene = method in (METHOD_BCP_NDVI, METHOD_BFAST_NDVI)
    stacks = _find_stacks(root, want_prob=not needs_scene)
    if not stacks:
        kind = "scene" if needs_scene else "probability"
        raise UsageError(f"no {kind} stacks found under {root}")

    records = []
    for stack in stacks:
        if needs_scene:
            series = ndvi_series(read_scene_stack(stack))
        else:
            series = series_from_probmaps(read_prob_stack(stack), args.threshold)
        if method == METHOD_BFAST_NDVI:
            result = trend_break(series, n_harmonics=args.harmonics)
        else:
            result = bocpd(series, hazard=args.hazard, method=method)
        records.append(baseline_record(series.location_id, result))
    records.sort(key=lambda rec: rec["location_id"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records_jsonl(records, out / REPORTS_FILE, append=True)
    _write_run_config(out, "baseline", args)
    return 0


# --------------------------------------------------------------------------
# evaluate
# --------------------------------------------------------------------------

def _cmd_evaluate(args) -> int:
    reports_path = Path(args.reports)
    if reports_path.is_dir():
        reports_path = reports_path / REPORTS_FILE
    if not reports_path.is_file():
        raise UsageError(f"reports file {reports_path} does not exist")
    labels_path = Path(args.labels)
    if not labels_path.is_file():
        raise UsageError(f"labels file {labels_path} does not exist")

    records = read_records_jsonl(reports_path)
    labels = read_labels_csv(labels_path)
    grouped = scores_from_records(records, labels)
    if not grouped:
        raise ValueError("report stream holds no records")
    reports = {method: evaluate_scores(scores, correlation_seed=args.seed)
               for method, scores in grouped.items()}
    out = Path(args.out)
    write_eval_outputs(reports, out)
    _write_run_config(out, "evaluate", args)
    return 0


# --------------------------------------------------------------------------
# parser & entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expanscan",
        description="Structural-expansion detection in probability-map time series.",
    )
    parser.add_argument("--version", action="version", version=f"expanscan {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--static", type=int, default=200)
    p.add_argument("--expanded", type=int, default=50)
    p.add_argument("--width", type=int, default=200)
    p.add_argument("--height", type=int, default=200)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--missing-rate", type=float, default=0.08)
    p.add_argument("--seasonal-amplitude", type=float, default=0.15)
    p.add_argument("--transition-frames", type=int, default=3)
    p.add_argument("--pixel-size", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-scenes", action="store_true",
                   help="skip scene stacks (probability stacks only)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("segment", help="turn scene stacks into probability stacks")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gain", type=float, default=10.0)
    p.add_argument("--center", type=float, default=0.0)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--from-confidences", action="store_true",
                   help="input holds raw confidences; apply the logistic transform")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("detect", help="run MLE detection over probability stacks")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--null-from", default=None,
                   help="directory of presumed-static stacks for null calibration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--sparsity", type=float, default=0.0)
    p.add_argument("--solver", choices=["newton", "momentum"], default="newton")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("baseline", help="run a scalar changepoint baseline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", required=True, choices=sorted(_BASELINE_FLAGS))
    p.add_argument("--hazard", type=float, default=None)
    p.add_argument("--harmonics", type=int, default=2)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("evaluate", help="compute metrics over labeled reports")
    p.add_argument("--reports", required=True,
                   help="reports.jsonl file or a directory containing it")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"expanscan {args.subcommand}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"expanscan {args.subcommand}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
