"""Command-line entry point: ``vasbench <gen|evaluate|consistency|oracle|warp|report>``.

Every flag may also come from a JSON config file (``--config``), keyed by the
flag's long name with dashes turned into underscores; flags on the command
line win. ``VASBENCH_JOBS`` sets the default worker count.

Exit status is 0 when every requested metric was computed on at least one
frame, 1 when some metric stayed undefined, and 2 on errors. Errors are
also written to stderr as a JSON object.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .adapter import DEFAULT_TIMEOUT_MS, load_precomputed, run_batch
from .consistency import evaluate_consistency, per_pair_csv
from .dataset_io import (
    DatasetSequence,
    ScoreSequence,
    read_timing,
    score_pattern,
    timing_path,
    write_raster,
    write_scores,
    write_sequence,
    write_timing,
)
from .errors import GeometryMissingError, MissingFrameError, NothingToEvaluateError, VasbenchError
from .metrics import METRIC_NAMES
from .reprojection import MAX_DEPTH, warp_mask
from .report import (
    ALL_METRICS,
    CONSISTENCY,
    build_report,
    format_table,
    merge_reports,
    sequence_block,
    to_csv,
    to_json,
)
from .streaming import LatencyProfile, evaluate_sequence, latency_to_frames, oracle_sweep, sweep_to_csv
from .synthgen import Cuboid, ReferenceScorer, SceneSpec, generate, score

JOBS_ENV = "VASBENCH_JOBS"


class UsageError(VasbenchError):
    kind = "usage"


def _default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _int_list(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _metric_list(text):
    names = [x.strip() for x in str(text).split(",") if x.strip()]
    bad = [n for n in names if n not in ALL_METRICS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown metric(s) {bad}; choose from {', '.join(ALL_METRICS)}")
    return names


def _add_common(p):
    p.add_argument("--config", help="JSON file providing defaults for any flag")
    p.add_argument("--jobs", type=_positive(int), default=_default_jobs(),
                   help=f"worker threads (default ${JOBS_ENV} or 1); never changes results")


def _add_source(p):
    g = p.add_argument_group("method source (pick one)")
    g.add_argument("--method-cmd", help="command of a method speaking the pipe protocol")
    g.add_argument("--method", help="scores/<name>/ and timing/<name>.csv stored in the sequence directory")
    g.add_argument("--precomputed", help="directory of %%06d.scor score files")
    g.add_argument("--timing", help="timing CSV (frame_index,inference_ms) for --precomputed")
    g.add_argument("--scorer", help="reference scorer, e.g. oracle, noisy:0.2, shifted:10,0, delayed:6")
    g.add_argument("--scorer-seed", type=int, default=0)
    g.add_argument("--method-id", default=None, help="name used for outputs (default derived from source)")
    g.add_argument("--timeout-ms", type=_positive(float), default=DEFAULT_TIMEOUT_MS)
    g.add_argument("--input-channel", default="mask", choices=["mask", "depth"],
                   help="raster sent to --method-cmd for each frame")
    g.add_argument("--work-dir", help="where --method-cmd outputs go (default: the sequence directory)")
    p.add_argument("--latency-ms", type=float, default=None,
                   help="fixed latency overriding any measured timing")


def build_parser():
    parser = argparse.ArgumentParser(prog="vasbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vasbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic sequence directory")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=_positive(int), default=600)
    p.add_argument("--fps", type=_positive(float), default=60.0)
    p.add_argument("--width", type=_positive(int), default=480)
    p.add_argument("--height", type=_positive(int), default=270)
    p.add_argument("--speed", type=float, default=10.0, help="m/s")
    p.add_argument("--camera-height", type=_positive(float), default=1.5)
    p.add_argument("--hfov", type=_positive(float), default=90.0)
    p.add_argument("--yaw-rate", type=float, default=0.0, help="rad/s; nonzero gives a circular arc")
    p.add_argument("--spawn-interval", type=_positive(float), default=1.5, help="seconds between spawns")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--static", action="store_true", help="zero speed, one box 20 m ahead")
    p.add_argument("--scorer", action="append", default=[],
                   help="also store reference scorer outputs under scores/<name>/ (repeatable)")
    p.add_argument("--scorer-latency-ms", type=float, default=0.0,
                   help="constant latency written to timing/<name>.csv for --scorer outputs")

    p = sub.add_parser("evaluate", help="latency-agnostic and latency-aware metrics (+ consistency)")
    _add_common(p)
    p.add_argument("sequences", nargs="+")
    _add_source(p)
    p.add_argument("--metrics", type=_metric_list, default=None,
                   help=f"subset of {','.join(ALL_METRICS)} (default: all available)")
    p.add_argument("--delta-seconds", type=_positive(float), default=1.0)
    p.add_argument("--max-depth", type=_positive(float), default=MAX_DEPTH)
    p.add_argument("--per-frame", action="store_true", help="include per-frame values in the JSON")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--csv", help="per-sequence CSV path")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("consistency", help="temporal-consistency IoU")
    _add_common(p)
    p.add_argument("sequence")
    _add_source(p)
    p.add_argument("--delta-seconds", type=_positive(float), default=1.0)
    p.add_argument("--latency-coupled", action="store_true",
                   help="use the method latency as frame offset instead of --delta-seconds")
    p.add_argument("--max-depth", type=_positive(float), default=MAX_DEPTH)
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--csv", help="per-pair CSV path")

    p = sub.add_parser("oracle", help="oracle latency sweep as CSV")
    _add_common(p)
    p.add_argument("sequence")
    p.add_argument("--latencies", type=_int_list, default=[0, 6, 15, 30, 60], help="frame offsets")
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("warp", help="warp one frame's ground-truth mask into another frame")
    _add_common(p)
    p.add_argument("sequence")
    p.add_argument("--src", type=int, required=True, help="source frame index (1-based)")
    p.add_argument("--dst", type=int, required=True, help="target frame index (1-based)")
    p.add_argument("--max-depth", type=_positive(float), default=MAX_DEPTH)
    p.add_argument("--out", required=True, help="warped mask raster path")
    p.add_argument("--valid-out", help="validity mask raster path")

    p = sub.add_parser("report", help="merge report JSON files and print the table")
    _add_common(p)
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.add_argument("--csv")
    return parser


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), None)
    path = _config_path(argv)
    if path and command:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {path}: {exc}")
        sp = parser._subparsers._group_actions[0].choices[command]
        actions = {a.dest: a for a in sp._actions}
        unknown = sorted(set(cfg) - set(actions) - {"config"})
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        for key, value in cfg.items():
            action = actions[key]
            if action.type is not None and isinstance(value, str):
                cfg[key] = action.type(value)
            # values from the file satisfy required flags and positionals
            action.required = False
            if not action.option_strings:
                action.nargs = "*" if action.nargs == "+" else "?"
        sp.set_defaults(**cfg)
    return parser.parse_args(argv)


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _scorer_dirname(scorer):
    return scorer.label().replace(":", "_").replace(",", "_")


def cmd_gen(args):
    if args.static:
        spec = SceneSpec(fps=args.fps, frame_count=args.frames, width=args.width, height=args.height,
                         camera_height=args.camera_height, speed=0.0, hfov_deg=args.hfov,
                         anomalies=(Cuboid.on_ground(1.0, 20.0, 2.0, 1.2, 1.5),), rng_seed=args.seed)
    else:
        spec = SceneSpec(fps=args.fps, frame_count=args.frames, width=args.width, height=args.height,
                         camera_height=args.camera_height, speed=args.speed, hfov_deg=args.hfov,
                         yaw_rate=args.yaw_rate, spawn_interval_s=args.spawn_interval, rng_seed=args.seed)
    seq = generate(spec)
    out = Path(args.out)
    write_sequence(out, seq, seq.manifest)
    for text in args.scorer:
        scorer = ReferenceScorer.parse(text, args.seed)
        name = _scorer_dirname(scorer)
        write_scores(out / score_pattern(seq.manifest, name).rsplit("/", 1)[0], score(scorer, seq))
        write_timing(timing_path(out, name), [args.scorer_latency_ms] * len(seq))
    print(f"wrote {len(seq)} frames to {out}", file=sys.stderr)
    return 0


def _load_source(args, root, seq):
    """Score sequence, latency profile (or None) and method id for one sequence directory."""
    n = len(seq)
    fps = seq.manifest.fps
    chosen = [k for k in ("method_cmd", "method", "precomputed", "scorer") if getattr(args, k)]
    if len(chosen) != 1:
        raise UsageError("give exactly one of --method-cmd, --method, --precomputed, --scorer")
    kind = chosen[0]
    if kind == "scorer":
        scorer = ReferenceScorer.parse(args.scorer, args.scorer_seed)
        return score(scorer, seq), None, args.method_id or scorer.label()
    if kind == "method":
        name = args.method
        scores = seq.scores(name)
        missing = scores.missing()
        if missing:
            raise MissingFrameError(missing[0], "score", scores.path(missing[0] - 1))
        tp = timing_path(root, name)
        profile = LatencyProfile.measured(read_timing(tp, n), fps) if tp.exists() else None
        return scores, profile, args.method_id or name
    if kind == "precomputed":
        if args.timing:
            run = load_precomputed(args.precomputed, args.timing, fps, n, args.method_id or "precomputed")
            return run.scores, run.latency, run.method_id
        scores = ScoreSequence(args.precomputed, n)
        missing = scores.missing()
        if missing:
            raise MissingFrameError(missing[0], "score", scores.path(missing[0] - 1))
        return scores, None, args.method_id or "precomputed"
    method_id = args.method_id or "method"
    run = run_batch(args.method_cmd, root, args.work_dir or root, method_id, args.timeout_ms,
                    args.input_channel)
    return run.scores, run.latency, method_id


def _profile(args, measured, fps):
    if args.latency_ms is not None:
        return LatencyProfile.fixed(args.latency_ms, fps)
    return measured if measured is not None else LatencyProfile.zero(fps)


def _source_echo(args):
    keys = ("method_cmd", "method", "precomputed", "timing", "scorer", "scorer_seed", "method_id",
            "timeout_ms", "input_channel", "latency_ms")
    return {k: getattr(args, k) for k in keys}


def cmd_evaluate(args):
    blocks = []
    seqs = [(Path(s), DatasetSequence(s)) for s in args.sequences]
    if args.precomputed and len(seqs) > 1:
        raise UsageError("--precomputed takes a single sequence; use --method for several")
    if args.metrics is None:
        metrics = list(METRIC_NAMES)
        if all(seq.has_geometry for _, seq in seqs):
            metrics.append(CONSISTENCY)
    else:
        metrics = [m for m in ALL_METRICS if m in args.metrics]

    for root, seq in seqs:
        scores, measured, method_id = _load_source(args, root, seq)
        fps = seq.manifest.fps
        profile = _profile(args, measured, fps)
        seq_metrics = evaluate_sequence(scores, seq, profile, jobs=args.jobs)
        cons = None
        if CONSISTENCY in metrics:
            if not seq.has_geometry:
                raise GeometryMissingError(f"{root}: temporal consistency needs depth and pose channels")
            try:
                cons = evaluate_consistency(scores, seq, fps, seq.manifest.intrinsics,
                                            delta_seconds=args.delta_seconds, max_depth=args.max_depth,
                                            jobs=args.jobs)
            except NothingToEvaluateError:
                # too short for the offset: the metric stays undefined (exit 1)
                cons = None
        blocks.append(
            sequence_block(seq.manifest.sequence_id, method_id, seq_metrics, metrics, cons, args.per_frame)
        )

    config = {
        "command": "evaluate",
        "sequences": [str(s) for s in args.sequences],
        "source": _source_echo(args),
        "metrics": metrics,
        "tpr_target": 0.95,
        "delta_seconds": args.delta_seconds,
        "max_depth": args.max_depth,
        "occlusion_tolerance": {"abs_m": 0.5, "rel": 0.02},
        "latency_policy": "prediction t scored against ground truth t + round(latency * fps), halves up",
        "degenerate_policy": "frames without positives or negatives skipped per metric",
    }
    report = build_report(blocks, metrics, config)
    if args.out:
        _write(args.out, to_json(report))
    if args.csv:
        _write(args.csv, to_csv(report))
    if not args.quiet:
        sys.stdout.write(format_table(report))
    if not report["conformant"]:
        sys.stderr.write(json.dumps({"error": "metric_undefined", "undefined": report["undefined"]},
                                    sort_keys=True) + "\n")
        return 1
    return 0


def cmd_consistency(args):
    root = Path(args.sequence)
    seq = DatasetSequence(root)
    if not seq.has_geometry:
        raise GeometryMissingError(f"{root}: temporal consistency needs depth and pose channels")
    scores, measured, method_id = _load_source(args, root, seq)
    fps = seq.manifest.fps
    delta_frames = None
    if args.latency_coupled:
        profile = _profile(args, measured, fps)
        delta_frames = latency_to_frames(LatencyProfile.fixed(profile.mean_ms(), fps))
    rep = evaluate_consistency(scores, seq, fps, seq.manifest.intrinsics, delta_seconds=args.delta_seconds,
                               delta_frames=delta_frames, max_depth=args.max_depth, jobs=args.jobs)
    out = {
        "tool": {"name": "vasbench", "version": __version__},
        "sequence_id": seq.manifest.sequence_id,
        "method_id": method_id,
        "config": {"delta_seconds": args.delta_seconds, "latency_coupled": args.latency_coupled,
                   "max_depth": args.max_depth, "source": _source_echo(args)},
        **rep.to_dict(),
    }
    _write(args.out, json.dumps(out, indent=2, sort_keys=True) + "\n")
    if args.csv:
        _write(args.csv, per_pair_csv(rep))
    if rep.mean_iou is None:
        sys.stderr.write(json.dumps({"error": "metric_undefined", "undefined": ["consistency"]}) + "\n")
        return 1
    return 0


def cmd_oracle(args):
    seq = DatasetSequence(args.sequence)
    rows = oracle_sweep(seq, args.latencies, jobs=args.jobs)
    _write(args.out, sweep_to_csv(rows))
    undefined = [d for d, m in rows if m.auroc is None or m.auprc is None or m.fpr95 is None]
    if undefined:
        sys.stderr.write(json.dumps({"error": "metric_undefined", "delta_frames": undefined}) + "\n")
        return 1
    return 0


def cmd_warp(args):
    seq = DatasetSequence(args.sequence)
    if not seq.has_geometry:
        raise GeometryMissingError("warping needs depth and pose channels")
    n = len(seq)
    for name in ("src", "dst"):
        i = getattr(args, name)
        if not 1 <= i <= n:
            raise UsageError(f"--{name} {i} outside 1..{n}")
    a, b = seq[args.src - 1], seq[args.dst - 1]
    res = warp_mask(a.mask, a.depth, a.pose, b.depth, b.pose, seq.manifest.intrinsics, args.max_depth)
    write_raster(args.out, res.warped_mask, "mask")
    if args.valid_out:
        write_raster(args.valid_out, res.valid, "mask")
    sys.stdout.write(json.dumps(res.stats.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_report(args):
    reports = [json.loads(Path(p).read_text()) for p in args.reports]
    merged = merge_reports(reports)
    if args.out:
        _write(args.out, to_json(merged))
    if args.csv:
        _write(args.csv, to_csv(merged))
    sys.stdout.write(format_table(merged))
    return 0 if merged["conformant"] else 1


COMMANDS = {
    "gen": cmd_gen,
    "evaluate": cmd_evaluate,
    "consistency": cmd_consistency,
    "oracle": cmd_oracle,
    "warp": cmd_warp,
    "report": cmd_report,
}


def main(argv=None):
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except VasbenchError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return 2
    except (OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
