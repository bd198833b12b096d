"""Assembly and rendering of metric reports.

A report holds one block per evaluated sequence and an aggregate that is the
unweighted mean over sequences (each metric over the sequences where it is
defined). Reports carry no timestamps or worker counts, so identical inputs
and flags always serialize to identical bytes.
"""

import csv
import io
import json
import math

from . import __version__
from .metrics import METRIC_NAMES

CONSISTENCY = "consistency"
ALL_METRICS = METRIC_NAMES + (CONSISTENCY,)
LABELS = {"auroc": "AUROC", "auprc": "AUPRC", "fpr95": "FPR@95"}


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def sequence_block(sequence_id, method_id, seq_metrics, metrics, consistency=None, per_frame=False):
    frame_metrics = [m for m in metrics if m in METRIC_NAMES]
    block = {"sequence_id": sequence_id, "method_id": method_id}
    if frame_metrics:
        block.update(seq_metrics.to_dict(frame_metrics, per_frame))
    else:
        block["latency"] = seq_metrics.profile.to_dict()
    block["inference_ms"] = seq_metrics.profile.mean_ms()
    if CONSISTENCY in metrics:
        block[CONSISTENCY] = None if consistency is None else consistency.to_dict(per_pair=per_frame)
    return block


def aggregate(blocks, metrics):
    agg = {}
    frame_metrics = [m for m in metrics if m in METRIC_NAMES]
    for part in ("latency_agnostic", "latency_aware"):
        if frame_metrics:
            agg[part] = {m: _mean(b[part][m] for b in blocks) for m in frame_metrics}
    if CONSISTENCY in metrics:
        agg["consistency_iou"] = _mean((b.get(CONSISTENCY) or {}).get("mean_iou") for b in blocks)
    agg["inference_ms"] = _mean(b["inference_ms"] for b in blocks)
    return agg


def undefined_metrics(report):
    """Requested metrics that were computed on no frame at all."""
    missing = []
    for b in report["sequences"]:
        for part in ("latency_agnostic", "latency_aware"):
            for m in report["metrics"]:
                if m in METRIC_NAMES and b[part][m] is None:
                    missing.append(f"{b['sequence_id']}.{part}.{m}")
        if CONSISTENCY in report["metrics"]:
            c = b.get(CONSISTENCY)
            if c is None or c["mean_iou"] is None:
                missing.append(f"{b['sequence_id']}.{CONSISTENCY}")
    return missing


def build_report(blocks, metrics, config):
    report = {
        "tool": {"name": "vasbench", "version": __version__},
        "config": config,
        "metrics": list(metrics),
        "sequences": blocks,
        "aggregate": aggregate(blocks, metrics),
    }
    report["undefined"] = undefined_metrics(report)
    report["conformant"] = not report["undefined"]
    return report


def merge_reports(reports):
    """Combine several reports (e.g. one per sequence) into one."""
    metrics = reports[0]["metrics"]
    for r in reports[1:]:
        if r["metrics"] != metrics:
            raise ValueError("reports cover different metric sets")
    blocks = [b for r in reports for b in r["sequences"]]
    return build_report(blocks, metrics, {"merged": [r["config"] for r in reports]})


def to_json(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def to_csv(report):
    metrics = report["metrics"]
    frame_metrics = [m for m in metrics if m in METRIC_NAMES]
    header = ["sequence_id", "method_id"]
    header += [f"agnostic_{m}" for m in frame_metrics] + [f"aware_{m}" for m in frame_metrics]
    if CONSISTENCY in metrics:
        header.append("consistency_iou")
    header.append("inference_ms")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)

    def cell(x):
        return "" if x is None else repr(float(x))

    for b in report["sequences"]:
        row = [b["sequence_id"], b["method_id"]]
        row += [cell(b["latency_agnostic"][m]) for m in frame_metrics]
        row += [cell(b["latency_aware"][m]) for m in frame_metrics]
        if CONSISTENCY in metrics:
            c = b.get(CONSISTENCY)
            row.append(cell(None if c is None else c["mean_iou"]))
        row.append(cell(b["inference_ms"]))
        w.writerow(row)
    return buf.getvalue()


def _pct(x):
    return "-" if x is None else f"{100.0 * x:.2f}"


def format_table(report):
    """Console table grouped like the usual benchmark layout:
    agnostic | aware | temporal consistency | inference time."""
    metrics = report["metrics"]
    fm = [m for m in metrics if m in METRIC_NAMES]
    cols = ["Sequence", "Method"]
    cols += [f"{LABELS[m]}" for m in fm] * 2
    if CONSISTENCY in metrics:
        cols.append("TC (%)")
    cols.append("Time (ms)")

    rows = []
    for b in report["sequences"]:
        row = [b["sequence_id"], b["method_id"]]
        row += [_pct(b["latency_agnostic"][m]) for m in fm]
        row += [_pct(b["latency_aware"][m]) for m in fm]
        if CONSISTENCY in metrics:
            c = b.get(CONSISTENCY)
            row.append(_pct(None if c is None else c["mean_iou"]))
        row.append(f"{b['inference_ms']:.1f}")
        rows.append(row)
    if len(report["sequences"]) > 1:
        a = report["aggregate"]
        row = ["mean", ""]
        row += [_pct(a["latency_agnostic"][m]) for m in fm] if fm else []
        row += [_pct(a["latency_aware"][m]) for m in fm] if fm else []
        if CONSISTENCY in metrics:
            row.append(_pct(a["consistency_iou"]))
        row.append("-" if a["inference_ms"] is None else f"{a['inference_ms']:.1f}")
        rows.append(row)

    widths = [max(len(str(r[i])) for r in rows + [cols]) for i in range(len(cols))]
    group = ["", ""]
    if fm:
        group += ["agnostic"] + [""] * (len(fm) - 1) + ["aware"] + [""] * (len(fm) - 1)
    group += [""] * (len(cols) - len(group))

    def line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [line(group), line(cols), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"
