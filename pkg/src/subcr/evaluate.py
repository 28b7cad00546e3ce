"""ROC/AUC computation and report artifacts.

AUC is the rank statistic (probability a random anomaly outscores a random
normal node, ties credited half), which equals the trapezoidal area under
the tie-collapsed ROC curve exactly; both are computed and pinned against
each other.
"""

import json
import os

import numpy as np
from dataclasses import dataclass
from scipy.stats import rankdata

from .errors import DimensionError, NumericalError, UndefinedMetricError


def _checked(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(
            f"scores {scores.shape} and labels {labels.shape} must be "
            "matching 1-d vectors")
    if not np.isfinite(scores).all():
        raise NumericalError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise UndefinedMetricError("labels must be binary 0/1")
    pos = int(labels.sum())
    if pos == 0 or pos == labels.size:
        raise UndefinedMetricError(
            f"need both classes, got {pos} positives out of {labels.size}")
    return scores, labels.astype(np.int64), pos


def compute_auc(scores, labels):
    """Mann-Whitney AUC with average ranks on ties."""
    scores, labels, pos = _checked(scores, labels)
    ranks = rankdata(scores, method="average")
    neg = labels.size - pos
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - pos * (pos + 1) / 2.0) / (pos * neg))


@dataclass
class RocResult:
    thresholds: np.ndarray  # descending; leading +inf sentinel for (0,0)
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def compute_roc(scores, labels):
    """ROC over distinct-score thresholds, ties collapsed to one step."""
    scores, labels, pos = _checked(scores, labels)
    neg = labels.size - pos
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    l_sorted = labels[order]
    # last index of each tie group
    last = np.nonzero(np.diff(s_sorted))[0]
    boundaries = np.concatenate([last, [labels.size - 1]])
    tps = np.cumsum(l_sorted)[boundaries]
    fps = boundaries + 1 - tps
    tpr = np.concatenate([[0.0], tps / pos])
    fpr = np.concatenate([[0.0], fps / neg])
    thresholds = np.concatenate([[np.inf], s_sorted[boundaries]])
    auc = float(0.5 * np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])))
    return RocResult(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc)


def emit_report(roc, report, out_dir, extra=None):
    """Write roc.csv, summary.json, and roc.svg under out_dir.

    extra entries (say the effective run configuration) are merged into
    summary.json. Byte-identical on rerun with the same inputs.
    """
    os.makedirs(out_dir, exist_ok=True)
    roc_path = os.path.join(out_dir, "roc.csv")
    with open(roc_path, "w", newline="") as fh:
        fh.write("fpr,tpr,threshold\n")
        for f, t, th in zip(roc.fpr, roc.tpr, roc.thresholds):
            fh.write(f"{float(f)!r},{float(t)!r},{float(th)!r}\n")

    summary_path = os.path.join(out_dir, "summary.json")
    summary = {
        "auc": roc.auc,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "rounds": report.rounds,
        "low_rounds": report.low_rounds,
    }
    if extra:
        summary.update(extra)
    with open(summary_path, "w", newline="") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")

    from . import plotting
    svg_path = os.path.join(out_dir, "roc.svg")
    plotting.roc_figure(roc, svg_path)
    return [roc_path, summary_path, svg_path]
