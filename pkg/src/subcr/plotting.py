"""Deterministic SVG figures for score reports.

matplotlib is forced onto the Agg backend and stripped of run-dependent
metadata (dates, random hash salts) so rerunning a report produces the
same bytes.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "subcr"

_SAVE_OPTS = dict(format="svg", metadata={"Date": None})


def roc_figure(roc, path):
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot(roc.fpr, roc.tpr, color="#1f6f8b", lw=1.8,
            label=f"AUC = {roc.auc:.4f}")
    ax.plot([0, 1], [0, 1], color="#999999", lw=0.8, ls="--")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.legend(loc="lower right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
    return path


def loss_figure(history, path):
    """Per-epoch loss curves; all-zero component columns are skipped."""
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot(epochs, [row["loss_total"] for row in history],
            color="#1f6f8b", lw=1.8, label="total")
    for key, color in (("loss_con", "#c05640"), ("loss_res", "#6a9955")):
        values = [row[key] for row in history]
        if any(v != 0.0 for v in values):
            ax.plot(epochs, values, color=color, lw=1.0, label=key[5:])
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
    return path


def score_histogram(report, path, bins=40):
    """Combined-score distribution, split by label when labels exist."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    edges = np.histogram_bin_edges(report.combined, bins=bins)
    if report.labels is not None:
        normal = report.combined[report.labels == 0]
        anomalous = report.combined[report.labels == 1]
        ax.hist(normal, bins=edges, color="#1f6f8b", alpha=0.7,
                label="normal")
        ax.hist(anomalous, bins=edges, color="#c05640", alpha=0.7,
                label="anomaly")
        ax.legend(frameon=False)
    else:
        ax.hist(report.combined, bins=edges, color="#1f6f8b", alpha=0.8)
    ax.set_xlabel("Combined anomaly score")
    ax.set_ylabel("Nodes")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
    return path
