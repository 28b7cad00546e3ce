import json

import numpy as np
import pytest

from subcr import evaluate, pipeline
from subcr.errors import DimensionError, NumericalError, UndefinedMetricError


def brute_force_auc(scores, labels):
    """Pairwise oracle: P(random anomaly outscores random normal)."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[np.asarray(labels) == 1]
    neg = scores[np.asarray(labels) == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_instance(gen, max_n=50):
    n = int(gen.integers(4, max_n + 1))
    labels = np.zeros(n, dtype=np.int64)
    labels[gen.choice(n, int(gen.integers(1, n)), replace=False)] = 1
    if gen.random() < 0.5:
        scores = gen.integers(0, 6, size=n).astype(np.float64)  # heavy ties
    else:
        scores = gen.normal(size=n)
    return scores, labels


# ------------------------------------------------------------------- auc

def test_auc_perfect_separation():
    labels = np.array([0, 0, 1, 1])
    assert evaluate.compute_auc([0.1, 0.2, 0.8, 0.9], labels) == 1.0
    assert evaluate.compute_auc([0.9, 0.8, 0.2, 0.1], labels) == 0.0


def test_auc_all_tied_is_half():
    assert evaluate.compute_auc(np.ones(10), [0, 1] * 5) == 0.5


def test_auc_matches_pairwise_oracle_exactly():
    gen = np.random.default_rng(42)
    for _ in range(60):
        scores, labels = random_instance(gen)
        assert evaluate.compute_auc(scores, labels) == brute_force_auc(
            scores, labels)


def test_auc_antisymmetry_without_ties():
    gen = np.random.default_rng(7)
    scores = gen.permutation(30).astype(np.float64)
    labels = (gen.random(30) < 0.4).astype(np.int64)
    labels[0], labels[1] = 0, 1
    a = evaluate.compute_auc(scores, labels)
    b = evaluate.compute_auc(-scores, labels)
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_auc_invariant_under_monotone_transform():
    gen = np.random.default_rng(8)
    scores = gen.normal(size=40)
    labels = (gen.random(40) < 0.3).astype(np.int64)
    labels[:2] = [0, 1]
    a = evaluate.compute_auc(scores, labels)
    assert evaluate.compute_auc(np.exp(scores), labels) == a
    assert evaluate.compute_auc(3.0 * scores + 11.0, labels) == a


def test_auc_input_validation():
    with pytest.raises(UndefinedMetricError):
        evaluate.compute_auc([1.0, 2.0], [1, 1])
    with pytest.raises(UndefinedMetricError):
        evaluate.compute_auc([1.0, 2.0], [0, 0])
    with pytest.raises(UndefinedMetricError):
        evaluate.compute_auc([1.0, 2.0], [0, 2])
    with pytest.raises(DimensionError):
        evaluate.compute_auc([1.0, 2.0, 3.0], [0, 1])
    with pytest.raises(NumericalError):
        evaluate.compute_auc([np.nan, 2.0], [0, 1])


# ------------------------------------------------------------------- roc

def test_roc_endpoints_and_monotonicity():
    gen = np.random.default_rng(3)
    scores, labels = random_instance(gen)
    roc = evaluate.compute_roc(scores, labels)
    assert roc.fpr[0] == 0.0 and roc.tpr[0] == 0.0
    assert roc.fpr[-1] == 1.0 and roc.tpr[-1] == 1.0
    assert np.all(np.diff(roc.fpr) >= 0)
    assert np.all(np.diff(roc.tpr) >= 0)
    assert np.all(np.diff(roc.thresholds) < 0)
    assert roc.thresholds[0] == np.inf


def test_roc_auc_equals_trapezoid_and_rank_auc():
    gen = np.random.default_rng(4)
    for _ in range(40):
        scores, labels = random_instance(gen)
        roc = evaluate.compute_roc(scores, labels)
        assert roc.auc == pytest.approx(
            np.trapezoid(roc.tpr, roc.fpr), abs=1e-12)
        assert roc.auc == pytest.approx(
            evaluate.compute_auc(scores, labels), abs=1e-9)


def test_roc_perfect_separation_hits_corner():
    roc = evaluate.compute_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    pairs = set(zip(roc.fpr.tolist(), roc.tpr.tolist()))
    assert (0.0, 1.0) in pairs
    assert roc.auc == 1.0


def test_roc_ties_collapse_to_one_step():
    scores = [0.5, 0.5, 0.5, 0.9, 0.1]
    roc = evaluate.compute_roc(scores, [0, 1, 0, 1, 0])
    # thresholds: inf plus one per distinct score
    assert len(roc.thresholds) == 4
    assert 0.5 in roc.thresholds


def test_roc_reversed_scores_flip_auc():
    gen = np.random.default_rng(5)
    scores = gen.permutation(25).astype(np.float64)
    labels = (gen.random(25) < 0.5).astype(np.int64)
    labels[:2] = [0, 1]
    a = evaluate.compute_roc(scores, labels).auc
    b = evaluate.compute_roc(-scores, labels).auc
    assert a == pytest.approx(1.0 - b, abs=1e-12)


# ----------------------------------------------------------------- report

@pytest.fixture
def small_report():
    gen = np.random.default_rng(9)
    n = 40
    labels = np.zeros(n, dtype=np.int64)
    labels[:6] = 1
    combined = gen.random(n) + labels * 0.8
    return pipeline.ScoreReport(
        node_ids=np.arange(n), contrastive=gen.random(n),
        reconstruction=gen.random(n), combined=combined, labels=labels,
        config_hash="deadbeefdeadbeef", seed=5, rounds=3, low_rounds=True)


def test_emit_report_writes_three_files(tmp_path, small_report):
    roc = evaluate.compute_roc(small_report.combined, small_report.labels)
    out = tmp_path / "report"
    paths = evaluate.emit_report(roc, small_report, out)
    assert [p.rsplit("/", 1)[-1] for p in paths] == [
        "roc.csv", "summary.json", "roc.svg"]
    for p in paths:
        assert (tmp_path / "report" / p.rsplit("/", 1)[-1]).exists()

    lines = (out / "roc.csv").read_text().splitlines()
    assert lines[0] == "fpr,tpr,threshold"
    assert len(lines) == 1 + len(roc.fpr)
    cells = lines[1].split(",")
    assert float(cells[0]) == roc.fpr[0]
    assert float(cells[2]) == np.inf

    summary = json.loads((out / "summary.json").read_text())
    assert summary["auc"] == roc.auc
    assert summary["config_hash"] == "deadbeefdeadbeef"
    assert summary["seed"] == 5
    assert summary["rounds"] == 3
    assert summary["low_rounds"] is True

    svg = (out / "roc.svg").read_bytes()
    assert svg.lstrip().startswith(b"<?xml")
    assert b"<svg" in svg
    assert b"dc:date" not in svg


def test_emit_report_reruns_byte_identical(tmp_path, small_report):
    roc = evaluate.compute_roc(small_report.combined, small_report.labels)
    out = tmp_path / "report"
    evaluate.emit_report(roc, small_report, out)
    first = {name: (out / name).read_bytes()
             for name in ("roc.csv", "summary.json", "roc.svg")}
    evaluate.emit_report(roc, small_report, out)
    for name, blob in first.items():
        assert (out / name).read_bytes() == blob, name


def test_summary_auc_matches_compute_auc(tmp_path, small_report):
    roc = evaluate.compute_roc(small_report.combined, small_report.labels)
    evaluate.emit_report(roc, small_report, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["auc"] == pytest.approx(
        evaluate.compute_auc(small_report.combined, small_report.labels),
        abs=1e-9)


def test_roc_csv_roundtrips_floats(tmp_path, small_report):
    roc = evaluate.compute_roc(small_report.combined, small_report.labels)
    evaluate.emit_report(roc, small_report, tmp_path)
    rows = (tmp_path / "roc.csv").read_text().splitlines()[1:]
    got_fpr = np.array([float(r.split(",")[0]) for r in rows])
    got_tpr = np.array([float(r.split(",")[1]) for r in rows])
    assert np.array_equal(got_fpr, roc.fpr)
    assert np.array_equal(got_tpr, roc.tpr)


# ---------------------------------------------------------------- figures

def test_loss_figure_deterministic(tmp_path):
    from subcr import plotting
    history = [{"epoch": e, "loss_con": 1.0 / (e + 1), "loss_res": 0.0,
                "loss_total": 2.0 / (e + 1)} for e in range(5)]
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plotting.loss_figure(history, a)
    plotting.loss_figure(history, b)
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()


def test_score_histogram_with_and_without_labels(tmp_path, small_report):
    from subcr import plotting
    with_labels = tmp_path / "h1.svg"
    plotting.score_histogram(small_report, with_labels)
    assert with_labels.exists()
    small_report.labels = None
    without = tmp_path / "h2.svg"
    plotting.score_histogram(small_report, without)
    assert without.exists()
