import numpy as np
import pytest

from subcr import diffusion, model, pipeline, sampling, synth
from subcr.errors import ConfigError, MalformedInputError, NumericalError

from conftest import random_graph


def tiny_config(**overrides):
    base = dict(p=4, dim=6, batch_size=16, epochs=3, lr=0.01, gamma=0.6,
                alpha=0.15, restart_prob=0.5, rounds=2, seed=0)
    base.update(overrides)
    return pipeline.TrainConfig(**base)


@pytest.fixture(scope="module")
def labeled_graph():
    g = synth.community_graph(num_nodes=60, num_features=12,
                              num_communities=4, seed=3)
    labels = np.zeros(60, dtype=np.int64)
    labels[[4, 11, 25]] = 1
    return g.with_labels(labels)


@pytest.fixture(scope="module")
def diffused(labeled_graph):
    return diffusion.compute_ppr(labeled_graph, alpha=0.15)


# ------------------------------------------------------------------- config

@pytest.mark.parametrize("bad", [
    dict(variant="subr"),
    dict(p=0),
    dict(p=1),                      # reconstruction needs p >= 2
    dict(dim=0),
    dict(batch_size=1),
    dict(epochs=0),
    dict(lr=0.0),
    dict(gamma=-0.2),
    dict(alpha=0.0),
    dict(alpha=1.0),
    dict(restart_prob=0.0),
    dict(restart_prob=1.2),
    dict(rounds=0),
    dict(negative_mode="mirror"),
    dict(inter_norm="rms"),
    dict(score_norm="rank"),
])
def test_config_rejects_bad_fields(bad):
    with pytest.raises(ConfigError):
        tiny_config(**bad)


def test_config_allows_p1_without_reconstruction():
    cfg = tiny_config(p=1, variant="sub-r")
    assert cfg.p == 1


def test_config_hash_tracks_fields():
    a = pipeline.config_hash(tiny_config())
    b = pipeline.config_hash(tiny_config())
    c = pipeline.config_hash(tiny_config(seed=1))
    assert a == b and a != c
    assert len(a) == 16 and set(a) <= set("0123456789abcdef")


def test_variant_settings_table():
    s = pipeline.variant_settings(tiny_config())
    assert (s.views, s.use_contrast, s.use_recon) == (
        ("local", "global"), True, True)
    assert s.loss_gamma == 0.6
    assert not pipeline.variant_settings(
        tiny_config(variant="sub-r")).use_recon
    assert not pipeline.variant_settings(
        tiny_config(variant="sub-c")).use_contrast
    w = pipeline.variant_settings(tiny_config(variant="sub-weight"))
    assert w.loss_gamma == 1.0 and w.score_gamma == 1.0
    assert pipeline.variant_settings(
        tiny_config(variant="sub-global")).views == ("local",)


# -------------------------------------------------------------------- train

def test_train_produces_history_and_finite_losses(labeled_graph, diffused):
    cfg = tiny_config()
    params, history = pipeline.train(cfg, labeled_graph, diffused)
    assert len(history) == cfg.epochs
    assert [row["epoch"] for row in history] == list(range(cfg.epochs))
    for row in history:
        for key in ("loss_con", "loss_res", "loss_total"):
            assert np.isfinite(row[key])
    assert params.num_features == labeled_graph.num_features


def test_train_loss_decreases_on_easy_graph(labeled_graph, diffused):
    cfg = tiny_config(epochs=12, lr=0.02)
    _, history = pipeline.train(cfg, labeled_graph, diffused)
    assert history[-1]["loss_total"] < history[0]["loss_total"]


def test_train_is_seed_deterministic(labeled_graph, diffused):
    cfg = tiny_config()
    p1, h1 = pipeline.train(cfg, labeled_graph, diffused)
    p2, h2 = pipeline.train(cfg, labeled_graph, diffused)
    assert h1 == h2
    for name, t in p1.named_unique().items():
        assert np.array_equal(t.value, p2.tensors[name].value)
    _, h3 = pipeline.train(tiny_config(seed=7), labeled_graph, diffused)
    assert h1 != h3


def test_train_sub_global_never_touches_global_params(labeled_graph, diffused):
    cfg = tiny_config(variant="sub-global")
    init = model.init_params(labeled_graph.num_features, cfg.dim, cfg.p,
                             cfg.seed)
    params, history = pipeline.train(cfg, labeled_graph, diffused)
    for name, t in params.named_unique().items():
        same = np.array_equal(t.value, init.tensors[name].value)
        assert same == name.endswith("_global")
    assert all(row["loss_con"] != 0.0 for row in history)


def test_train_logs_zero_for_disabled_terms(labeled_graph, diffused):
    _, hist_c = pipeline.train(tiny_config(variant="sub-c"),
                               labeled_graph, diffused)
    assert all(row["loss_con"] == 0.0 for row in hist_c)
    assert all(row["loss_res"] > 0.0 for row in hist_c)
    _, hist_r = pipeline.train(tiny_config(variant="sub-r"),
                               labeled_graph, diffused)
    assert all(row["loss_res"] == 0.0 for row in hist_r)


def test_train_aborts_on_overflowing_inputs():
    g = random_graph(n=20, f=4, edge_prob=0.3, seed=1, ensure_connected=True)
    huge = g.with_attributes(g.attributes * 1e200)
    s = diffusion.compute_ppr(huge, alpha=0.15)
    cfg = tiny_config(batch_size=10, epochs=1)
    with np.errstate(over="ignore"), pytest.raises(NumericalError,
                                                   match="epoch 0"):
        pipeline.train(cfg, huge, s)


def test_epoch_log_roundtrip(tmp_path, labeled_graph, diffused):
    cfg = tiny_config(epochs=2)
    _, history = pipeline.train(cfg, labeled_graph, diffused)
    path = tmp_path / "loss.csv"
    pipeline.write_epoch_log(history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,loss_con,loss_res,loss_total"
    assert len(lines) == 3
    cells = lines[1].split(",")
    assert int(cells[0]) == 0
    assert float(cells[3]) == history[0]["loss_total"]


def test_model_checkpoint_roundtrip(tmp_path, labeled_graph, diffused):
    for share in (False, True):
        cfg = tiny_config(epochs=1, share_views=share)
        params, _ = pipeline.train(cfg, labeled_graph, diffused)
        path = tmp_path / f"model-{share}.bin"
        pipeline.save_model(params, path)
        loaded = pipeline.load_model(path)
        assert loaded.share_views == share
        for name, t in params.named_unique().items():
            assert np.array_equal(t.value, loaded.tensors[name].value)


# ------------------------------------------------------------- round scores

def make_scoring_setup(labeled_graph, diffused, seed=0, **kw):
    params = model.init_params(labeled_graph.num_features, 6, 4, seed=seed)
    batch = sampling.make_batch(labeled_graph, diffused, np.arange(8), p=4,
                                restart_prob=0.5, seed=seed, **kw)
    return params, batch

def test_round_scores_bounds(labeled_graph, diffused):
    params, batch = make_scoring_setup(labeled_graph, diffused)
    con = pipeline.score_contrastive_round(params, batch)
    res = pipeline.score_reconstruction_round(params, batch)
    assert con.shape == res.shape == (8,)
    assert np.all(con > -1.0) and np.all(con < 1.0)
    assert np.all(res >= 0.0)


def test_round_scores_match_fast_scorer(labeled_graph, diffused):
    params, batch = make_scoring_setup(labeled_graph, diffused)
    scorer = model.FastScorer(params, labeled_graph.attributes)
    con, res = scorer.score_batch(batch)
    assert np.allclose(pipeline.score_contrastive_round(params, batch), con,
                       atol=1e-12)
    assert np.allclose(pipeline.score_reconstruction_round(params, batch), res,
                       atol=1e-12)


def test_round_scores_fresh_mode_is_slot_order_free(labeled_graph, diffused):
    params, b1 = make_scoring_setup(labeled_graph, diffused,
                                    negative_mode="fresh")
    order = np.array([5, 2, 7, 0, 1, 6, 3, 4])
    b2 = sampling.make_batch(labeled_graph, diffused, np.arange(8)[order],
                             p=4, restart_prob=0.5, seed=0,
                             negative_mode="fresh")
    c1 = pipeline.score_contrastive_round(params, b1)
    c2 = pipeline.score_contrastive_round(params, b2)
    assert np.allclose(c1[order], c2, atol=1e-12)
    r1 = pipeline.score_reconstruction_round(params, b1)
    r2 = pipeline.score_reconstruction_round(params, b2)
    assert np.allclose(r1[order], r2, atol=1e-12)


# -------------------------------------------------------------------- infer

def test_infer_report_contents(labeled_graph, diffused):
    cfg = tiny_config(rounds=3)
    params, _ = pipeline.train(cfg, labeled_graph, diffused)
    report = pipeline.infer(params, cfg, labeled_graph, diffused)
    n = labeled_graph.num_nodes
    assert np.array_equal(report.node_ids, np.arange(n))
    assert report.contrastive.shape == (n,)
    assert np.all(report.reconstruction >= 0.0)
    want = model.combined_score(report.contrastive, report.reconstruction,
                                0.6)
    assert np.allclose(report.combined, want, atol=1e-15)
    assert np.array_equal(report.labels, labeled_graph.labels)
    assert report.config_hash == pipeline.config_hash(cfg)
    assert report.rounds == 3 and report.low_rounds
    assert report.seed == cfg.seed


def test_infer_low_rounds_flag_threshold(labeled_graph, diffused):
    cfg = tiny_config(epochs=1)
    params, _ = pipeline.train(cfg, labeled_graph, diffused)
    r_low = pipeline.infer(params, tiny_config(epochs=1, rounds=29),
                           labeled_graph, diffused)
    r_ok = pipeline.infer(params, tiny_config(epochs=1, rounds=30),
                          labeled_graph, diffused)
    assert r_low.low_rounds and not r_ok.low_rounds


def test_infer_deterministic_and_round_sensitive(labeled_graph, diffused):
    cfg = tiny_config(epochs=1)
    params, _ = pipeline.train(cfg, labeled_graph, diffused)
    a = pipeline.infer(params, cfg, labeled_graph, diffused)
    b = pipeline.infer(params, cfg, labeled_graph, diffused)
    assert np.array_equal(a.combined, b.combined)
    c = pipeline.infer(params, tiny_config(epochs=1, rounds=5),
                       labeled_graph, diffused)
    assert not np.array_equal(a.combined, c.combined)


def test_infer_variant_columns(labeled_graph, diffused):
    cfg_r = tiny_config(variant="sub-r", epochs=1)
    params_r, _ = pipeline.train(cfg_r, labeled_graph, diffused)
    rep_r = pipeline.infer(params_r, cfg_r, labeled_graph, diffused)
    assert np.array_equal(rep_r.reconstruction,
                          np.zeros(labeled_graph.num_nodes))
    assert np.allclose(rep_r.combined,
                       model.minmax_normalize(rep_r.contrastive), atol=1e-15)

    cfg_c = tiny_config(variant="sub-c", epochs=1)
    params_c, _ = pipeline.train(cfg_c, labeled_graph, diffused)
    rep_c = pipeline.infer(params_c, cfg_c, labeled_graph, diffused)
    assert np.array_equal(rep_c.contrastive,
                          np.zeros(labeled_graph.num_nodes))
    assert np.allclose(rep_c.combined,
                       model.minmax_normalize(rep_c.reconstruction),
                       atol=1e-15)


def test_combined_score_ignores_affine_rescaling(labeled_graph, diffused):
    cfg = tiny_config(epochs=1)
    params, _ = pipeline.train(cfg, labeled_graph, diffused)
    rep = pipeline.infer(params, cfg, labeled_graph, diffused)
    rescaled = model.combined_score(rep.contrastive,
                                    3.5 * rep.reconstruction + 11.0, 0.6)
    assert np.allclose(rescaled, rep.combined, atol=1e-12)


def test_fixed_chunks_cover_without_trailing_singleton():
    chunks = pipeline._fixed_chunks(5, 2)
    assert [c.tolist() for c in chunks] == [[0, 1], [2], [3, 4]]
    flat = np.concatenate(chunks)
    assert sorted(flat.tolist()) == list(range(5))
    single = pipeline._fixed_chunks(3, 300)
    assert len(single) == 1 and single[0].tolist() == [0, 1, 2]


# ---------------------------------------------------------------- score io

def test_scores_csv_roundtrip(tmp_path, labeled_graph, diffused):
    cfg = tiny_config(epochs=1)
    params, _ = pipeline.train(cfg, labeled_graph, diffused)
    report = pipeline.infer(params, cfg, labeled_graph, diffused)
    path = tmp_path / "scores.csv"
    pipeline.write_scores(report, path)
    first = path.read_bytes()
    pipeline.write_scores(report, path)
    assert path.read_bytes() == first

    back = pipeline.read_scores(path)
    assert np.array_equal(back.node_ids, report.node_ids)
    assert np.array_equal(back.contrastive, report.contrastive)
    assert np.array_equal(back.reconstruction, report.reconstruction)
    assert np.array_equal(back.combined, report.combined)
    assert np.array_equal(back.labels, report.labels)

    lines = path.read_text().splitlines()
    assert lines[0] == "node_id,contrastive,reconstruction,combined,label"


def test_scores_csv_without_labels(tmp_path):
    report = pipeline.ScoreReport(
        node_ids=np.arange(3), contrastive=np.array([0.5, 0.25, 0.125]),
        reconstruction=np.zeros(3), combined=np.array([1.0, 0.5, 0.25]))
    path = tmp_path / "scores.csv"
    pipeline.write_scores(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "node_id,contrastive,reconstruction,combined"
    back = pipeline.read_scores(path)
    assert back.labels is None
    assert np.array_equal(back.contrastive, report.contrastive)


def test_read_scores_rejects_garbage(tmp_path):
    bad_header = tmp_path / "a.csv"
    bad_header.write_text("node,auc\n")
    with pytest.raises(MalformedInputError):
        pipeline.read_scores(bad_header)
    ragged = tmp_path / "b.csv"
    ragged.write_text("node_id,contrastive,reconstruction,combined\n0,1.0\n")
    with pytest.raises(MalformedInputError, match="b.csv:2"):
        pipeline.read_scores(ragged)
