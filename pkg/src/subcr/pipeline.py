"""Training loop, multi-round scoring, and ablation-variant plumbing.

Training covers every node once per epoch in seeded shuffled batches and
minimizes the combined objective with Adam. Inference walks the nodes in
fixed id order for `rounds` independent sampling rounds, averages the raw
per-node scores, then min-max normalizes and fuses them. Ablation variants
are pure configuration: they flip views and objective terms, never code
paths.
"""

import hashlib
import logging
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy.special import expit

from . import model, nn, rng, sampling
from .errors import ConfigError, MalformedInputError, NumericalError

log = logging.getLogger(__name__)

VARIANTS = ("full", "sub-r", "sub-c", "sub-weight", "sub-global")
LOW_ROUNDS = 30  # below this, score averages are flagged as noisy


@dataclass
class TrainConfig:
    p: int = 4                 # nodes per sampled subgraph, target included
    dim: int = 64
    batch_size: int = 300
    epochs: int = 100
    lr: float = 0.001
    gamma: float = 0.6
    alpha: float = 0.15        # diffusion teleport probability
    restart_prob: float = 0.1
    rounds: int = 300
    seed: int = 0
    variant: str = "full"
    share_views: bool = False
    negative_mode: str = "rotate"
    inter_norm: str = "sum"
    score_norm: str = "minmax"
    dataset: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant {self.variant!r} not in {VARIANTS}")
        if self.p < 1:
            raise ConfigError(f"subgraph size must be >= 1, got {self.p}")
        if self.variant != "sub-r" and self.p < 2:
            raise ConfigError(
                "reconstruction needs subgraph size >= 2; use variant sub-r "
                f"or raise p (got {self.p})")
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if not 0.0 < self.restart_prob <= 1.0:
            raise ConfigError(
                f"restart_prob must be in (0,1], got {self.restart_prob}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.negative_mode not in sampling.NEGATIVE_MODES:
            raise ConfigError(f"negative_mode {self.negative_mode!r} not in "
                              f"{sampling.NEGATIVE_MODES}")
        if self.inter_norm not in ("sum", "mean"):
            raise ConfigError(f"inter_norm must be sum or mean, "
                              f"got {self.inter_norm!r}")
        if self.score_norm not in ("minmax", "zscore"):
            raise ConfigError(f"score_norm must be minmax or zscore, "
                              f"got {self.score_norm!r}")


def config_hash(config):
    """Stable 16-hex-digit digest of every config field."""
    lines = [f"{f.name}={getattr(config, f.name)!r}"
             for f in sorted(fields(config), key=lambda f: f.name)]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]


@dataclass
class VariantSettings:
    views: tuple
    use_contrast: bool
    use_recon: bool
    loss_gamma: float
    score_gamma: float


def variant_settings(config):
    v = config.variant
    views = ("local",) if v == "sub-global" else model.VIEWS
    gamma = 1.0 if v == "sub-weight" else config.gamma
    return VariantSettings(
        views=views,
        use_contrast=(v != "sub-c"),
        use_recon=(v != "sub-r"),
        loss_gamma=gamma,
        score_gamma=gamma,
    )


# ------------------------------------------------------------------- train

def train(config, g, s, progress=None):
    """Fit the model; returns (params, per-epoch loss history).

    history rows are dicts with epoch, loss_con, loss_res, loss_total;
    terms disabled by the variant are logged as 0.0.
    """
    settings = variant_settings(config)
    n = g.num_nodes
    params = model.init_params(g.num_features, config.dim, config.p,
                               config.seed, share_views=config.share_views)
    opt = nn.Adam(params.trainable(), lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        sums = {"loss_con": 0.0, "loss_res": 0.0, "loss_total": 0.0}
        for chunk in sampling.epoch_batches(n, config.batch_size,
                                            config.seed, epoch):
            batch = sampling.make_batch(
                g, s, chunk, config.p, config.restart_prob, config.seed,
                round_index=epoch, purpose=rng.TRAIN_SAMPLE,
                negative_mode=config.negative_mode)
            try:
                loss, pieces = model.training_losses(
                    params, batch, views=settings.views,
                    use_contrast=settings.use_contrast,
                    use_recon=settings.use_recon,
                    gamma=settings.loss_gamma,
                    inter_norm=config.inter_norm)
                nn.zero_grads(params.trainable())
                nn.backward(loss)
            except NumericalError as exc:
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch targets "
                    f"{chunk[0]}..{chunk[-1]} (sampling seed {config.seed}, "
                    f"round {epoch}): {exc}") from exc
            opt.step()
            w = len(chunk)
            for key in sums:
                sums[key] += pieces.get(key, 0.0) * w
        row = {"epoch": epoch}
        row.update((k, v / n) for k, v in sums.items())
        history.append(row)
        if progress is not None:
            progress(row)
        log.debug("epoch %d loss %.6f", epoch, row["loss_total"])
    return params, history


def write_epoch_log(history, path):
    with open(path, "w", newline="") as fh:
        fh.write("epoch,loss_con,loss_res,loss_total\n")
        for row in history:
            fh.write(f"{row['epoch']},{float(row['loss_con'])!r},"
                     f"{float(row['loss_res'])!r},"
                     f"{float(row['loss_total'])!r}\n")


def save_model(params, path):
    nn.save_params(params.named_unique(), path)


def load_model(path):
    return model.ModelParams.from_arrays(nn.load_params(path))


# ------------------------------------------------------------- round scores

def _batch_view_scores(params, batch, view, want_contrast, want_recon):
    w = params.get("gcn", view).value
    adj = batch.local_adj if view == "local" else batch.global_adj
    h_sub = np.maximum(adj @ (batch.masked_attrs @ w), 0.0)
    con = res = None
    if want_contrast:
        w_s = params.get("disc", view).value
        e_pos = h_sub.mean(axis=1)
        hw = np.maximum(batch.target_attrs @ w, 0.0) @ w_s
        if batch.negative_mode == "rotate":
            e_neg = np.roll(e_pos, -1, axis=0)
        else:
            neg_ids, neg_local, neg_global, neg_masked = batch.negative_arrays()
            neg_adj = neg_local if view == "local" else neg_global
            e_neg = np.maximum(neg_adj @ (neg_masked @ w), 0.0).mean(axis=1)
        con = expit((hw * e_neg).sum(axis=1)) - expit((hw * e_pos).sum(axis=1))
    if want_recon:
        b, p, d = h_sub.shape
        z = h_sub[:, 1:, :].reshape(b, (p - 1) * d)
        recon = np.maximum(z @ params.get("dec_hidden", view).value,
                           0.0) @ params.get("dec_out", view).value
        res = ((recon - batch.target_attrs) ** 2).sum(axis=1)
    return con, res


def score_contrastive_round(params, batch, views=model.VIEWS):
    """Per-node (negative - positive) discriminator gap, views averaged."""
    per_view = [_batch_view_scores(params, batch, v, True, False)[0]
                for v in views]
    return np.mean(per_view, axis=0)


def score_reconstruction_round(params, batch, views=model.VIEWS):
    """Per-node squared attribute reconstruction error, views averaged."""
    per_view = [_batch_view_scores(params, batch, v, False, True)[1]
                for v in views]
    return np.mean(per_view, axis=0)


# -------------------------------------------------------------------- infer

@dataclass
class ScoreReport:
    node_ids: np.ndarray
    contrastive: np.ndarray
    reconstruction: np.ndarray
    combined: np.ndarray
    labels: Optional[np.ndarray] = None
    config_hash: str = ""
    seed: int = 0
    rounds: int = 0
    low_rounds: bool = False


def _fixed_chunks(n, batch_size):
    ids = np.arange(n, dtype=np.int64)
    chunks = [ids[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-1] = np.concatenate([chunks[-2][-1:], chunks[-1]])
        chunks[-2] = chunks[-2][:-1]
    return chunks


def infer(params, config, g, s, progress=None):
    """Average raw scores over `rounds` sampling rounds, then fuse."""
    settings = variant_settings(config)
    n = g.num_nodes
    scorer = model.FastScorer(params, g.attributes, views=settings.views,
                              use_contrast=settings.use_contrast,
                              use_recon=settings.use_recon)
    con_sum = np.zeros(n)
    res_sum = np.zeros(n)
    chunks = _fixed_chunks(n, config.batch_size)
    for r in range(config.rounds):
        for chunk in chunks:
            batch = sampling.make_batch(
                g, s, chunk, config.p, config.restart_prob, config.seed,
                round_index=r, purpose=rng.INFER_SAMPLE,
                negative_mode=config.negative_mode)
            con, res = scorer.score_batch(batch)
            if con is not None:
                con_sum[chunk] += con
            if res is not None:
                res_sum[chunk] += res
        if progress is not None:
            progress(r)
    con_avg = con_sum / config.rounds
    res_avg = res_sum / config.rounds
    if not np.isfinite(con_avg).all() or not np.isfinite(res_avg).all():
        raise NumericalError("non-finite averaged scores")
    if settings.use_contrast and settings.use_recon:
        combined = model.combined_score(con_avg, res_avg,
                                        settings.score_gamma,
                                        method=config.score_norm)
    elif settings.use_contrast:
        combined = model.normalize_scores(con_avg, config.score_norm)
    else:
        combined = model.normalize_scores(res_avg, config.score_norm)
    return ScoreReport(
        node_ids=np.arange(n, dtype=np.int64),
        contrastive=con_avg, reconstruction=res_avg, combined=combined,
        labels=g.labels.copy() if g.labels is not None else None,
        config_hash=config_hash(config), seed=config.seed,
        rounds=config.rounds, low_rounds=config.rounds < LOW_ROUNDS)


# ---------------------------------------------------------------- score io

def write_scores(report, path):
    """CSV with one row per node; label column only when labels exist."""
    with_labels = report.labels is not None
    header = "node_id,contrastive,reconstruction,combined"
    with open(path, "w", newline="") as fh:
        fh.write(header + (",label\n" if with_labels else "\n"))
        for i in range(len(report.node_ids)):
            row = (f"{report.node_ids[i]},{float(report.contrastive[i])!r},"
                   f"{float(report.reconstruction[i])!r},"
                   f"{float(report.combined[i])!r}")
            if with_labels:
                row += f",{int(report.labels[i])}"
            fh.write(row + "\n")


def read_scores(path):
    """Rebuild a ScoreReport (data columns only) from a scores CSV."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        want = ["node_id", "contrastive", "reconstruction", "combined"]
        if header[:4] != want or header[4:] not in ([], ["label"]):
            raise MalformedInputError(f"{path}: unexpected header {header}")
        with_labels = header[4:] == ["label"]
        ids, con, res, comb, labels = [], [], [], [], []
        for ln, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != len(header):
                raise MalformedInputError(
                    f"{path}:{ln}: expected {len(header)} fields, "
                    f"got {len(parts)}")
            ids.append(int(parts[0]))
            con.append(float(parts[1]))
            res.append(float(parts[2]))
            comb.append(float(parts[3]))
            if with_labels:
                labels.append(int(parts[4]))
    return ScoreReport(
        node_ids=np.array(ids, dtype=np.int64),
        contrastive=np.array(con), reconstruction=np.array(res),
        combined=np.array(comb),
        labels=np.array(labels, dtype=np.int64) if with_labels else None)
