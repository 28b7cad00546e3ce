"""The two-view contrastive network and its losses and scores.

Per view: a one-layer GCN over each P-node subgraph (target row masked),
a target-feature map through the same weight matrix, average-pool readout,
a bilinear discriminator against the readout, and an MLP decoder that
rebuilds the target's raw attributes from the concatenated non-target
rows. Loss = intra-view discrimination + inter-view score consistency
+ gamma * masked-attribute reconstruction.

Two execution routes exist on purpose: the tape-backed batched route used
for training (`training_losses`, `view_forward`), and `FastScorer`, a
plain-numpy inference route that precomputes X @ W once since parameters
are frozen. Tests pin both routes together.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from . import nn, rng
from .errors import ConfigError, DimensionError

VIEWS = ("local", "global")
_KINDS = ("gcn", "disc", "dec_hidden", "dec_out")


class ModelParams:
    """Named parameter tensors; views may share one underlying set."""

    def __init__(self, tensors, share_views=False):
        self.share_views = share_views
        self.tensors = tensors

    def get(self, kind, view):
        if kind not in _KINDS or view not in VIEWS:
            raise ConfigError(f"unknown parameter {kind}_{view}")
        if self.share_views:
            view = "local"
        return self.tensors[f"{kind}_{view}"]

    def named_unique(self):
        """Canonical name -> Tensor, one entry per distinct tensor."""
        return dict(self.tensors)

    def trainable(self):
        return list(self.tensors.values())

    @property
    def num_features(self):
        return self.get("gcn", "local").value.shape[0]

    @property
    def dim(self):
        return self.get("gcn", "local").value.shape[1]

    @property
    def subgraph_size(self):
        return self.get("dec_hidden", "local").value.shape[0] // self.dim + 1

    def as_arrays(self):
        return {name: t.value.copy() for name, t in self.tensors.items()}

    @classmethod
    def from_arrays(cls, arrays):
        share = "gcn_global" not in arrays
        views = ("local",) if share else VIEWS
        expected = {f"{kind}_{view}" for kind in _KINDS for view in views}
        if set(arrays) != expected:
            raise DimensionError(
                f"checkpoint names {sorted(arrays)} do not match expected "
                f"{sorted(expected)}")
        tensors = {name: nn.parameter(arr) for name, arr in arrays.items()}
        return cls(tensors, share_views=share)


def init_params(num_features, dim, p, seed, share_views=False):
    """Uniform +-1/sqrt(fan_in) init, drawn in a fixed canonical order."""
    if p < 2:
        raise ConfigError(f"subgraph size must be >= 2 for the decoder, got {p}")
    gen = rng.stream(seed, rng.INIT)
    shapes = {
        "gcn": ((num_features, dim), num_features),
        "disc": ((dim, dim), dim),
        "dec_hidden": (((p - 1) * dim, dim), (p - 1) * dim),
        "dec_out": ((dim, num_features), dim),
    }
    tensors = {}
    for view in ("local",) if share_views else VIEWS:
        for kind in _KINDS:
            shape, fan_in = shapes[kind]
            tensors[f"{kind}_{view}"] = nn.init_uniform(shape, fan_in, gen)
    return ModelParams(tensors, share_views=share_views)


# ---------------------------------------------------------------- pure ops
# Single-subgraph reference forms, plain numpy in and out.

def encode_subgraph(view, weight):
    """One GCN layer: relu(A_norm @ X_masked @ W)."""
    return np.maximum(view.adjacency @ (view.attributes @ weight), 0.0)


def map_target(x, weight):
    """Target features through the shared GCN weight: relu(x W)."""
    return np.maximum(x @ weight, 0.0)


def readout(h):
    """Average pooling over all subgraph rows, masked target included."""
    return h.mean(axis=0)


def discriminate(h, e, w_s):
    """sigmoid(h W_s e^T), strictly inside (0,1)."""
    return float(expit(h @ w_s @ e))


def decode_attributes(h, dec_hidden, dec_out):
    """MLP on the concatenation of non-target rows (rows 1..P-1)."""
    if h.shape[0] < 2:
        raise ConfigError("decoding needs at least one non-target row (P >= 2)")
    z = h[1:].reshape(-1)
    return np.maximum(z @ dec_hidden, 0.0) @ dec_out


# ------------------------------------------------------------- pure losses

def intra_view_loss(pos_scores, neg_scores):
    """-1/2 (log s + log(1-s~)) averaged over the batch, one view."""
    p = np.clip(np.asarray(pos_scores, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    q = np.clip(np.asarray(neg_scores, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    return float(np.mean(-0.5 * (np.log(p) + np.log1p(-q))))


def inter_view_loss(s1, s2, normalize="sum"):
    """Squared distance between the views' positive-score vectors."""
    s1, s2 = np.asarray(s1, dtype=np.float64), np.asarray(s2, dtype=np.float64)
    if s1.shape != s2.shape:
        raise DimensionError(f"score vectors {s1.shape} vs {s2.shape}")
    sq = (s1 - s2) ** 2
    return float(sq.mean() if normalize == "mean" else sq.sum())


def recon_loss(reconstructions, targets):
    """Mean over nodes and over the views present of ||g(Z)-x||^2."""
    per_view = [np.mean(((r - targets) ** 2).sum(axis=1))
                for r in reconstructions]
    return float(np.mean(per_view))


def total_loss(l_con, l_res, gamma):
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    return l_con + gamma * l_res


# -------------------------------------------------------------- raw scores

def contrastive_scores(pos_by_view, neg_by_view):
    """Per-node mean over views of (negative score - positive score)."""
    per_view = [np.asarray(n) - np.asarray(p)
                for p, n in zip(pos_by_view, neg_by_view)]
    return np.mean(per_view, axis=0)


def reconstruction_scores(reconstructions, targets):
    """Per-node mean over views of ||g(Z)-x||^2."""
    per_view = [((r - targets) ** 2).sum(axis=1) for r in reconstructions]
    return np.mean(per_view, axis=0)


def minmax_normalize(v):
    v = np.asarray(v, dtype=np.float64)
    span = v.max() - v.min()
    if span == 0:
        return np.zeros_like(v)
    return (v - v.min()) / span


def zscore_normalize(v):
    v = np.asarray(v, dtype=np.float64)
    std = v.std()
    if std == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / std


_NORMALIZERS = {"minmax": minmax_normalize, "zscore": zscore_normalize}


def normalize_scores(v, method="minmax"):
    if method not in _NORMALIZERS:
        raise ConfigError(f"unknown normalization {method!r}")
    return _NORMALIZERS[method](v)


def combined_score(con, res, gamma, method="minmax"):
    """Normalize each averaged score vector, then fuse with gamma."""
    return (normalize_scores(con, method)
            + gamma * normalize_scores(res, method))


# ------------------------------------------------------------- engine route

def _encode_batch(adj_blocks, masked_attrs, weight):
    b, p, f = masked_attrs.shape
    d = weight.value.shape[1]
    flat = nn.constant(masked_attrs.reshape(b * p, f))
    xw = nn.reshape(nn.matmul(flat, weight), (b, p, d))
    return nn.relu(nn.bmm(nn.constant(adj_blocks), xw))


def _row_dots(a, b):
    return nn.sum_axis(nn.mul(a, b), axis=1)


def view_forward(params, batch, view, use_recon=True):
    """Tape route for one view: logits, probabilities, reconstruction."""
    weight = params.get("gcn", view)
    w_s = params.get("disc", view)
    adj = batch.local_adj if view == "local" else batch.global_adj
    h_sub = _encode_batch(adj, batch.masked_attrs, weight)
    e_pos = nn.mean_axis(h_sub, axis=1)
    h_target = nn.relu(nn.matmul(nn.constant(batch.target_attrs), weight))
    hw = nn.matmul(h_target, w_s)
    z_pos = _row_dots(hw, e_pos)
    if batch.negative_mode == "rotate":
        e_neg = nn.roll_rows(e_pos, -1)
    else:
        neg_ids, neg_local, neg_global, neg_masked = batch.negative_arrays()
        neg_adj = neg_local if view == "local" else neg_global
        e_neg = nn.mean_axis(_encode_batch(neg_adj, neg_masked, weight), axis=1)
    z_neg = _row_dots(hw, e_neg)
    out = {"z_pos": z_pos, "z_neg": z_neg, "h_sub": h_sub}
    if use_recon:
        b, p, d = h_sub.value.shape
        if p < 2:
            raise ConfigError("reconstruction needs subgraph size >= 2")
        z_cat = nn.reshape(nn.slice_mid_rows(h_sub, 1), (b, (p - 1) * d))
        hidden = nn.relu(nn.matmul(z_cat, params.get("dec_hidden", view)))
        out["recon"] = nn.matmul(hidden, params.get("dec_out", view))
    return out


def training_losses(params, batch, views=VIEWS, use_contrast=True,
                    use_recon=True, gamma=0.6, inter_norm="sum"):
    """Assemble the training objective on the tape.

    Returns the scalar loss tensor plus float logging values. Views absent
    from `views` are dropped from every term; with a single view the
    inter-view term vanishes.
    """
    if not use_contrast and not use_recon:
        raise ConfigError("at least one objective must be enabled")
    forwards = {v: view_forward(params, batch, v, use_recon=use_recon)
                for v in views}
    pieces = {}
    loss = None
    if use_contrast:
        intra_terms = []
        for v in views:
            f = forwards[v]
            per_node = nn.add(nn.softplus(nn.scale(f["z_pos"], -1.0)),
                              nn.softplus(f["z_neg"]))
            intra_terms.append(nn.scale(nn.mean_axis(per_node), 0.5))
        l_intra = intra_terms[0]
        if len(intra_terms) == 2:
            l_intra = nn.scale(nn.add(intra_terms[0], intra_terms[1]), 0.5)
        l_con = l_intra
        if len(views) == 2:
            s1 = nn.sigmoid(forwards[views[0]]["z_pos"])
            s2 = nn.sigmoid(forwards[views[1]]["z_pos"])
            sq = nn.squared_error(s1, s2)
            l_inter = (nn.mean_axis(sq) if inter_norm == "mean"
                       else nn.sum_axis(sq))
            l_con = nn.add(l_intra, l_inter)
            pieces["loss_inter"] = float(l_inter.value)
        pieces["loss_intra"] = float(l_intra.value)
        pieces["loss_con"] = float(l_con.value)
        loss = l_con
    if use_recon:
        res_terms = []
        for v in views:
            err = nn.squared_error(forwards[v]["recon"],
                                   nn.constant(batch.target_attrs))
            res_terms.append(nn.mean_axis(nn.sum_axis(err, axis=1)))
        l_res = res_terms[0]
        if len(res_terms) == 2:
            l_res = nn.scale(nn.add(res_terms[0], res_terms[1]), 0.5)
        pieces["loss_res"] = float(l_res.value)
        if loss is None:
            loss = l_res
        else:
            loss = nn.add(loss, nn.scale(l_res, gamma))
    pieces["loss_total"] = float(loss.value)
    return loss, pieces


# ----------------------------------------------------------- frozen route

@dataclass
class _ViewCache:
    xw: np.ndarray        # X @ W, so masked rows become zero rows
    h_target: np.ndarray  # relu(X @ W)
    w_s: np.ndarray
    dec_hidden: Optional[np.ndarray]
    dec_out: Optional[np.ndarray]


class FastScorer:
    """Inference route with parameters frozen: X @ W precomputed per view."""

    def __init__(self, params, attributes, views=VIEWS, use_contrast=True,
                 use_recon=True):
        if not use_contrast and not use_recon:
            raise ConfigError("at least one score must be enabled")
        self.views = tuple(views)
        self.use_contrast = use_contrast
        self.use_recon = use_recon
        self._cache = {}
        for v in self.views:
            w = params.get("gcn", v).value
            xw = attributes @ w
            self._cache[v] = _ViewCache(
                xw=xw, h_target=np.maximum(xw, 0.0),
                w_s=params.get("disc", v).value,
                dec_hidden=params.get("dec_hidden", v).value if use_recon else None,
                dec_out=params.get("dec_out", v).value if use_recon else None)

    def _embed(self, cache, adj_blocks, node_ids):
        rows = cache.xw[node_ids]
        rows[:, 0, :] = 0.0  # masked target row maps to zero
        return np.maximum(adj_blocks @ rows, 0.0)

    def score_batch(self, batch):
        """Raw per-node (contrastive, reconstruction) scores for one round."""
        b = batch.size
        con = np.zeros(b) if self.use_contrast else None
        res = np.zeros(b) if self.use_recon else None
        if batch.negative_mode == "fresh" and self.use_contrast:
            neg_ids, neg_local, neg_global, _ = batch.negative_arrays()
        for v in self.views:
            cache = self._cache[v]
            adj = batch.local_adj if v == "local" else batch.global_adj
            h_sub = self._embed(cache, adj, batch.node_ids)
            if self.use_contrast:
                e_pos = h_sub.mean(axis=1)
                h_t = cache.h_target[batch.targets]
                hw = h_t @ cache.w_s
                s_pos = expit((hw * e_pos).sum(axis=1))
                if batch.negative_mode == "rotate":
                    e_neg = np.roll(e_pos, -1, axis=0)
                else:
                    neg_adj = neg_local if v == "local" else neg_global
                    e_neg = self._embed(cache, neg_adj, neg_ids).mean(axis=1)
                s_neg = expit((hw * e_neg).sum(axis=1))
                con += s_neg - s_pos
            if self.use_recon:
                z = h_sub[:, 1:, :].reshape(b, -1)
                recon = np.maximum(z @ cache.dec_hidden, 0.0) @ cache.dec_out
                res += ((recon - batch.target_attrs) ** 2).sum(axis=1)
        k = len(self.views)
        return (con / k if con is not None else None,
                res / k if res is not None else None)
