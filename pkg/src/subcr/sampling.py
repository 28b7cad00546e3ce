"""Paired local/global subgraph sampling around target nodes.

Each target gets a P-node list harvested by a random walk with restart on
the binary graph (target always first; shortfall padded with the target
id). The local view normalizes the induced binary adjacency with
self-loops; the global view reuses the identical node list with induced
diffusion weights. Negatives rotate the batch's positive subgraphs by one
slot, or are freshly sampled around a random other node when configured.

Every walk consumes only its own counter-based stream keyed by
(seed, purpose, round, target), so batches are byte-reproducible and
independent of batch composition or evaluation order.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .errors import ConfigError

_CHUNK = 64  # uniforms are pre-drawn per walker in chunks of this many steps

NEGATIVE_MODES = ("rotate", "fresh")


@dataclass(frozen=True)
class SubgraphView:
    node_ids: np.ndarray     # (P,), node_ids[0] is the target
    adjacency: np.ndarray    # (P,P) normalized binary (local) or S block (global)
    attributes: np.ndarray   # (P,F), row 0 zero-masked


@dataclass(frozen=True)
class ViewPairBatch:
    targets: np.ndarray          # (B,)
    node_ids: np.ndarray         # (B,P)
    local_adj: np.ndarray        # (B,P,P)
    global_adj: np.ndarray       # (B,P,P)
    masked_attrs: np.ndarray     # (B,P,F)
    target_attrs: np.ndarray     # (B,F) unmasked rows
    rng_stream: str
    negative_mode: str = "rotate"
    # fresh-mode negatives; None under rotation (negatives are the
    # positive arrays advanced by one slot)
    neg_node_ids: Optional[np.ndarray] = None
    neg_local_adj: Optional[np.ndarray] = None
    neg_global_adj: Optional[np.ndarray] = None
    neg_masked_attrs: Optional[np.ndarray] = None

    @property
    def size(self):
        return len(self.targets)

    def view(self, which, b):
        adj = self.local_adj if which == "local" else self.global_adj
        return SubgraphView(self.node_ids[b], adj[b], self.masked_attrs[b])

    def negative_arrays(self):
        """(node_ids, local_adj, global_adj, masked_attrs) for the negatives."""
        if self.negative_mode == "fresh":
            return (self.neg_node_ids, self.neg_local_adj,
                    self.neg_global_adj, self.neg_masked_attrs)
        order = np.roll(np.arange(self.size), -1)
        return (self.node_ids[order], self.local_adj[order],
                self.global_adj[order], self.masked_attrs[order])


def step_budget(g, p):
    """Default walk budget: 10 * P * max(1, average degree)."""
    avg = g.degrees.mean() if g.num_nodes else 0.0
    return int(10 * p * max(1.0, avg))


def rwr_sample(g, target, p, restart_prob, gen, budget=None):
    """P node ids, target first, padded with the target on shortfall.

    Two uniforms are consumed per step (restart test, neighbor pick) even
    when the second goes unused, keeping the draw count trajectory-aligned.
    """
    if p < 1:
        raise ConfigError(f"subgraph size must be >= 1, got {p}")
    if not 0.0 < restart_prob <= 1.0:
        raise ConfigError(f"restart_prob must be in (0,1], got {restart_prob}")
    if budget is None:
        budget = step_budget(g, p)
    out = np.full(p, target, dtype=np.int64)
    found = 1
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    current = target
    draws = gen.random(2 * _CHUNK)
    cursor = 0
    for _ in range(budget):
        if found == p:
            break
        if cursor >= len(draws):
            draws = gen.random(2 * _CHUNK)
            cursor = 0
        restart_draw, move_draw = draws[cursor], draws[cursor + 1]
        cursor += 2
        if restart_draw < restart_prob:
            current = target
            continue
        lo, hi = indptr[current], indptr[current + 1]
        if hi == lo:
            continue
        current = indices[lo + int(move_draw * (hi - lo))]
        if current not in out[:found]:
            out[found] = current
            found += 1
    return out


def _rwr_sample_many(g, targets, p, restart_prob, seed, purpose, round_index,
                     budget):
    """Vectorized walks; per-walker draws come from per-target streams."""
    b = len(targets)
    ids = np.full((b, p), -1, dtype=np.int64)
    ids[:, 0] = targets
    found = np.ones(b, dtype=np.int64)
    current = np.asarray(targets, dtype=np.int64).copy()
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    gens = [rng.stream(seed, purpose, round_index=round_index, unit=int(t))
            for t in targets]
    draws = np.stack([gen.random(2 * _CHUNK) for gen in gens])
    cursor = np.zeros(b, dtype=np.int64)
    active = np.ones(b, dtype=bool)
    for _ in range(budget):
        active &= found < p
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        refill = idx[cursor[idx] >= draws.shape[1]]
        for w in refill:
            draws[w] = gens[w].random(2 * _CHUNK)
            cursor[w] = 0
        r_restart = draws[idx, cursor[idx]]
        r_move = draws[idx, cursor[idx] + 1]
        cursor[idx] += 2
        restart = r_restart < restart_prob
        current[idx[restart]] = np.asarray(targets)[idx[restart]]
        walk = idx[~restart]
        lo = indptr[current[walk]]
        deg = indptr[current[walk] + 1] - lo
        movable = deg > 0
        moved = walk[movable]
        current[moved] = indices[lo[movable]
                                 + (r_move[~restart][movable]
                                    * deg[movable]).astype(np.int64)]
        fresh = moved[(ids[moved] != current[moved, None]).all(axis=1)]
        ids[fresh, found[fresh]] = current[fresh]
        found[fresh] += 1
    shortfall = ids < 0
    if shortfall.any():
        ids[shortfall] = np.broadcast_to(
            np.asarray(targets)[:, None], ids.shape)[shortfall]
    return ids


def _gather_blocks(matrix, ids):
    """blocks[b,i,j] = matrix[ids[b,i], ids[b,j]] for dense or sparse input."""
    b, p = ids.shape
    if isinstance(matrix, np.ndarray):
        return matrix[ids[:, :, None], ids[:, None, :]]
    rows = np.repeat(ids, p, axis=1).ravel()
    cols = np.tile(ids, (1, p)).ravel()
    vals = np.asarray(matrix[rows, cols]).ravel()
    return vals.reshape(b, p, p)


def _normalize_blocks(blocks):
    """Per-slot D^{-1/2}(A+I)D^{-1/2}; every degree >= 1 once loops are added."""
    p = blocks.shape[1]
    with_loops = blocks + np.eye(p)
    deg = with_loops.sum(axis=2)
    dinv = 1.0 / np.sqrt(deg)
    return with_loops * dinv[:, :, None] * dinv[:, None, :]


def build_view_pair(g, s, node_ids):
    """One target's (local, global) SubgraphView pair over a shared node list."""
    ids = np.asarray(node_ids, dtype=np.int64).reshape(1, -1)
    local = _normalize_blocks(_gather_blocks(g.adjacency, ids))[0]
    global_ = _gather_blocks(s.matrix, ids)[0]
    attrs = g.attributes[ids[0]].copy()
    attrs[0, :] = 0.0
    return (SubgraphView(ids[0], local, attrs),
            SubgraphView(ids[0], global_, attrs))


def make_batch(g, s, targets, p, restart_prob, seed, round_index=0,
               purpose=None, negative_mode="rotate", budget=None):
    """Sample one ViewPairBatch for the given targets."""
    targets = np.asarray(targets, dtype=np.int64)
    if len(targets) < 2:
        raise ConfigError("a batch needs at least 2 targets for negatives")
    if negative_mode not in NEGATIVE_MODES:
        raise ConfigError(f"negative_mode {negative_mode!r} not in "
                          f"{NEGATIVE_MODES}")
    if purpose is None:
        purpose = rng.TRAIN_SAMPLE
    if budget is None:
        budget = step_budget(g, p)
    ids = _rwr_sample_many(g, targets, p, restart_prob, seed, purpose,
                           round_index, budget)
    local, global_, masked = _blocks_for(g, s, ids)
    neg = {}
    if negative_mode == "fresh":
        neg_purpose = (rng.NEG_INFER if purpose == rng.INFER_SAMPLE
                       else rng.NEG_TRAIN)
        neg_targets = np.empty(len(targets), dtype=np.int64)
        for i, t in enumerate(targets):
            gen = rng.stream(seed, rng.NEG_PICK, round_index=round_index,
                             unit=int(t))
            pick = int(gen.integers(0, g.num_nodes - 1))
            neg_targets[i] = pick + (pick >= t)  # uniform over nodes != t
        neg_ids = _rwr_sample_many(g, neg_targets, p, restart_prob, seed,
                                   neg_purpose, round_index, budget)
        neg_local, neg_global, neg_masked = _blocks_for(g, s, neg_ids)
        neg = dict(neg_node_ids=neg_ids, neg_local_adj=neg_local,
                   neg_global_adj=neg_global, neg_masked_attrs=neg_masked)
    return ViewPairBatch(
        targets=targets, node_ids=ids, local_adj=local, global_adj=global_,
        masked_attrs=masked, target_attrs=g.attributes[targets].copy(),
        rng_stream=rng.stream_id(seed, purpose, round_index=round_index),
        negative_mode=negative_mode, **neg)


def _blocks_for(g, s, ids):
    local = _normalize_blocks(_gather_blocks(g.adjacency, ids))
    global_ = _gather_blocks(s.matrix, ids)
    masked = g.attributes[ids].copy()
    masked[:, 0, :] = 0.0
    return local, global_, masked


def epoch_batches(num_nodes, batch_size, seed, epoch):
    """Seeded permutation of all nodes, chunked; a trailing single-node
    chunk borrows one node from the previous chunk so every batch has >= 2."""
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {batch_size}")
    order = rng.stream(seed, rng.SHUFFLE, round_index=epoch).permutation(
        num_nodes)
    chunks = [order[i:i + batch_size] for i in range(0, num_nodes, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-1] = np.concatenate([chunks[-2][-1:], chunks[-1]])
        chunks[-2] = chunks[-2][:-1]
    return chunks
