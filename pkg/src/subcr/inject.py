"""Synthetic anomaly injection: planted cliques and attribute swaps.

Structural anomalies: n disjoint groups of m unlabeled nodes, each made
fully connected (original edges kept). Attribute anomalies: for each chosen
node, sample k candidates and copy the attribute row of the candidate
farthest away in Euclidean distance. The two node sets stay disjoint, all
selections drawn from dedicated keyed streams so a (seed, plan) pair is
byte-reproducible.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import CapacityError, MalformedInputError
from .graph import AttributedGraph, build_graph


@dataclass(frozen=True)
class InjectionPlan:
    clique_size: int = 15
    num_cliques: int = 0
    num_attribute_anomalies: int = 0
    candidate_pool: int = 50
    seed: int = 0

    def total(self):
        return self.clique_size * self.num_cliques + self.num_attribute_anomalies


@dataclass
class InjectionResult:
    graph: AttributedGraph
    structural_nodes: np.ndarray
    attribute_nodes: np.ndarray
    # per attribute-anomaly node: candidate ids, chosen source id, distances
    candidate_sets: dict = field(default_factory=dict)
    swap_sources: dict = field(default_factory=dict)


def plan_for_total(total, clique_size=15, candidate_pool=50, seed=0):
    """Split a target anomaly count evenly between the two injection types."""
    if total % 2 != 0 or (total // 2) % clique_size != 0:
        raise MalformedInputError(
            f"total {total} cannot split into half attribute swaps and half "
            f"cliques of {clique_size}")
    half = total // 2
    return InjectionPlan(clique_size=clique_size, num_cliques=half // clique_size,
                         num_attribute_anomalies=half,
                         candidate_pool=candidate_pool, seed=seed)


def _unlabeled_pool(g):
    if g.labels is None:
        return np.arange(g.num_nodes)
    return np.nonzero(g.labels == 0)[0]


def _with_new_labels(labels_before, new_nodes, n):
    labels = (np.zeros(n, dtype=np.int64) if labels_before is None
              else labels_before.copy())
    labels[new_nodes] = 1
    return labels


def inject_structural(g, m, n, gen):
    """Plant n disjoint m-cliques among unlabeled nodes; label their members."""
    pool = _unlabeled_pool(g)
    if m * n > len(pool):
        raise CapacityError(
            f"need {m * n} unlabeled nodes for {n} cliques of {m}, "
            f"have {len(pool)}")
    chosen = gen.choice(pool, size=m * n, replace=False)
    extra = []
    for c in range(n):
        members = chosen[c * m:(c + 1) * m]
        for a in range(m):
            for b in range(a + 1, m):
                extra.append((members[a], members[b]))
    pairs = np.concatenate([g.edge_pairs(),
                            np.asarray(extra, dtype=np.int64).reshape(-1, 2)])
    labels = _with_new_labels(g.labels, chosen, g.num_nodes)
    return build_graph(pairs, g.attributes, labels), np.sort(chosen)


def inject_attribute(g, count, k, gen):
    """Swap `count` unlabeled nodes' attributes with their farthest of k candidates."""
    if k < 1:
        raise MalformedInputError("candidate pool k must be >= 1")
    pool = _unlabeled_pool(g)
    if count > len(pool):
        raise CapacityError(
            f"need {count} unlabeled nodes for attribute swaps, have {len(pool)}")
    if count == 0:
        return g, np.empty(0, dtype=np.int64), {}, {}
    targets = gen.choice(pool, size=count, replace=False)
    attrs = g.attributes.copy()
    candidate_sets, swap_sources = {}, {}
    for v in targets:
        candidates = gen.choice(g.num_nodes, size=k, replace=False)
        dists = np.linalg.norm(g.attributes[candidates] - g.attributes[v], axis=1)
        best = candidates[int(np.argmax(dists))]
        attrs[v] = g.attributes[best]
        candidate_sets[int(v)] = (candidates.copy(), dists.copy())
        swap_sources[int(v)] = int(best)
    labels = _with_new_labels(g.labels, targets, g.num_nodes)
    out = AttributedGraph(g.adjacency, attrs, labels)
    return out, np.sort(targets), candidate_sets, swap_sources


def inject(g, plan):
    """Run the full plan: cliques first, then attribute swaps on the remainder."""
    g1, structural = inject_structural(
        g, plan.clique_size, plan.num_cliques,
        rng.stream(plan.seed, rng.INJECT_STRUCT))
    g2, attribute, cand, src = inject_attribute(
        g1, plan.num_attribute_anomalies, plan.candidate_pool,
        rng.stream(plan.seed, rng.INJECT_ATTR))
    return InjectionResult(graph=g2, structural_nodes=structural,
                           attribute_nodes=attribute, candidate_sets=cand,
                           swap_sources=src)


def write_manifest(plan, result, path):
    payload = {
        "clique_size": plan.clique_size,
        "num_cliques": plan.num_cliques,
        "num_attribute_anomalies": plan.num_attribute_anomalies,
        "candidate_pool": plan.candidate_pool,
        "seed": plan.seed,
        "total_anomalies": plan.total(),
        "structural_nodes": result.structural_nodes.tolist(),
        "attribute_nodes": result.attribute_nodes.tolist(),
        "swap_sources": {str(k): v for k, v in sorted(result.swap_sources.items())},
        "rng_streams": [rng.stream_id(plan.seed, rng.INJECT_STRUCT),
                        rng.stream_id(plan.seed, rng.INJECT_ATTR)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
