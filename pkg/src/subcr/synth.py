"""Synthetic attributed graphs with community structure.

Used by the test suite and the demo-dataset script as a stand-in corpus:
attributes are Gaussian blobs tied to communities, so an attribute swapped
in from a distant node is inconsistent with its neighborhood, and planted
cliques are denser than any organic community. Generation is deterministic
given the seed (counter-based stream, no global RNG state).
"""

import numpy as np

from . import rng
from .graph import build_graph


def community_graph(num_nodes=300, num_features=32, num_communities=6,
                    p_within=0.05, p_between=0.002, blob_scale=1.0,
                    noise_scale=0.4, seed=0):
    """Stochastic block model with blob attributes; labels all zero.

    Nodes are assigned to communities in contiguous blocks. Every node is
    guaranteed at least one within-community edge so RWR sampling never
    degenerates to all-padding on the clean graph.
    """
    if num_communities < 1 or num_nodes < 2 * num_communities:
        raise ValueError("need at least two nodes per community")
    gen = rng.stream(seed, rng.SYNTH)
    comm = np.repeat(np.arange(num_communities),
                     -(-num_nodes // num_communities))[:num_nodes]

    same = comm[:, None] == comm[None, :]
    prob = np.where(same, p_within, p_between)
    draw = gen.random((num_nodes, num_nodes))
    upper = np.triu(draw < prob, k=1)
    rows, cols = np.nonzero(upper)
    pairs = list(zip(rows.tolist(), cols.tolist()))

    degree = np.zeros(num_nodes, dtype=np.int64)
    for i, j in pairs:
        degree[i] += 1
        degree[j] += 1
    for v in np.nonzero(degree == 0)[0]:
        peers = np.nonzero((comm == comm[v]) & (np.arange(num_nodes) != v))[0]
        partner = int(gen.choice(peers))
        pairs.append((min(v, partner), max(v, partner)))
        degree[v] += 1
        degree[partner] += 1

    centers = gen.normal(0.0, blob_scale, size=(num_communities, num_features))
    attrs = centers[comm] + gen.normal(0.0, noise_scale,
                                       size=(num_nodes, num_features))
    return build_graph(np.asarray(pairs, dtype=np.int64), attrs,
                       labels=np.zeros(num_nodes, dtype=np.int64))
