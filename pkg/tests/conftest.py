import numpy as np
import pytest
import scipy.sparse as sp

from subcr.graph import AttributedGraph, build_graph


@pytest.fixture
def two_node_graph():
    """Single edge 0-1, simple 2-feature attributes."""
    return build_graph([(0, 1)], np.array([[1.0, 0.0], [0.0, 2.0]]))


@pytest.fixture
def triangle_graph():
    return build_graph([(0, 1), (1, 2), (0, 2)],
                       np.arange(6, dtype=float).reshape(3, 2))


def random_graph(n, f, edge_prob, seed, ensure_connected=False):
    """Erdos-Renyi helper for oracle tests (numpy default_rng, test-local)."""
    g = np.random.default_rng(seed)
    draw = np.triu(g.random((n, n)) < edge_prob, k=1)
    rows, cols = np.nonzero(draw)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    if ensure_connected:
        # chain backbone guarantees no isolated node and a connected graph
        pairs.extend((i, i + 1) for i in range(n - 1))
    attrs = g.normal(size=(n, f))
    return build_graph(pairs, attrs)


def dense_adjacency(g: AttributedGraph):
    return np.asarray(g.adjacency.todense())


def csr_equal(a: sp.csr_matrix, b: sp.csr_matrix):
    return (a.shape == b.shape) and ((a != b).nnz == 0)
