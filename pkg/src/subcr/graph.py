"""Attributed-graph loading, validation, normalization, and export.

File formats (all UTF-8 text):
    edges.txt       one "src dst" pair per line, 0-based ids, '#' comments skipped
    attributes.csv  headerless CSV of floats, row i = node i
    labels.txt      one 0/1 integer per line (optional)
Export writes the same formats with deterministic ordering (ascending node id,
ascending neighbor id), so load -> export -> load round-trips exactly.
"""

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError, MalformedInputError

log = logging.getLogger(__name__)


class AttributedGraph:
    """Immutable undirected graph with dense node attributes.

    adjacency is symmetric CSR with unit weights, no self-loops, no duplicate
    entries; attributes is (N, F) float64; labels, when present, is a (N,)
    0/1 int array.
    """

    def __init__(self, adjacency, attributes, labels=None):
        adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
        attributes = np.ascontiguousarray(attributes, dtype=np.float64)
        if attributes.ndim != 2:
            raise DimensionError(f"attributes must be 2-D, got shape {attributes.shape}")
        n = attributes.shape[0]
        if adjacency.shape != (n, n):
            raise DimensionError(
                f"adjacency shape {adjacency.shape} does not match attribute rows {n}")
        adjacency.sum_duplicates()
        adjacency.sort_indices()
        if adjacency.nnz and adjacency.data.max() > 1.0:
            raise MalformedInputError("duplicate edges present in adjacency input")
        if (abs(adjacency - adjacency.T) > 0).nnz != 0:
            raise MalformedInputError("adjacency is not symmetric")
        if adjacency.diagonal().any():
            raise MalformedInputError("self-loops are not stored; add them on demand")
        if not np.isfinite(attributes).all():
            raise MalformedInputError("attribute matrix contains non-finite entries")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise DimensionError(
                    f"labels length {labels.shape} does not match node count {n}")
            if not np.isin(labels, (0, 1)).all():
                raise MalformedInputError("labels must be 0/1")
            labels.flags.writeable = False
        self.adjacency = adjacency
        self.attributes = attributes
        self.labels = labels
        for arr in (adjacency.data, adjacency.indices, adjacency.indptr, attributes):
            arr.flags.writeable = False

    @property
    def num_nodes(self):
        return self.attributes.shape[0]

    @property
    def num_features(self):
        return self.attributes.shape[1]

    @property
    def num_edges(self):
        """Undirected edge count (each edge stored twice in CSR)."""
        return self.adjacency.nnz // 2

    @property
    def degrees(self):
        return np.diff(self.adjacency.indptr)

    def edge_pairs(self):
        """(E, 2) array of undirected edges with src < dst, sorted."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]])

    def with_attributes(self, attributes):
        return AttributedGraph(self.adjacency, attributes, self.labels)

    def with_labels(self, labels):
        return AttributedGraph(self.adjacency, self.attributes, labels)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """D^{-1/2} (A [+ I]) D^{-1/2}, symmetric, weights in (0, 1]."""
    matrix: sp.csr_matrix
    self_loops_added: bool


def _symmetrize(pairs, n):
    """Unit-weight symmetric CSR from (possibly duplicated, one-directional) pairs."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]  # drop self-loops
    if len(pairs) == 0:
        return sp.csr_matrix((n, n), dtype=np.float64)
    both = np.concatenate([pairs, pairs[:, ::-1]])
    keys = both[:, 0] * n + both[:, 1]
    keys = np.unique(keys)
    rows, cols = keys // n, keys % n
    return sp.csr_matrix((np.ones(len(keys)), (rows, cols)), shape=(n, n))


def build_graph(edge_pairs, attributes, labels=None):
    """Construct an AttributedGraph, symmetrizing and deduplicating the edges."""
    attributes = np.asarray(attributes, dtype=np.float64)
    if attributes.ndim != 2:
        raise DimensionError(f"attributes must be 2-D, got shape {attributes.shape}")
    return AttributedGraph(_symmetrize(edge_pairs, attributes.shape[0]),
                           attributes, labels)


def _parse_edge_lines(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = body.split()
            if len(fields) != 2:
                raise MalformedInputError(
                    f"{path}:{lineno}: expected 'src dst', got {line.strip()!r}")
            try:
                pairs.append((int(fields[0]), int(fields[1])))
            except ValueError:
                raise MalformedInputError(
                    f"{path}:{lineno}: non-integer node id in {line.strip()!r}") from None
    return pairs, np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _load_attributes(path):
    try:
        attrs = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        # slow diagnostic pass to name the offending line
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                for cell in line.strip().split(","):
                    try:
                        float(cell)
                    except ValueError:
                        raise MalformedInputError(
                            f"{path}:{lineno}: non-numeric attribute cell "
                            f"{cell!r}") from None
        raise MalformedInputError(f"{path}: inconsistent row lengths") from None
    return attrs


def load_graph(edge_list_path, attributes_path, labels_path=None):
    """Load and validate a graph; node count is the attribute row count."""
    attrs = _load_attributes(attributes_path)
    n = attrs.shape[0]
    raw_pairs, pairs = _parse_edge_lines(edge_list_path)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
        bad = np.where((pairs < 0) | (pairs >= n))[0][0]
        raise MalformedInputError(
            f"{edge_list_path}: edge pair {raw_pairs[bad]} out of range for "
            f"{n} nodes (line with that pair: "
            f"{_find_pair_line(edge_list_path, raw_pairs[bad])})")
    labels = None
    if labels_path is not None:
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
        if labels.shape[0] != n:
            raise DimensionError(
                f"{labels_path}: {labels.shape[0]} labels for {n} nodes")
    return AttributedGraph(_symmetrize(pairs, n), attrs, labels)


def _find_pair_line(path, pair):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].split()
            if len(body) == 2 and (int(body[0]), int(body[1])) == tuple(pair):
                return lineno
    return "?"


def export_graph(g, edge_list_path, attributes_path, labels_path=None):
    """Write the graph back out in the load formats, deterministically ordered."""
    with open(edge_list_path, "w", encoding="utf-8") as fh:
        for i, j in g.edge_pairs():
            fh.write(f"{i} {j}\n")
    np.savetxt(attributes_path, g.attributes, fmt="%.17g", delimiter=",")
    if labels_path is not None:
        if g.labels is None:
            raise MalformedInputError("graph has no labels to export")
        np.savetxt(labels_path, g.labels, fmt="%d")


def remap_ids(pairs):
    """Map sparse/arbitrary integer ids to dense 0..N-1 (sorted original order).

    Returns (remapped (E,2) array, {original: new} dict). Callers that persist
    the graph should also persist the map (see write_id_map).
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    originals = np.unique(pairs)
    lookup = {int(o): i for i, o in enumerate(originals)}
    remapped = np.searchsorted(originals, pairs)
    return remapped, lookup


def write_id_map(lookup, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({str(k): v for k, v in lookup.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sym_norm_adjacency(g, node_subset=None, add_self_loops=True):
    """Symmetrically normalized adjacency D^{-1/2}(A + I)D^{-1/2}.

    With node_subset, operates on the induced subgraph (indices distinct and
    in range). Zero-degree nodes without self-loops give all-zero rows; that
    is logged, not fatal.
    """
    a = g.adjacency
    if node_subset is not None:
        idx = np.asarray(node_subset, dtype=np.int64)
        if len(np.unique(idx)) != len(idx):
            raise MalformedInputError("node_subset contains duplicate indices")
        if len(idx) and (idx.min() < 0 or idx.max() >= g.num_nodes):
            raise MalformedInputError("node_subset index out of range")
        a = a[idx][:, idx].tocsr()
    if add_self_loops:
        a = (a + sp.eye(a.shape[0], format="csr")).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    isolated = deg == 0
    if isolated.any():
        log.warning("%d zero-degree node(s) produce all-zero normalized rows",
                    int(isolated.sum()))
    with np.errstate(divide="ignore"):
        dinv = np.where(isolated, 0.0, 1.0 / np.sqrt(deg))
    norm = sp.diags(dinv) @ a @ sp.diags(dinv)
    norm = norm.tocsr()
    norm.sort_indices()
    return NormalizedAdjacency(matrix=norm, self_loops_added=add_self_loops)


def normalize_attributes(g, method="row_l1"):
    """Row-normalize attributes; zero rows are left untouched.

    Bag-of-words features on the citation datasets are conventionally
    l1-normalized per node before training.
    """
    if method == "none":
        return g
    if method != "row_l1":
        raise ConfigError(f"unknown attribute normalization {method!r}")
    sums = np.abs(g.attributes).sum(axis=1)
    scale = np.where(sums > 0, sums, 1.0)
    return g.with_attributes(g.attributes / scale[:, None])
