"""Personalized-PageRank diffusion of the adjacency structure.

S = alpha * (I - (1-alpha) * T)^{-1} with T the degree-normalized adjacency
(symmetric D^{-1/2} A D^{-1/2} by default, or the row-stochastic D^{-1} A).
Zero-degree nodes get a self-loop before normalization so T is well-defined.
Dense closed form for desk-scale graphs; a row-block power iteration with
optional streaming top-k truncation covers graphs where N^2 floats are
unaffordable.
"""

import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import (CapacityError, ConfigError, ConvergenceError,
                     MalformedInputError, NumericalError)

TRANSITIONS = ("symmetric", "random_walk")


@dataclass(frozen=True)
class DiffusionMatrix:
    matrix: Union[np.ndarray, sp.csr_matrix]
    alpha: float
    truncation: Optional[int] = None
    transition: str = "symmetric"

    @property
    def num_nodes(self):
        return self.matrix.shape[0]

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)

    def block(self, node_ids):
        """Dense induced square block over node_ids (duplicates allowed)."""
        ids = np.asarray(node_ids, dtype=np.int64)
        if self.is_sparse:
            return np.asarray(self.matrix[ids][:, ids].todense())
        return self.matrix[np.ix_(ids, ids)]


def _transition_matrix(g, kind):
    if kind not in TRANSITIONS:
        raise ConfigError(f"unknown transition {kind!r}; expected {TRANSITIONS}")
    deg = g.degrees.astype(np.float64)
    a = g.adjacency
    isolated = deg == 0
    if isolated.any():
        a = (a + sp.diags(isolated.astype(np.float64))).tocsr()
        deg = deg + isolated
    if kind == "symmetric":
        dinv = sp.diags(1.0 / np.sqrt(deg))
        return (dinv @ a @ dinv).tocsr()
    return (sp.diags(1.0 / deg) @ a).tocsr()


def compute_ppr(g, alpha=0.15, transition="symmetric", cap=25000):
    """Exact dense solve; guarded by a node-count cap on the N^2 memory."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    n = g.num_nodes
    if n > cap:
        raise CapacityError(
            f"{n} nodes exceeds the dense-solve cap {cap}; use the "
            f"iterative path (compute_ppr_iterative)")
    t = _transition_matrix(g, transition).toarray()
    system = np.eye(n) - (1.0 - alpha) * t
    try:
        s = scipy.linalg.solve(
            system, alpha * np.eye(n),
            assume_a="pos" if transition == "symmetric" else "gen")
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"diffusion solve failed: {exc}") from exc
    if not np.isfinite(s).all():
        raise NumericalError("diffusion solve produced non-finite entries")
    return DiffusionMatrix(matrix=s, alpha=alpha, transition=transition)


def compute_ppr_iterative(g, alpha=0.15, tol=1e-10, max_iter=1000,
                          num_terms=None, topk=None, block_size=512,
                          transition="symmetric"):
    """Row-block power iteration x <- alpha*e + (1-alpha) x T.

    After t iterations a row equals the diffusion series truncated at the
    t-th power, so num_terms=t requests that exact truncation (num_terms=0
    is alpha*I) and skips the convergence check. With topk set, each
    finished row block is truncated to its top-k entries (plus diagonal)
    and the result is sparse; peak memory stays at O(block_size * N).
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    if tol <= 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    n = g.num_nodes
    t_mat = _transition_matrix(g, transition).tocsc()
    dense_out = None if topk is not None else np.empty((n, n))
    sparse_rows = [] if topk is not None else None

    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        x = np.zeros((stop - start, n))
        x[np.arange(stop - start), np.arange(start, stop)] = alpha
        if num_terms is not None:
            for _ in range(num_terms):
                x = _step(x, t_mat, alpha, start, stop)
        else:
            converged = False
            for _ in range(max_iter):
                nxt = _step(x, t_mat, alpha, start, stop)
                residual = float(np.max(np.abs(nxt - x)))
                x = nxt
                if residual < tol:
                    converged = True
                    break
            if not converged:
                raise ConvergenceError(
                    f"power iteration still changing by {residual:.3e} "
                    f"after {max_iter} iterations (tol {tol:.1e})",
                    residual=residual)
        if topk is not None:
            sparse_rows.append(_topk_rows(x, start, topk))
        else:
            dense_out[start:stop] = x

    if topk is not None:
        matrix = sp.vstack(sparse_rows, format="csr")
        return DiffusionMatrix(matrix=matrix, alpha=alpha,
                               truncation=topk, transition=transition)
    return DiffusionMatrix(matrix=dense_out, alpha=alpha, transition=transition)


def _step(x, t_csc, alpha, start, stop):
    nxt = (1.0 - alpha) * (x @ t_csc)
    nxt[np.arange(stop - start), np.arange(start, stop)] += alpha
    return np.asarray(nxt)


def _topk_rows(block, row_offset, k):
    """CSR block keeping each row's k largest entries plus its diagonal."""
    rows, cols, vals = [], [], []
    for i in range(block.shape[0]):
        row = block[i]
        keep = _topk_indices(row, k)
        diag = row_offset + i
        if diag not in keep:
            keep = np.append(keep, diag)
        keep.sort()
        rows.extend([i] * len(keep))
        cols.extend(keep.tolist())
        vals.extend(row[keep].tolist())
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(block.shape[0], block.shape[1]))


def _topk_indices(row, k):
    if k >= len(row):
        return np.arange(len(row))
    # stable sort on negated values keeps ties in ascending column order
    order = np.argsort(-row, kind="stable")
    return order[:k].copy()


def sparsify_topk(dm, k):
    """Per-row top-k truncation (ties to lower column index); diagonal kept."""
    if k < 1:
        raise ConfigError(f"topk must be >= 1, got {k}")
    dense = dm.matrix.toarray() if dm.is_sparse else dm.matrix
    truncated = _topk_rows(dense, 0, k).tocsr() if k < dm.num_nodes else dm.matrix
    if k >= dm.num_nodes:
        return DiffusionMatrix(matrix=dm.matrix, alpha=dm.alpha,
                               truncation=None, transition=dm.transition)
    return DiffusionMatrix(matrix=truncated, alpha=dm.alpha,
                           truncation=k, transition=dm.transition)


_MAGIC = b"SUBCRPPR"
_VERSION = 1


def save_diffusion(dm, path):
    """Binary cache: fixed header then row-major float64 payload."""
    kind = 1 if dm.is_sparse else 0
    trunc = -1 if dm.truncation is None else dm.truncation
    header = struct.pack(
        "<8sIBBqQd", _MAGIC, _VERSION, kind,
        TRANSITIONS.index(dm.transition), trunc, dm.num_nodes, dm.alpha)
    with open(path, "wb") as fh:
        fh.write(header)
        if kind == 0:
            fh.write(np.ascontiguousarray(dm.matrix).tobytes())
        else:
            m = dm.matrix.tocsr()
            m.sort_indices()
            fh.write(struct.pack("<Q", m.nnz))
            fh.write(m.indptr.astype(np.int64).tobytes())
            fh.write(m.indices.astype(np.int64).tobytes())
            fh.write(m.data.astype(np.float64).tobytes())


def load_diffusion(path):
    with open(path, "rb") as fh:
        raw = fh.read(struct.calcsize("<8sIBBqQd"))
        try:
            magic, version, kind, trans_idx, trunc, n, alpha = struct.unpack(
                "<8sIBBqQd", raw)
        except struct.error as exc:
            raise MalformedInputError(f"{path}: truncated header") from exc
        if magic != _MAGIC:
            raise MalformedInputError(f"{path}: not a diffusion cache file")
        if version != _VERSION:
            raise MalformedInputError(
                f"{path}: cache version {version} unsupported (want {_VERSION})")
        if kind == 0:
            payload = np.frombuffer(fh.read(n * n * 8), dtype=np.float64)
            if payload.size != n * n:
                raise MalformedInputError(f"{path}: truncated dense payload")
            matrix = payload.reshape(n, n).copy()
        else:
            (nnz,) = struct.unpack("<Q", fh.read(8))
            indptr = np.frombuffer(fh.read((n + 1) * 8), dtype=np.int64)
            indices = np.frombuffer(fh.read(nnz * 8), dtype=np.int64)
            data = np.frombuffer(fh.read(nnz * 8), dtype=np.float64)
            if len(indptr) != n + 1 or len(indices) != nnz or len(data) != nnz:
                raise MalformedInputError(f"{path}: truncated sparse payload")
            matrix = sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()),
                                   shape=(n, n))
    return DiffusionMatrix(matrix=matrix, alpha=alpha,
                           truncation=None if trunc < 0 else trunc,
                           transition=TRANSITIONS[trans_idx])
