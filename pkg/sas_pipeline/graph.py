"""
sas_pipeline.graph
~~~~~~~~~~~~~~~~~~
Immutable undirected graphs in CSR form and the self-looped, symmetrically
normalised coupling operator Ŝ with its sparse × dense product.

    s_ij = 1 / sqrt((d_i + 1)(d_j + 1))      for j ∈ N(i) ∪ {i}
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, InputError

__all__ = [
    "Graph",
    "CouplingMatrix",
    "build_graph",
    "normalized_coupling",
    "spmm",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """
    num_nodes   : N
    row_offsets : int64[N+1]
    col_indices : int64[2M], each undirected edge stored in both directions
    degrees     : int64[N], self-loops not counted
    """
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.col_indices.size // 2)

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[node]:self.row_offsets[node + 1]]

    def adjacency(self) -> sp.csr_matrix:
        """0/1 adjacency A as a scipy CSR matrix (fresh copy)."""
        data = np.ones(self.col_indices.size, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once as (u, v) with u < v, sorted."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.row_offsets))
        keep = rows < self.col_indices
        return np.column_stack([rows[keep], self.col_indices[keep]])


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Ŝ = (D+I)^-1/2 (A+I) (D+I)^-1/2 stored as CSR with sorted rows."""
    matrix: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


# ───────────────────────── construction ─────────────────────────────────────
def build_graph(edges: Sequence[tuple[int, int]] | np.ndarray,
                num_nodes: int,
                *,
                line_numbers: Iterable[int] | None = None) -> Graph:
    """
    Build a CSR graph from an undirected edge list.

    Duplicates (in either direction) are merged and self-loops dropped; the
    result does not depend on the order of *edges*. *line_numbers* (one per
    edge) lets a file reader report where an out-of-range id came from;
    otherwise the 1-based position in *edges* is reported.
    """
    if num_nodes < 0:
        raise InputError(f"num_nodes must be ≥ 0, got {num_nodes}")
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"edge list must be pairs, got shape {arr.shape}")

    bad = np.flatnonzero(((arr < 0) | (arr >= num_nodes)).any(axis=1))
    if bad.size:
        pos = int(bad[0])
        lines = list(line_numbers) if line_numbers is not None else None
        line = lines[pos] if lines is not None else pos + 1
        u, v = arr[pos]
        raise InputError(f"edge ({u}, {v}) has a node index outside [0, {num_nodes})",
                         line=line)

    u, v = arr[:, 0], arr[:, 1]
    loop = u == v
    u, v = u[~loop], v[~loop]

    # both directions, then unique (row, col) keys → sorted CSR order
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    keys = np.unique(src * max(num_nodes, 1) + dst)
    rows = keys // max(num_nodes, 1)
    cols = keys % max(num_nodes, 1)

    degrees = np.bincount(rows, minlength=num_nodes).astype(np.int64)
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(degrees, out=row_offsets[1:])

    return Graph(
        num_nodes=int(num_nodes),
        row_offsets=_frozen(row_offsets),
        col_indices=_frozen(cols.astype(np.int64)),
        degrees=_frozen(degrees),
    )


def normalized_coupling(graph: Graph) -> CouplingMatrix:
    """Self-looped symmetric normalisation of *graph* (isolated nodes get s_ii = 1)."""
    n = graph.num_nodes
    a_hat = (graph.adjacency() + sp.identity(n, dtype=np.float64, format="csr")).tocsr()
    a_hat.sort_indices()

    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(a_hat.indptr))
    cols = a_hat.indices
    deg1 = graph.degrees.astype(np.float64) + 1.0
    # sqrt of the product keeps s_ij == s_ji bitwise and s_ii == 1/(d_i+1)
    a_hat.data = 1.0 / np.sqrt(deg1[rows] * deg1[cols])
    return CouplingMatrix(matrix=a_hat)


# ───────────────────────── product ──────────────────────────────────────────
def spmm(coupling: CouplingMatrix, dense: np.ndarray, *, workers: int = 1) -> np.ndarray:
    """
    Ŝ · dense for an N×C *dense* matrix.

    With ``workers > 1`` rows are split into contiguous blocks computed in
    threads; every output row is owned by one block, so the result is
    bit-identical to the single-threaded product.
    """
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != coupling.num_nodes:
        raise ContractError(
            f"spmm: expected {coupling.num_nodes} rows, got array of shape {dense.shape}"
        )
    mat = coupling.matrix
    n = coupling.num_nodes
    if workers <= 1 or n < 2 * workers:
        return np.asarray(mat @ dense)

    bounds = np.linspace(0, n, workers + 1, dtype=np.int64)

    def _block(i: int) -> np.ndarray:
        return np.asarray(mat[bounds[i]:bounds[i + 1]] @ dense)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_block, range(workers)))
    return np.vstack(parts)
