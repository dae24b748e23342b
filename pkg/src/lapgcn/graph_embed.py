"""Order-free sparse graph construction over node features.

Nodes are the rows of a feature matrix X (one row per frame x grid
cell). Edges come from the Gram affinity X X^T, pruned per row by an
adaptive threshold relative to that row's mean affinity, then
symmetrized. No temporal information enters the graph: permuting the
node rows conjugates the adjacency exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numkit import as_matrix

__all__ = [
    "SparseAdjacency",
    "build_affinity",
    "adaptive_threshold",
    "build_graph",
]


@dataclass(frozen=True)
class SparseAdjacency:
    """Thresholded, symmetrized, nonnegative adjacency with zero diagonal."""

    a: np.ndarray
    beta: float
    nnz: int

    @property
    def d(self) -> int:
        return self.a.shape[0]


def build_affinity(x: np.ndarray) -> np.ndarray:
    """Gram affinity matrix of node features: entry (p, q) = <x_p, x_q>.

    Features must be nonnegative (they come out of a rectifying encoder),
    which keeps every affinity and row mean nonnegative so the relative
    threshold below is well-posed. The product is computed with a fixed
    reduction order (not BLAS) so that permuting node rows conjugates the
    result bitwise.
    """
    x = as_matrix(x, "node features")
    if x.shape[0] < 2:
        raise ShapeError(f"need at least 2 nodes, got {x.shape[0]}")
    if x.min() < 0.0:
        raise ValueError("node features must be nonnegative")
    return np.einsum("ic,jc->ij", x, x)


def adaptive_threshold(
    aam: np.ndarray, beta: float, keep_gram_diagonal: bool = False
) -> SparseAdjacency:
    """Sparsify an affinity matrix by a per-row relative threshold.

    Row i keeps entry (i, j) iff aam[i, j] > beta * mean(row i), where the
    mean runs over all d entries of the row including the diagonal. The
    comparison is strict: a value exactly at the threshold is dropped.
    After thresholding the diagonal is zeroed (self-loops are re-added
    exactly once downstream when the propagation operator is built) and
    the matrix is symmetrized as (A + A^T) / 2.

    `keep_gram_diagonal=True` preserves the literal thresholded diagonal
    for ablation, at the cost of double-weighted self-loops downstream.

    A row whose mean is zero (an all-zero node) keeps no edges; that is a
    valid isolated node, not an error.
    """
    aam = as_matrix(aam, "affinity matrix")
    d = aam.shape[0]
    if aam.shape[1] != d:
        raise ShapeError(f"affinity matrix must be square, got {aam.shape}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if aam.min() < 0.0:
        raise ValueError("adaptive threshold requires nonnegative affinities")

    # Summing each row in sorted order makes the row mean (hence the kept
    # edge set) independent of node ordering, not just equal up to rounding.
    row_means = np.sort(aam, axis=1).sum(axis=1) / d
    kept = aam > beta * row_means[:, None]
    a = np.where(kept, aam, 0.0)
    if not keep_gram_diagonal:
        np.fill_diagonal(a, 0.0)
    a = (a + a.T) / 2.0
    return SparseAdjacency(a=a, beta=float(beta), nnz=int(np.count_nonzero(a)))


def build_graph(
    x: np.ndarray, beta: float, keep_gram_diagonal: bool = False
) -> SparseAdjacency:
    """Affinity followed by adaptive thresholding; deterministic in (x, beta)."""
    return adaptive_threshold(build_affinity(x), beta, keep_gram_diagonal)
