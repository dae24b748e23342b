"""Graph-spectral operators: self-loops, the normalized Laplacian
high-pass filter, the degree-normalized propagation (low-pass) operator,
and the analytic frequency response of their cascade.

With self-loops added, every node degree is >= 1, so the normalized
operators are always well defined. Eigenvalues of the Laplacian lie in
[0, 2] and index graph frequency: small means smooth across connected
nodes, large means rapidly varying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .graph_embed import SparseAdjacency

__all__ = [
    "NormalizedLaplacian",
    "PropagationOperator",
    "add_self_loops",
    "normalized_laplacian",
    "laplacian_prefilter",
    "propagation_operator",
    "cascade_response",
]


@dataclass(frozen=True)
class NormalizedLaplacian:
    """L = I - D^{-1/2} (A + I) D^{-1/2}; annihilates the smoothest signal."""

    l: np.ndarray
    deg: np.ndarray


@dataclass(frozen=True)
class PropagationOperator:
    """P = D^{-1/2} (A + I) D^{-1/2} = I - L; spectral radius <= 1."""

    p: np.ndarray
    deg: np.ndarray


def add_self_loops(adj: SparseAdjacency) -> tuple[np.ndarray, np.ndarray]:
    """Return (A + I, per-node degree vector of A + I)."""
    atilde = adj.a + np.eye(adj.d)
    return atilde, atilde.sum(axis=1)


def _normalized_adjacency(adj: SparseAdjacency) -> tuple[np.ndarray, np.ndarray]:
    atilde, deg = add_self_loops(adj)
    inv_sqrt = 1.0 / np.sqrt(deg)
    s = inv_sqrt[:, None] * atilde * inv_sqrt[None, :]
    # Elementwise scaling of a symmetric matrix can differ in the last ulp
    # between (i, j) and (j, i); average the pair to restore exact symmetry.
    s = (s + s.T) / 2.0
    return s, deg

def normalized_laplacian(adj: SparseAdjacency) -> NormalizedLaplacian:
    s, deg = _normalized_adjacency(adj)
    return NormalizedLaplacian(l=np.eye(adj.d) - s, deg=deg)


def propagation_operator(adj: SparseAdjacency) -> PropagationOperator:
    s, deg = _normalized_adjacency(adj)
    return PropagationOperator(p=s, deg=deg)


def laplacian_prefilter(lap: NormalizedLaplacian, x: np.ndarray) -> np.ndarray:
    """High-pass pre-filter: L x, the per-node residual against the
    degree-weighted neighborhood average."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or lap.l.shape[1] != x.shape[0]:
        raise ShapeError(
            f"prefilter dimension mismatch: {lap.l.shape} x {x.shape}"
        )
    return lap.l @ x


def cascade_response(lam: float, k: int) -> float:
    """Linearized frequency response of one Laplacian pass followed by k
    propagation steps: g(lam) = lam * (1 - lam)^k.

    g(0) = 0 for every k (the constant component is rejected), and for
    k >= 1 the magnitude peaks strictly inside (0, 1): the cascade is a
    band-pass, neither purely high- nor purely low-pass. Diagnostic only;
    ignores weights and nonlinearities.
    """
    if not 0.0 <= lam <= 2.0:
        raise ValueError(f"lambda must be in [0, 2], got {lam}")
    if k < 0:
        raise ValueError(f"layer count must be >= 0, got {k}")
    return lam * (1.0 - lam) ** k
