import numpy as np
import pytest

from lapgcn.graph_embed import SparseAdjacency
from lapgcn.numkit import Rng


@pytest.fixture
def rng():
    return Rng(1234)


def random_adjacency(rng: Rng, d: int, density: float = 0.4) -> SparseAdjacency:
    """Random symmetric nonnegative adjacency with zero diagonal, for
    spectral tests that do not care how the graph was built."""
    raw = rng.uniform(0.0, 1.0, (d, d))
    mask = rng.uniform(0.0, 1.0, (d, d)) < density
    a = np.where(mask, raw, 0.0)
    a = (a + a.T) / 2.0
    np.fill_diagonal(a, 0.0)
    return SparseAdjacency(a=a, beta=0.5, nnz=int(np.count_nonzero(a)))
