"""Dense numerical core: float64 matrices, seeded RNG, and a small
symmetric eigensolver used for diagnostics and tests.

All matrix values in this package are plain 2-D float64 numpy arrays,
treated as immutable after construction. Every public operation here
checks shapes explicitly and guarantees finite output.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "Rng",
    "as_matrix",
    "check_finite",
    "matmul",
    "relu",
    "softmax_rows",
    "sym_eigen",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and verify all entries are finite."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    check_finite(m, name)
    return m


def check_finite(a: np.ndarray, stage: str) -> np.ndarray:
    """Raise NumericalError naming `stage` if any entry is NaN/Inf."""
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite values produced at stage: {stage}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check naming both operands."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def relu(m: np.ndarray) -> np.ndarray:
    """Elementwise max(x, 0)."""
    return np.maximum(np.asarray(m, dtype=np.float64), 0.0)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting each row's max.

    Every output row is nonnegative and sums to 1 within 1e-12.
    """
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sym_eigen(m: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a small symmetric matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues ascending, eigenvectors as columns in matching
    order). Intended for diagnostic sizes (n <= 512); the rotation loop
    is plain Python over index pairs with vectorized row/column updates.

    `tol` bounds the accepted asymmetry of the input, relative to its
    largest absolute entry.
    """
    a = as_matrix(m, "sym_eigen input")
    n, n2 = a.shape
    if n != n2:
        raise ShapeError(f"sym_eigen needs a square matrix, got {a.shape}")
    if n > 512:
        raise ShapeError(f"sym_eigen is for diagnostic sizes <= 512, got n={n}")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > tol * scale:
        raise NumericalError(
            f"sym_eigen input asymmetric beyond tol={tol} (scale {scale:g})"
        )
    a = (a + a.T) / 2.0
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    max_sweeps = 64
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(a.diagonal())).max()
        if off <= 1e-14 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-16 * scale:
                    continue
                # Stable rotation angle (Golub & Van Loan form).
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                a[p, :], a[q, :] = c * a[p, :] - s * a[q, :], s * a[p, :] + c * a[q, :]
                a[p, q] = a[q, p] = 0.0
                v[:, p], v[:, q] = c * v[:, p] - s * v[:, q], s * v[:, p] + c * v[:, q]
    else:
        raise NumericalError(f"sym_eigen did not converge in {max_sweeps} sweeps")

    vals = a.diagonal().copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], v[:, order]


def _mix_key(part) -> int:
    """Map a string/int derivation key to a stable 64-bit integer."""
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"rng derivation keys must be int or str, got {type(part)!r}")


class Rng:
    """Deterministic counter-based random stream (Philox under the hood).

    Identical seed and derivation path give identical draws on every
    platform and run. No operation in this package touches ambient
    randomness; anything stochastic takes an Rng explicitly.

    `derive` produces an independent child stream keyed by the given
    ints/strings, so per-sample streams do not depend on the order in
    which samples are processed.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        ss = np.random.SeedSequence((self.seed, *_path))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def derive(self, *parts) -> "Rng":
        return Rng(self.seed, self._path + tuple(_mix_key(p) for p in parts))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float, scale: float, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), uniformly without replacement."""
        return self._gen.choice(n, size=k, replace=False)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self._path})"
