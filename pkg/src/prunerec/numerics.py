"""Deterministic dense linear algebra and seeded random number generation.

Everything downstream builds on these kernels. Determinism rules:

* all arrays are float64,
* matmul accumulates in a fixed order (ascending inner index), so results
  are bit-identical to a naive triple loop on every platform,
* no threaded BLAS paths are used anywhere.

The RNG is numpy's PCG64 keyed through SeedSequence(seed, spawn_key=(stream,)),
so identical (seed, stream) pairs reproduce identical draws everywhere.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, UndefinedSimilarity

Matrix = np.ndarray  # 2-D float64, rows = tokens, cols = feature dims

try:  # optional compiled kernel; bit-identical to the numpy path below
    from numba import njit

    @njit(cache=True)
    def _mm_kernel(a, b, out):  # pragma: no cover - exercised via matmul
        for i in range(a.shape[0]):
            for k in range(a.shape[1]):
                aik = a[i, k]
                for j in range(b.shape[1]):
                    out[i, j] += aik * b[k, j]

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def as_matrix(x) -> Matrix:
    """Coerce to a 2-D float64 array and check all entries are finite."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ContractViolation(f"expected a 2-D array, got ndim={m.ndim}")
    if m.size and not np.isfinite(m).all():
        raise ContractViolation("matrix contains NaN or Inf")
    return m


def check_finite(m: Matrix, what: str = "result") -> Matrix:
    if m.size and not np.isfinite(m).all():
        raise ContractViolation(f"{what} contains NaN or Inf")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with a fixed summation order.

    c[i, j] accumulates a[i, k] * b[k, j] for k ascending, exactly as a
    naive triple loop would, so the result is bit-for-bit reproducible.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(
            f"matmul shape mismatch: {a.shape} x {b.shape}"
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    if _HAVE_NUMBA:
        _mm_kernel(np.ascontiguousarray(a), np.ascontiguousarray(b), out)
    else:
        for k in range(a.shape[1]):
            out += a[:, k : k + 1] * b[k : k + 1, :]
    return check_finite(out, "matmul result")


def softmax_rows(m: Matrix) -> Matrix:
    """Row-wise softmax with max-subtraction for overflow safety."""
    m = as_matrix(m)
    if m.size == 0:
        return m.copy()
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm(m: Matrix, gain: np.ndarray, bias: np.ndarray, eps: float) -> Matrix:
    """Per-row normalization to mean 0 / variance 1, then affine gain/bias."""
    m = as_matrix(m)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if gain.shape != (m.shape[1],) or bias.shape != (m.shape[1],):
        raise ContractViolation("layer_norm gain/bias length must equal cols")
    if not eps > 0:
        raise ContractViolation("layer_norm eps must be positive")
    mu = m.mean(axis=1, keepdims=True)
    centered = m - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias


def l2_norm_rows(m: Matrix) -> np.ndarray:
    m = as_matrix(m)
    return np.sqrt((m * m).sum(axis=1))


def l1_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation("l1_distance length mismatch")
    return float(np.abs(a - b).sum())


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation("cosine_similarity length mismatch")
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarity("cosine similarity undefined for zero-norm input")
    return float((a * b).sum()) / (na * nb)


class Rng:
    """Seeded generator with integer substreams.

    Backed by PCG64; (seed, stream) fully determines the draw sequence.
    A single Rng must not be shared between concurrent consumers -- fork
    substreams with spawn() instead.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream: int) -> "Rng":
        return Rng(self.seed, stream)

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int) -> int:
        """One integer in [low, high)."""
        return int(self._gen.integers(low, high))

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)
