"""Plaintext kernels: Walsh-Hadamard transform, structured matvecs, random Fourier features.

Matrix-vector helpers act on the last axis, so a batch of row vectors
``X`` of shape ``(n, d)`` maps to ``(n, k)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def is_pow2(d: int) -> bool:
    return d >= 1 and (d & (d - 1)) == 0


def next_pow2(d: int) -> int:
    return 1 << max(0, int(d - 1).bit_length())


def _check_pow2(d: int):
    if not is_pow2(d):
        raise ValueError(f"Hadamard order must be a power of two, got {d}")


@dataclass(frozen=True)
class HadamardOrder:
    d: int

    def __post_init__(self):
        _check_pow2(self.d)

    @property
    def log2d(self) -> int:
        return self.d.bit_length() - 1


def fwht_unnormalized(x: np.ndarray) -> np.ndarray:
    """Sylvester-ordered butterfly over the last axis, without the 1/sqrt(d) scale.

    Uses only additions and subtractions, so it works unchanged on uint64
    ring shares (wrapping arithmetic) as well as on floats.
    """
    x = np.array(x, copy=True)
    d = x.shape[-1]
    _check_pow2(d)
    lead = x.shape[:-1]
    h = 1
    while h < d:
        v = x.reshape(*lead, d // (2 * h), 2, h)
        a = v[..., 0, :].copy()
        b = v[..., 1, :]
        v[..., 0, :] = a + b
        v[..., 1, :] = a - b
        h *= 2
    return x


def fwht(x) -> np.ndarray:
    """Multiply by the normalized Walsh-Hadamard matrix H_d (last axis)."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    return fwht_unnormalized(x) / np.sqrt(d)


def hadamard_naive(d: int) -> np.ndarray:
    """Explicit normalized H_d built from the recursive block definition."""
    _check_pow2(d)
    h = np.ones((1, 1))
    while h.shape[0] < d:
        h = np.block([[h, h], [h, -h]]) / np.sqrt(2.0)
    return h


def pad_last(x: np.ndarray, d: int) -> np.ndarray:
    n = x.shape[-1]
    if n == d:
        return x
    if n > d:
        raise ValueError(f"cannot pad length {n} down to {d}")
    width = [(0, 0)] * (x.ndim - 1) + [(0, d - n)]
    return np.pad(x, width)


def hd_matvec(diag, x, out_dim: int | None = None) -> np.ndarray:
    """H (diag * x) with x zero-padded to len(diag); keeps the first ``out_dim`` rows."""
    diag = np.asarray(diag, dtype=np.float64)
    x = pad_last(np.asarray(x, dtype=np.float64), diag.shape[-1])
    y = fwht(x * diag)
    return y if out_dim is None else y[..., :out_dim]


def lowrank_matvec(V1, V2, x) -> np.ndarray:
    """(V1^T V2) x with V1 of shape (r, k) and V2 of shape (r, d)."""
    V1, V2 = np.asarray(V1, dtype=np.float64), np.asarray(V2, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if V2.shape[1] != x.shape[-1] or V1.shape[0] != V2.shape[0]:
        raise ValueError(f"shape mismatch: V1 {V1.shape}, V2 {V2.shape}, x {x.shape}")
    return (x @ V2.T) @ V1


def circulant_matrix(c) -> np.ndarray:
    """C[i, j] = c[(i - j) mod d]; ``c`` is the first column."""
    c = np.asarray(c, dtype=np.float64)
    d = c.shape[0]
    idx = (np.arange(d)[:, None] - np.arange(d)[None, :]) % d
    return c[idx]


def circulant_matvec(c, x, out_dim: int | None = None) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    x = pad_last(np.asarray(x, dtype=np.float64), c.shape[0])
    y = x @ circulant_matrix(c).T
    return y if out_dim is None else y[..., :out_dim]


@dataclass(frozen=True)
class SparseRows:
    """A k x d matrix with one nonzero per row: ``M[i, cols[i]] = vals[i]``."""

    cols: np.ndarray
    vals: np.ndarray
    d: int

    def dense(self) -> np.ndarray:
        m = np.zeros((len(self.cols), self.d))
        m[np.arange(len(self.cols)), self.cols] = self.vals
        return m

    def matvec(self, x) -> np.ndarray:
        return np.asarray(x)[..., self.cols] * self.vals

    @classmethod
    def gaussian(cls, k: int, d: int, rng: np.random.Generator) -> "SparseRows":
        return cls(rng.integers(0, d, size=k), rng.standard_normal(k), d)


def phd_matvec(P: SparseRows, diag, x) -> np.ndarray:
    """P H (diag * x), x zero-padded to len(diag)."""
    if P.d != len(diag):
        raise ValueError(f"P has {P.d} columns but diag has {len(diag)} entries")
    return P.matvec(hd_matvec(diag, x))


# random Fourier features ----------------------------------------------------


@dataclass(frozen=True)
class RffMap:
    W: np.ndarray  # (D, d)
    b: np.ndarray  # (D,)

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    @property
    def scale(self) -> float:
        return float(np.sqrt(2.0 / self.n_features))


def gaussian_rff_map(d: int, n_features: int, sigma: float, rng: np.random.Generator) -> RffMap:
    """Frequencies from N(0, I/sigma^2), phases uniform on [0, 2pi)."""
    W = rng.standard_normal((n_features, d)) / sigma
    b = rng.uniform(0.0, 2 * np.pi, size=n_features)
    return RffMap(W, b)


def rff_features(X, rff: RffMap) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return rff.scale * np.cos(X @ rff.W.T + rff.b)


def gaussian_kernel(x, y, sigma: float = 1.0):
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return np.exp(-np.sum(diff * diff, axis=-1) / (2 * sigma**2))


def kernel_approx_errors(rff: RffMap, X, Y, sigma: float = 1.0) -> np.ndarray:
    """|phi(x_i).phi(y_i) - k(x_i, y_i)| for paired rows of X and Y."""
    est = np.sum(rff_features(X, rff) * rff_features(Y, rff), axis=-1)
    return np.abs(est - gaussian_kernel(X, Y, sigma))


def kernel_error_curve(d: int = 8, sigma: float = 1.0, pairs: int = 200, features=(64, 256, 1024, 4096),
                       seed: int = 0, repeats: int = 1, neighbour_scale: float = 0.5) -> list:
    """Mean and sup RFF kernel error for each feature count ``D``.

    Pairs are ``x ~ N(0, I)`` and ``y = x + neighbour_scale * sigma * N(0, I)`` so
    the true kernel values are spread over (0, 1) rather than all near zero.
    Each ``D`` is measured with ``repeats`` independent feature maps; the
    reported ``noise`` is the standard error of the mean error across them.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((pairs, d))
    Y = X + neighbour_scale * sigma * rng.standard_normal((pairs, d))
    rows = []
    for D in features:
        means, sups = [], []
        for r in range(repeats):
            rff = gaussian_rff_map(d, D, sigma, np.random.default_rng([seed, D, r]))
            err = kernel_approx_errors(rff, X, Y, sigma)
            means.append(err.mean())
            sups.append(err.max())
        noise = float(np.std(means, ddof=1) / np.sqrt(repeats)) if repeats > 1 else 0.0
        rows.append({"D": int(D), "mean_error": float(np.mean(means)), "sup_error": float(np.max(sups)),
                     "noise": noise})
    return rows
