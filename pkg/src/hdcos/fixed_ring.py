"""Fixed-point reals embedded in the ring Z_2^64.

Ring elements are ``numpy.uint64`` values; numpy's unsigned arithmetic on
arrays wraps modulo 2^64, which is exactly the ring we want. The signed
reading is two's complement (``view(np.int64)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RING_BITS = 64
RING_DTYPE = np.uint64


class RingOverflowError(ValueError):
    """A real value does not fit the fixed-point range."""


@dataclass(frozen=True)
class FixedCfg:
    """Ring width ``k`` (always 64) and number of fractional bits ``f``."""

    f: int = 20
    k: int = RING_BITS

    def __post_init__(self):
        if self.k != RING_BITS:
            raise ValueError(f"only k={RING_BITS} is supported, got k={self.k}")
        if not 8 <= self.f <= 40:
            raise ValueError(f"fractional bits must lie in [8, 40], got f={self.f}")

    @property
    def scale(self) -> float:
        return float(2**self.f)

    @property
    def bound(self) -> float:
        """Magnitude limit 2^(k-f-1); encodable reals satisfy |x| < bound - 1."""
        return float(2 ** (self.k - self.f - 1))

    @property
    def ulp(self) -> float:
        return 2.0**-self.f

    def to_bytes(self) -> bytes:
        return bytes((self.k, self.f))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FixedCfg":
        k, f = raw[0], raw[1]
        return cls(f=f, k=k)


DEFAULT_CFG = FixedCfg()


def as_ring(v) -> np.ndarray:
    """Coerce Python ints / arrays to uint64 ring values (taken mod 2^64)."""
    if isinstance(v, np.ndarray) and v.dtype == RING_DTYPE:
        return v
    if isinstance(v, (int, np.integer)):
        return np.uint64(int(v) % 2**RING_BITS)
    arr = np.asarray(v)
    if arr.dtype == RING_DTYPE:
        return arr
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64).view(RING_DTYPE) if arr.dtype.kind == "i" else arr.astype(RING_DTYPE)
    if arr.dtype == object:
        return np.array([int(x) % 2**RING_BITS for x in arr.ravel()], dtype=RING_DTYPE).reshape(arr.shape)
    raise TypeError(f"cannot interpret dtype {arr.dtype} as ring values")


def signed(r) -> np.ndarray:
    """Two's-complement reading of ring values as int64."""
    r = np.asarray(as_ring(r), dtype=RING_DTYPE)
    return r.view(np.int64)


def encode(x, cfg: FixedCfg = DEFAULT_CFG):
    """round(x * 2^f) mod 2^64.

    Scalars give a ``np.uint64``, arrays a uint64 array of the same shape.
    """
    a = np.asarray(x, dtype=np.float64)
    lim = cfg.bound - 1
    if not np.all(np.isfinite(a)) or np.any(np.abs(a) >= lim):
        worst = np.max(np.abs(a)) if a.size else 0.0
        raise RingOverflowError(f"|x|={worst} outside fixed-point range (limit {lim}) at f={cfg.f}")
    out = np.round(a * cfg.scale).astype(np.int64).view(RING_DTYPE)
    return out[()] if out.ndim == 0 else out


def decode(r, cfg: FixedCfg = DEFAULT_CFG):
    out = signed(r).astype(np.float64) / cfg.scale
    return float(out) if out.ndim == 0 else out


def _arr(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(as_ring(v), dtype=RING_DTYPE))


def _like(out: np.ndarray, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return out.reshape(-1)[0]
    return out


def ring_add(a, b):
    return _like(_arr(a) + _arr(b), a, b)


def ring_sub(a, b):
    return _like(_arr(a) - _arr(b), a, b)


def ring_neg(a):
    return _like(np.zeros(1, RING_DTYPE) - _arr(a), a)


def ring_mul(a, b):
    """Full product mod 2^64; the result carries the sum of both scales."""
    return _like(_arr(a) * _arr(b), a, b)


def ring_mul_pub_real(a, c: float):
    """round(signed(a) * c) mod 2^64 for a public real ``c``.

    Computed in float64, so it is exact only while |signed(a) * c| < 2^53.
    That holds for encodings of in-range reals but not for uniformly random
    shares; use :func:`hdcos.sharing.share_mul_public` on shares.
    """
    if float(c).is_integer():
        return ring_mul(a, np.uint64(int(c) % 2**RING_BITS))
    prod = np.round(signed(_arr(a)).astype(np.float64) * c).astype(np.int64)
    return _like(prod.view(RING_DTYPE), a)


def ring_to_bytes(r) -> bytes:
    return np.ascontiguousarray(_arr(r), dtype="<u8").tobytes()


def ring_from_bytes(raw: bytes) -> np.ndarray:
    if len(raw) % 8:
        raise ValueError(f"ring payload length {len(raw)} is not a multiple of 8")
    return np.frombuffer(raw, dtype="<u8").astype(RING_DTYPE)
