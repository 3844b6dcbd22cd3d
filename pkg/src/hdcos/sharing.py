"""Two-party additive secret sharing over Z_2^64.

A secret ``x`` is held as ``Share(0, x - r)`` and ``Share(1, r)`` with ``r``
uniform. Linear operations are local: they cost no rounds and no bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fixed_ring import DEFAULT_CFG, RING_DTYPE, FixedCfg, as_ring, encode

SHARE_MAGIC = b"HDSH"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBBBBQ")


class ShareError(ValueError):
    """Shares that cannot be combined (wrong parties, configs or shapes)."""


class FormatError(ValueError):
    """A share or triple file is corrupt or has an unexpected layout."""


@dataclass(frozen=True)
class Share:
    """One party's share of a secret scalar or array."""

    party: int
    val: np.ndarray = field(repr=False)
    cfg: FixedCfg = DEFAULT_CFG

    def __post_init__(self):
        if self.party not in (0, 1):
            raise ShareError(f"party id must be 0 or 1, got {self.party}")
        object.__setattr__(self, "val", np.asarray(as_ring(self.val), dtype=RING_DTYPE))

    @property
    def shape(self):
        return self.val.shape

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx) -> "Share":
        return Share(self.party, self.val[idx], self.cfg)

    def with_val(self, val) -> "Share":
        return Share(self.party, val, self.cfg)

    def reshape(self, *shape) -> "Share":
        return self.with_val(self.val.reshape(*shape))

    def __add__(self, other):
        return share_add(self, other)

    def __sub__(self, other):
        return share_sub(self, other)


def random_ring(rng: np.random.Generator, shape=()) -> np.ndarray:
    return rng.integers(0, 2**64, size=shape, dtype=RING_DTYPE, endpoint=False)


def split(x, rng: np.random.Generator, cfg: FixedCfg = DEFAULT_CFG) -> tuple[Share, Share]:
    """Split ring value(s) ``x`` into two additive shares; party 1 gets the mask."""
    x = np.asarray(as_ring(x), dtype=RING_DTYPE)
    r = random_ring(rng, x.shape)
    return Share(0, x - r, cfg), Share(1, r, cfg)


def split_real(x, rng: np.random.Generator, cfg: FixedCfg = DEFAULT_CFG) -> tuple[Share, Share]:
    return split(encode(x, cfg), rng, cfg)


def reconstruct(s0: Share, s1: Share) -> np.ndarray:
    if (s0.party, s1.party) != (0, 1):
        raise ShareError(f"expected shares of parties (0, 1), got ({s0.party}, {s1.party})")
    if s0.cfg != s1.cfg:
        raise ShareError(f"fixed-point configs differ: {s0.cfg} vs {s1.cfg}")
    if s0.shape != s1.shape:
        raise ShareError(f"share shapes differ: {s0.shape} vs {s1.shape}")
    out = s0.val + s1.val
    return out[()] if out.ndim == 0 else out


def _check_pair(a: Share, b: Share):
    if a.party != b.party:
        raise ShareError(f"cannot combine shares of party {a.party} and party {b.party}")
    if a.cfg != b.cfg:
        raise ShareError(f"fixed-point configs differ: {a.cfg} vs {b.cfg}")


def share_add(a: Share, b: Share) -> Share:
    _check_pair(a, b)
    return a.with_val(a.val + b.val)


def share_sub(a: Share, b: Share) -> Share:
    _check_pair(a, b)
    return a.with_val(a.val - b.val)


def share_neg(a: Share) -> Share:
    return a.with_val(np.zeros_like(a.val) - a.val)


def share_add_public(a: Share, c) -> Share:
    """Add a public ring constant; only party 0 applies it."""
    if a.party != 0:
        return a
    return a.with_val(a.val + np.asarray(as_ring(c), dtype=RING_DTYPE))


def share_mul_public_int(a: Share, c) -> Share:
    """Multiply by a public ring integer; exact and scale-preserving."""
    return a.with_val(a.val * np.asarray(as_ring(c), dtype=RING_DTYPE))


def truncate_local(a: Share, bits) -> Share:
    """Divide the shared value by 2^bits without interaction.

    Party 0 shifts its share right; party 1 shifts the negation of its share
    and negates back. The reconstruction is off by at most one unit, except
    with probability about |value| / 2^64 where it is off by 2^(64-bits).
    ``bits`` may be an array broadcastable against the share.
    """
    s = np.asarray(bits, dtype=RING_DTYPE)
    if a.party == 0:
        return a.with_val(a.val >> s)
    neg = np.zeros_like(a.val) - a.val
    return a.with_val(np.zeros_like(a.val) - (neg >> s))


def share_mul_public(a: Share, c) -> Share:
    """Multiply shares by public real(s) ``c`` (scalar or broadcastable array).

    Integer constants are applied exactly in the ring. Any other constant
    ``c = m * 2^e`` (``0.5 <= |m| < 1``) is encoded with ``f - e`` fractional
    bits when ``e < 0``, so small constants keep ``f`` significant bits; the
    raw product then has the same magnitude as a product of two encodings
    and is truncated locally by the same number of bits.
    """
    c = np.asarray(c, dtype=np.float64)
    if np.all(c == np.round(c)):
        return share_mul_public_int(a, c.astype(np.int64))
    _, e = np.frexp(c)
    bits = a.cfg.f + np.maximum(0, -e)
    scaled = np.round(np.ldexp(c, bits)).astype(np.int64).view(RING_DTYPE)
    return truncate_local(a.with_val(a.val * scaled), bits)


def zeros_share(party: int, shape, cfg: FixedCfg = DEFAULT_CFG) -> Share:
    return Share(party, np.zeros(shape, dtype=RING_DTYPE), cfg)


def public_share(party: int, value, cfg: FixedCfg = DEFAULT_CFG) -> Share:
    """A trivial sharing of a public ring value: party 0 holds it, party 1 holds 0."""
    v = np.asarray(as_ring(value), dtype=RING_DTYPE)
    return Share(party, v if party == 0 else np.zeros_like(v), cfg)


def reshare_send(party: int, v, rng: np.random.Generator, cfg: FixedCfg = DEFAULT_CFG) -> tuple[Share, np.ndarray]:
    """Secret-share a value this party knows in the clear.

    Returns the share kept locally and the mask to send to the peer. The
    peer's share is the mask itself, so the pair reconstructs to ``v``.
    """
    v = np.asarray(as_ring(v), dtype=RING_DTYPE)
    mask = random_ring(rng, v.shape)
    return Share(party, v - mask, cfg), mask


def reshare_receive(party: int, mask: np.ndarray, cfg: FixedCfg = DEFAULT_CFG) -> Share:
    return Share(party, mask, cfg)


# share files ---------------------------------------------------------------


def write_header(fh, magic: bytes, cfg: FixedCfg, party: int, count: int):
    fh.write(_HEADER.pack(magic, FORMAT_VERSION, cfg.k, cfg.f, party, count))


def read_header(fh, magic: bytes) -> tuple[FixedCfg, int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise FormatError("file too short for header")
    got, version, k, f, party, count = _HEADER.unpack(raw)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if party not in (0, 1):
        raise FormatError(f"bad party id {party}")
    try:
        cfg = FixedCfg(f=f, k=k)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return cfg, party, count


HEADER_SIZE = _HEADER.size


def write_share_file(path, share: Share) -> int:
    """Write a flat share vector; returns the number of bytes written."""
    vals = np.ascontiguousarray(share.val.ravel(), dtype="<u8")
    with open(path, "wb") as fh:
        write_header(fh, SHARE_MAGIC, share.cfg, share.party, vals.size)
        fh.write(vals.tobytes())
    return HEADER_SIZE + 8 * vals.size


def read_share_file(path) -> Share:
    path = Path(path)
    with open(path, "rb") as fh:
        cfg, party, count = read_header(fh, SHARE_MAGIC)
        body = fh.read()
    if len(body) != 8 * count:
        raise FormatError(f"{path}: expected {8 * count} payload bytes, found {len(body)}")
    return Share(party, np.frombuffer(body, dtype="<u8").astype(RING_DTYPE), cfg)
