"""Trusted-dealer Beaver triples for the offline phase."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fixed_ring import DEFAULT_CFG, RING_DTYPE, FixedCfg
from .sharing import FormatError, HEADER_SIZE, Share, random_ring, read_header, split, write_header

TRIPLE_MAGIC = b"HDTR"


class PoolExhaustedError(RuntimeError):
    """More secure multiplications were requested than triples were dealt."""


@dataclass(frozen=True)
class BeaverTriple:
    """One party's shares of ``(a, b, c)`` with ``c = a*b`` in the raw ring."""

    a: Share
    b: Share
    c: Share

    def __len__(self):
        return len(self.a)


class TriplePool:
    """A party's queue of triple shares, consumed strictly in order."""

    def __init__(self, party: int, a, b, c, cfg: FixedCfg = DEFAULT_CFG):
        self.party = party
        self.cfg = cfg
        self._a = np.asarray(a, dtype=RING_DTYPE).ravel()
        self._b = np.asarray(b, dtype=RING_DTYPE).ravel()
        self._c = np.asarray(c, dtype=RING_DTYPE).ravel()
        if not (len(self._a) == len(self._b) == len(self._c)):
            raise ValueError("triple component lengths differ")
        self.consumed = 0

    @property
    def size(self) -> int:
        return len(self._a)

    @property
    def remaining(self) -> int:
        return self.size - self.consumed

    def take(self, n: int = 1) -> BeaverTriple:
        if n > self.remaining:
            raise PoolExhaustedError(
                f"party {self.party}: needed {n} triples but only {self.remaining} of {self.size} remain"
            )
        lo, hi = self.consumed, self.consumed + n
        self.consumed = hi
        mk = lambda v: Share(self.party, v[lo:hi], self.cfg)  # noqa: E731
        return BeaverTriple(mk(self._a), mk(self._b), mk(self._c))

    def take_triple(self) -> BeaverTriple:
        return self.take(1)

    def arrays(self):
        return self._a, self._b, self._c


def gen_triples(n: int, rng, cfg: FixedCfg = DEFAULT_CFG) -> tuple[TriplePool, TriplePool]:
    """Deal ``n`` triples; returns the two parties' pools.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed. A seeded
    numpy generator is reproducible, not cryptographically secure; anyone who
    knows the seed can recompute every triple, so seeds are for tests and
    demos only.
    """
    if n < 0:
        raise ValueError("triple count must be non-negative")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    a = random_ring(rng, n)
    b = random_ring(rng, n)
    c = a * b
    a0, a1 = split(a, rng, cfg)
    b0, b1 = split(b, rng, cfg)
    c0, c1 = split(c, rng, cfg)
    return (
        TriplePool(0, a0.val, b0.val, c0.val, cfg),
        TriplePool(1, a1.val, b1.val, c1.val, cfg),
    )


def take_triple(pool: TriplePool) -> BeaverTriple:
    return pool.take(1)


def write_triple_file(path, pool: TriplePool) -> int:
    """Writes the unconsumed triples as interleaved ``(a, b, c)`` records."""
    a, b, c = (v[pool.consumed:] for v in pool.arrays())
    body = np.stack([a, b, c], axis=1).astype("<u8")
    with open(path, "wb") as fh:
        write_header(fh, TRIPLE_MAGIC, pool.cfg, pool.party, len(a))
        fh.write(body.tobytes())
    return HEADER_SIZE + body.nbytes


def read_triple_file(path) -> TriplePool:
    path = Path(path)
    with open(path, "rb") as fh:
        cfg, party, count = read_header(fh, TRIPLE_MAGIC)
        body = fh.read()
    if len(body) != 24 * count:
        raise FormatError(f"{path}: expected {24 * count} payload bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype="<u8").astype(RING_DTYPE).reshape(count, 3)
    return TriplePool(party, arr[:, 0], arr[:, 1], arr[:, 2], cfg)
