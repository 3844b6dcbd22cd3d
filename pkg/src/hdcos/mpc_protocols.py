"""Online two-party protocols on additive shares.

Every protocol is a generator taking a :class:`~hdcos.runtime.PartyContext`
first; compose them with ``yield from``.  Inputs are :class:`Share` arrays
whose last axis is the feature axis, so a batch of ``n`` row vectors of
length ``d`` has shape ``(n, d)`` and every batch costs the same number of
rounds as a single vector.

Multiplications follow Beaver's recipe on the raw ring: the product share has
``2f`` fractional bits and is truncated once afterwards, locally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .fixed_ring import DEFAULT_CFG, RING_DTYPE, FixedCfg, decode, encode, signed
from .polyfit import relu_polyfit3_coeffs
from .sharing import Share, reshare_send, share_add_public, share_mul_public, split_real, truncate_local

ACTIVATION_ROUNDS = {"cosine": 2, "square": 1, "relu_polyfit3": 2, "none": 0}
ACTIVATION_MULTS = {"cosine": 2, "square": 1, "relu_polyfit3": 2, "none": 0}  # per unit
LINEAR_ROUNDS = {"dense": 1, "hd": 1, "lowrank": 2}
MPC_STRUCTURES = frozenset(LINEAR_ROUNDS)
MPC_ACTIVATIONS = frozenset(ACTIVATION_ROUNDS)
PHASE_LIFT_MAX_ABS = 2.0**10
BYTES_PER_ELEMENT = 8


class CapabilityError(NotImplementedError):
    """The model uses a layer or activation that has no secure protocol here."""


class RangeCheckError(ValueError):
    """A debug-mode range check found a value outside the protocol's safe range."""


@dataclass(frozen=True)
class PhaseLiftCfg:
    """Integer lift that turns ring wraparound into whole turns of the phase.

    A share ``s`` of ``x`` (``f`` fractional bits) maps to the local phase
    ``signed(s * j) * 2pi / 2^k``.  The two phases sum to ``x`` modulo
    ``2pi`` up to a relative error of :attr:`rel_error`, because every ring
    wrap of ``s0 + s1`` contributes ``j * 2^k``, i.e. exactly ``j`` turns.
    """

    k: int = 64
    f: int = 20

    @classmethod
    def from_cfg(cls, cfg: FixedCfg) -> "PhaseLiftCfg":
        return cls(cfg.k, cfg.f)

    @property
    def j(self) -> int:
        return round(2 ** (self.k - self.f) / (2 * math.pi))

    @property
    def rel_error(self) -> float:
        """|j * 2pi * 2^f / 2^k - 1|."""
        return abs(self.j * 2 * math.pi * 2**self.f / 2**self.k - 1)

    def phase(self, s) -> np.ndarray:
        lifted = np.asarray(s, dtype=RING_DTYPE) * np.uint64(self.j)
        return signed(lifted).astype(np.float64) * (2 * math.pi / 2**self.k)


def _as_share(ctx, val) -> Share:
    return Share(ctx.party, val, ctx.cfg)


# opening and debug checks ------------------------------------------------------


def reveal(ctx, x: Share, protocol: str = "reveal"):
    """Open ``x`` to both parties (one round). Returns decoded reals."""
    peer = yield from ctx.exchange(protocol, x.val)
    return decode((x.val.ravel() + peer).reshape(x.shape), ctx.cfg)


def _debug_check(ctx, x: Share, bound: float, what: str):
    if not ctx.debug:
        return
    vals = np.atleast_1d((yield from reveal(ctx, x)))
    worst = float(np.max(np.abs(vals))) if vals.size else 0.0
    if worst > bound:
        raise RangeCheckError(f"{what}: |value| reaches {worst:.6g}, safe range is {bound:.6g}")


def _product_headroom(cfg: FixedCfg) -> float:
    # raw products carry 2f fractional bits and must stay below 2^(k-1)
    return 2.0 ** (cfg.k - 1 - 2 * cfg.f)


# multiplication ----------------------------------------------------------------


def beaver_mul_raw(ctx, x: np.ndarray, y: np.ndarray):
    """Raw ring products of flat share arrays ``x`` and ``y`` in one round.

    Consumes ``len(x)`` triples and sends ``16 * len(x)`` bytes.  The result
    carries ``2f`` fractional bits.
    """
    x = np.asarray(x, dtype=RING_DTYPE).ravel()
    y = np.asarray(y, dtype=RING_DTYPE).ravel()
    if x.shape != y.shape:
        raise ValueError(f"operand sizes differ: {x.size} vs {y.size}")
    n = x.size
    t = ctx.take_triples(n)
    a, b, c = t.a.val, t.b.val, t.c.val
    e, f = x - a, y - b
    peer = yield from ctx.exchange("beaver_open", np.concatenate([e, f]))
    e = e + peer[:n]
    f = f + peer[n:]
    z = c + e * b + f * a
    if ctx.party == 0:
        z = z + e * f
    return z


def truncate_shares(z: Share, bits: int | None = None) -> Share:
    """Local rescale of a ``2f``-bit product share back to ``f`` bits (0 rounds)."""
    return truncate_local(z, z.cfg.f if bits is None else bits)


def secure_mul_batch(ctx, x: Share, y: Share):
    """Elementwise product of equally shaped shares: 1 round, ``x.size`` triples."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    yield from _debug_check(ctx, _as_share(ctx, np.concatenate([x.val.ravel(), y.val.ravel()])),
                            math.sqrt(_product_headroom(ctx.cfg)), "secure_mul_batch operand")
    raw = yield from beaver_mul_raw(ctx, x.val, y.val)
    return truncate_shares(_as_share(ctx, raw.reshape(x.shape)))


# activations -------------------------------------------------------------------


def secure_square(ctx, x: Share):
    return (yield from secure_mul_batch(ctx, x, x))


def secure_relu_polyfit3(ctx, x: Share, coeffs=None):
    """c0 + c1 x + c2 x^2 + c3 x^3 in two rounds (x^2, then x * x^2)."""
    c0, c1, c2, c3 = relu_polyfit3_coeffs() if coeffs is None else coeffs
    x2 = yield from secure_mul_batch(ctx, x, x)
    x3 = yield from secure_mul_batch(ctx, x, x2)
    acc = share_mul_public(x, c1) + share_mul_public(x2, c2) + share_mul_public(x3, c3)
    return share_add_public(acc, encode(np.full(x.shape, float(c0)), ctx.cfg))


def secure_cosine(ctx, x: Share):
    """cos of a shared vector in two rounds, whatever its length.

    1. Each party lifts its share to a phase and evaluates cos and sin of it
       in local floating point.
    2. Each party secret-shares its cos and sin values with the peer
       (one simultaneous exchange).
    3. One batched Beaver round multiplies cos0*cos1 and sin0*sin1.
    4. The difference, truncated once, is a sharing of cos(x0 + x1).
    """
    yield from _debug_check(ctx, x, PHASE_LIFT_MAX_ABS, "secure_cosine input")
    cfg = ctx.cfg
    n = x.val.size
    theta = PhaseLiftCfg.from_cfg(cfg).phase(x.val.ravel())
    local = np.concatenate([encode(np.cos(theta), cfg), encode(np.sin(theta), cfg)])
    keep, mask = reshare_send(ctx.party, local, ctx.rng, cfg)
    peer_mask = yield from ctx.exchange("reshare", mask)
    # shares of party 0's (cos, sin) values and of party 1's
    of_p0, of_p1 = (keep.val, peer_mask) if ctx.party == 0 else (peer_mask, keep.val)
    raw = yield from beaver_mul_raw(ctx, of_p0, of_p1)
    diff = _as_share(ctx, (raw[:n] - raw[n:]).reshape(x.shape))
    return truncate_shares(diff)


def secure_identity(ctx, x: Share):
    return x
    yield  # pragma: no cover - makes this a generator


SECURE_ACTIVATIONS = {
    "cosine": secure_cosine,
    "square": secure_square,
    "relu_polyfit3": secure_relu_polyfit3,
    "none": secure_identity,
}


def secure_activation(ctx, kind: str, x: Share):
    if kind not in SECURE_ACTIVATIONS:
        raise CapabilityError(f"activation {kind!r} has no secure protocol "
                              f"(supported: {sorted(SECURE_ACTIVATIONS)})")
    return (yield from SECURE_ACTIVATIONS[kind](ctx, x))


# linear layers -----------------------------------------------------------------


def _sum_products(ctx, left: np.ndarray, right: np.ndarray, axis: int):
    """Broadcast, multiply elementwise (one round) and sum raw products over ``axis``."""
    left, right = np.broadcast_arrays(left, right)
    raw = yield from beaver_mul_raw(ctx, left, right)
    summed = raw.reshape(left.shape).sum(axis=axis, dtype=RING_DTYPE)
    return truncate_shares(_as_share(ctx, summed))


def secure_matvec_dense(ctx, W: Share, x: Share):
    """``x @ W.T`` for W of shape (k, d): 1 round, ``k * d`` triples per input row."""
    if W.val.ndim != 2 or W.shape[1] != x.shape[-1]:
        raise ValueError(f"shape mismatch: W {W.shape}, x {x.shape}")
    return (yield from _sum_products(ctx, W.val, x.val[..., None, :], axis=-1))


def secure_hd_layer(ctx, diag: Share, x: Share, out_dim: int | None = None):
    """H (diag * x): ``d`` triples per row, 1 round; the transform itself is local.

    ``d`` must be a power of two; pad shorter inputs with :func:`pad_share`.
    """
    d = diag.shape[-1]
    if not linalg.is_pow2(d):
        raise ValueError(f"HD layer width must be a power of two, got {d}")
    if x.shape[-1] != d:
        raise ValueError(f"input has {x.shape[-1]} features but diag has {d}")
    dv, xv = np.broadcast_arrays(diag.val, x.val)
    raw = yield from beaver_mul_raw(ctx, dv, xv)
    prod = truncate_shares(_as_share(ctx, raw.reshape(xv.shape)))
    mixed = _as_share(ctx, linalg.fwht_unnormalized(prod.val))
    y = share_mul_public(mixed, 1.0 / math.sqrt(d))
    return y if out_dim is None else y[..., :out_dim]


def secure_lowrank_matvec(ctx, V1: Share, V2: Share, x: Share):
    """``(x @ V2.T) @ V1``: two dependent rounds, ``2d + 2k`` triples per row."""
    r = V2.shape[0]
    if V1.shape[0] != r or V2.shape[1] != x.shape[-1]:
        raise ValueError(f"shape mismatch: V1 {V1.shape}, V2 {V2.shape}, x {x.shape}")
    u = yield from _sum_products(ctx, V2.val, x.val[..., None, :], axis=-1)      # (..., r)
    return (yield from _sum_products(ctx, V1.val, u.val[..., :, None], axis=-2))  # (..., k)


def pad_share(x: Share, d: int) -> Share:
    """Zero-pad the last axis; both parties pad with zeros, so no interaction."""
    return x.with_val(linalg.pad_last(x.val, d))


# whole models ------------------------------------------------------------------


def check_mpc_supported(spec):
    """Raise :class:`CapabilityError` unless every layer has a secure protocol."""
    for i, ls in enumerate(spec.all_layers):
        if ls.structure not in MPC_STRUCTURES:
            raise CapabilityError(f"layer {i}: structure {ls.structure!r} is plaintext-only "
                                  f"(secure structures: {sorted(MPC_STRUCTURES)})")
        if ls.activation not in MPC_ACTIVATIONS:
            raise CapabilityError(f"layer {i}: activation {ls.activation!r} is plaintext-only "
                                  f"(secure activations: {sorted(MPC_ACTIVATIONS)})")


def _hd_width(n_in: int, n_out: int) -> int:
    return linalg.next_pow2(max(n_in, n_out))


def secure_linear(ctx, structure: str, shares: dict, index: int, x: Share, n_in: int, n_out: int):
    key = lambda name: shares[f"{index}.{name}"]  # noqa: E731
    if structure == "dense":
        z = yield from secure_matvec_dense(ctx, key("W"), x)
    elif structure == "hd":
        d = _hd_width(n_in, n_out)
        z = yield from secure_hd_layer(ctx, key("diag"), pad_share(x, d), out_dim=n_out)
    elif structure == "lowrank":
        z = yield from secure_lowrank_matvec(ctx, key("V1"), key("V2"), x)
    else:
        raise CapabilityError(f"structure {structure!r} has no secure protocol")
    return z + key("b")


def secure_forward(ctx, spec, shares: dict, x: Share):
    """Logit shares for a batch of shared inputs (shape ``(n, input_dim)``).

    ``shares`` maps parameter names (``"0.diag"``, ``"0.b"``, ...) to this
    party's :class:`Share`.  Each layer's exchanges and multiplications are
    metered under a section named ``"layer{i}.{structure}"`` and
    ``"layer{i}.{activation}"``.
    """
    check_mpc_supported(spec)
    h = x
    for i, (ls, (n_in, n_out)) in enumerate(zip(spec.all_layers, spec.dims())):
        with ctx.section(f"layer{i}.{ls.structure}"):
            z = yield from secure_linear(ctx, ls.structure, shares, i, h, n_in, n_out)
        with ctx.section(f"layer{i}.{ls.activation}"):
            h = yield from secure_activation(ctx, ls.activation, z)
    return h


# analytic costs ----------------------------------------------------------------


def linear_mults(structure: str, n_in: int, n_out: int) -> int:
    """Secure multiplications for one input row through one linear map."""
    if structure == "dense":
        return n_in * n_out
    if structure == "hd":
        return _hd_width(n_in, n_out)
    if structure == "lowrank":
        return 2 * n_in + 2 * n_out
    raise CapabilityError(f"structure {structure!r} has no secure protocol")


def model_rounds(spec) -> int:
    check_mpc_supported(spec)
    return sum(LINEAR_ROUNDS[ls.structure] + ACTIVATION_ROUNDS[ls.activation] for ls in spec.all_layers)


def model_triples(spec, batch: int = 1) -> int:
    """Beaver triples :func:`secure_forward` consumes for ``batch`` rows."""
    check_mpc_supported(spec)
    per_row = sum(linear_mults(ls.structure, n_in, n_out) + ACTIVATION_MULTS[ls.activation] * n_out
                  for ls, (n_in, n_out) in zip(spec.all_layers, spec.dims()))
    return per_row * batch


def model_bytes(spec, batch: int = 1) -> int:
    """Bytes each party sends during :func:`secure_forward` (no debug reveals).

    Every Beaver product opens two ring elements; cosine additionally
    reshares two values per unit.
    """
    reshare = sum(2 * n_out for ls, (_, n_out) in zip(spec.all_layers, spec.dims()) if ls.activation == "cosine")
    return (2 * model_triples(spec, batch) + reshare * batch) * BYTES_PER_ELEMENT


def cost_table(spec, batch: int = 1) -> list:
    """Per-layer analytic rounds / mults / bytes, one dict per linear map and activation."""
    check_mpc_supported(spec)
    rows = []
    for i, (ls, (n_in, n_out)) in enumerate(zip(spec.all_layers, spec.dims())):
        m = linear_mults(ls.structure, n_in, n_out) * batch
        rows.append({"section": f"layer{i}.{ls.structure}", "rounds": LINEAR_ROUNDS[ls.structure],
                     "mults": m, "bytes": 2 * m * BYTES_PER_ELEMENT})
        if ls.activation != "none":
            a = ACTIVATION_MULTS[ls.activation] * n_out * batch
            extra = 2 * n_out * batch if ls.activation == "cosine" else 0
            rows.append({"section": f"layer{i}.{ls.activation}", "rounds": ACTIVATION_ROUNDS[ls.activation],
                         "mults": a, "bytes": (2 * a + extra) * BYTES_PER_ELEMENT})
    return rows


def share_params(params, rng, cfg: FixedCfg = DEFAULT_CFG) -> tuple[dict, dict]:
    """Encode and split every tensor of a ParamStore; returns the two parties' dicts."""
    out0, out1 = {}, {}
    for name, val in params.items():
        out0[name], out1[name] = split_real(np.asarray(val, dtype=np.float64), rng, cfg)
    return out0, out1
