import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdcos.fixed_ring import (DEFAULT_CFG, FixedCfg, RingOverflowError, decode, encode, ring_add, ring_from_bytes,
                              ring_mul, ring_mul_pub_real, ring_neg, ring_sub, ring_to_bytes, signed)

F = DEFAULT_CFG.f
reals = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestFixedCfg:
    def test_defaults(self):
        assert (DEFAULT_CFG.k, DEFAULT_CFG.f) == (64, 20)
        assert DEFAULT_CFG.bound == 2.0**43
        assert DEFAULT_CFG.ulp == 2.0**-20

    @pytest.mark.parametrize("f", [7, 41])
    def test_rejects_f_out_of_range(self, f):
        with pytest.raises(ValueError):
            FixedCfg(f=f)

    def test_rejects_other_ring_widths(self):
        with pytest.raises(ValueError):
            FixedCfg(k=32)

    def test_bytes_roundtrip(self):
        cfg = FixedCfg(f=16)
        assert FixedCfg.from_bytes(cfg.to_bytes()) == cfg


class TestEncodeDecode:
    def test_small_values(self):
        assert encode(1.0) == np.uint64(2**20)
        assert encode(-1.0) == np.uint64(2**64 - 2**20)
        assert decode(encode(-2.5)) == -2.5

    def test_scalar_types(self):
        assert isinstance(encode(0.25), np.uint64)
        assert isinstance(decode(encode(0.25)), float)

    @given(reals)
    def test_roundtrip_within_half_ulp(self, x):
        assert abs(decode(encode(x)) - x) <= 2.0 ** -(F + 1)

    def test_array_roundtrip(self, rng):
        x = rng.uniform(-100, 100, (7, 5))
        np.testing.assert_allclose(decode(encode(x)), x, atol=2.0 ** -(F + 1), rtol=0)

    @pytest.mark.parametrize("bad", [np.inf, np.nan, 2.0**43, -(2.0**43)])
    def test_overflow(self, bad):
        with pytest.raises(RingOverflowError):
            encode(bad)

    def test_other_precisions(self):
        cfg = FixedCfg(f=12)
        assert decode(encode(3.140625, cfg), cfg) == 3.140625


class TestRingArithmetic:
    def test_add_wraps(self):
        assert ring_add(np.uint64(2**64 - 1), np.uint64(2)) == np.uint64(1)

    def test_neg_and_sub(self):
        a, b = encode(1.5), encode(4.0)
        assert decode(ring_sub(a, b)) == -2.5
        assert decode(ring_neg(a)) == -1.5

    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
    def test_mul_matches_python_modulo(self, a, b):
        assert int(ring_mul(np.uint64(a), np.uint64(b))) == (a * b) % 2**64

    def test_product_has_double_scale(self):
        z = ring_mul(encode(3.0), encode(-2.0))
        assert signed(z) == -6 * 2 ** (2 * F)

    def test_mul_public_real(self):
        assert decode(ring_mul_pub_real(encode(3.0), 0.5)) == 1.5
        assert decode(ring_mul_pub_real(encode(3.0), -2)) == -6.0

    def test_bytes_little_endian(self):
        raw = ring_to_bytes(np.array([1, 2**63], dtype=np.uint64))
        assert raw[:8] == b"\x01" + b"\x00" * 7
        np.testing.assert_array_equal(ring_from_bytes(raw), [1, 2**63])

    def test_bytes_bad_length(self):
        with pytest.raises(ValueError):
            ring_from_bytes(b"\x00" * 7)
