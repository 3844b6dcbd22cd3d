import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdcos import linalg


def naive_normalized(d):
    """Sylvester Hadamard matrix built from bit parity, scaled by 1/sqrt(d)."""
    i = np.arange(d)
    parity = np.array([[bin(a & b).count("1") & 1 for b in i] for a in i])
    return (1 - 2 * parity) / np.sqrt(d)


class TestPowersOfTwo:
    @pytest.mark.parametrize("d, want", [(1, 1), (2, 2), (3, 4), (784, 1024), (1024, 1024)])
    def test_next_pow2(self, d, want):
        assert linalg.next_pow2(d) == want

    def test_is_pow2(self):
        assert [linalg.is_pow2(d) for d in (1, 2, 6, 64, 0)] == [True, True, False, True, False]

    def test_fwht_rejects_other_lengths(self):
        with pytest.raises(ValueError):
            linalg.fwht(np.ones(6))


class TestFwht:
    @pytest.mark.parametrize("d", [2, 4, 8, 16, 32, 64, 128, 256])
    def test_matches_naive(self, d, rng):
        x = rng.normal(size=(5, d))
        want = x @ naive_normalized(d).T
        got = linalg.fwht(x)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) < 1e-12

    def test_naive_helper_agrees_with_reference(self):
        np.testing.assert_allclose(linalg.hadamard_naive(16), naive_normalized(16), atol=1e-15)

    @pytest.mark.parametrize("d", [2, 16, 256])
    def test_involution(self, d, rng):
        x = rng.normal(size=d)
        np.testing.assert_allclose(linalg.fwht(linalg.fwht(x)), x, atol=1e-12)
        H = linalg.fwht(np.eye(d))
        np.testing.assert_allclose(H @ H, np.eye(d), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 7), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
    def test_linearity(self, log_d, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 2**log_d))
        np.testing.assert_allclose(linalg.fwht(a * x + b * y), a * linalg.fwht(x) + b * linalg.fwht(y),
                                   atol=1e-10)

    def test_unnormalized_scale(self, rng):
        x = rng.normal(size=32)
        np.testing.assert_allclose(linalg.fwht_unnormalized(x), np.sqrt(32) * linalg.fwht(x), atol=1e-12)

    def test_does_not_modify_input(self, rng):
        x = rng.normal(size=8)
        before = x.copy()
        linalg.fwht(x)
        np.testing.assert_array_equal(x, before)


class TestStructured:
    def test_hd_with_unit_diag_is_fwht(self, rng):
        x = rng.normal(size=(3, 16))
        np.testing.assert_allclose(linalg.hd_matvec(np.ones(16), x), linalg.fwht(x), atol=1e-14)

    def test_hd_pads_and_truncates(self, rng):
        diag, x = rng.normal(size=8), rng.normal(size=5)
        full = naive_normalized(8) @ (diag * np.r_[x, 0, 0, 0])
        np.testing.assert_allclose(linalg.hd_matvec(diag, x, 3), full[:3], atol=1e-13)

    def test_lowrank(self, rng):
        V1, V2, x = rng.normal(size=(2, 4)), rng.normal(size=(2, 6)), rng.normal(size=6)
        np.testing.assert_allclose(linalg.lowrank_matvec(V1, V2, x), V1.T @ V2 @ x, atol=1e-13)

    def test_circulant_matrix(self):
        C = linalg.circulant_matrix([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(C, [[1, 3, 2], [2, 1, 3], [3, 2, 1]])

    def test_circulant_matvec(self, rng):
        c, x = rng.normal(size=8), rng.normal(size=8)
        np.testing.assert_allclose(linalg.circulant_matvec(c, x), linalg.circulant_matrix(c) @ x, atol=1e-12)

    def test_phd(self, rng):
        P = linalg.SparseRows.gaussian(5, 8, rng)
        diag, x = rng.normal(size=8), rng.normal(size=8)
        want = P.dense() @ naive_normalized(8) @ (diag * x)
        np.testing.assert_allclose(linalg.phd_matvec(P, diag, x), want, atol=1e-12)
        assert np.all((P.dense() != 0).sum(axis=1) == 1)

    def test_phd_dimension_check(self, rng):
        with pytest.raises(ValueError):
            linalg.phd_matvec(linalg.SparseRows.gaussian(2, 8, rng), np.ones(4), np.ones(4))


class TestRff:
    def test_feature_scale(self, rng):
        rff = linalg.gaussian_rff_map(3, 50, 1.0, rng)
        phi = linalg.rff_features(rng.normal(size=(4, 3)), rff)
        assert phi.shape == (4, 50) and np.all(np.abs(phi) <= np.sqrt(2 / 50) + 1e-15)

    def test_self_kernel_is_one_on_average(self, rng):
        rff = linalg.gaussian_rff_map(4, 20000, 1.0, rng)
        x = rng.normal(size=(10, 4))
        np.testing.assert_allclose(np.sum(linalg.rff_features(x, rff) ** 2, axis=1), 1.0, atol=0.03)

    def test_gaussian_kernel(self):
        assert linalg.gaussian_kernel([0, 0], [1, 1], sigma=1.0) == pytest.approx(np.exp(-1.0))
        assert linalg.gaussian_kernel([0.0], [2.0], sigma=2.0) == pytest.approx(np.exp(-0.5))

    def test_error_curve_rows(self):
        rows = linalg.kernel_error_curve(features=(16, 64), pairs=50, repeats=3)
        assert [r["D"] for r in rows] == [16, 64]
        assert all(r["sup_error"] >= r["mean_error"] > 0 and r["noise"] > 0 for r in rows)
