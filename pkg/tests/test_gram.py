import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from radvi.basis import build_dictionary, eval_basis, radial_value
from radvi.gram import (
    IllConditionedDictionaryError,
    chi_log_pdf,
    gram_matrix,
    gram_mc_validate,
    ramp_product_moment,
    truncated_moment,
)
from radvi.quadrature import ChiQuadrature

# int_1^2.5 r chi_7(r) dr, mpmath quadrature at 30 digits
M1_D7_1_TO_2_5 = 0.967669076455732880536286370431


def _chi_quad(d, f, a, b):
    return integrate.quad(lambda r: f(r) * math.exp(chi_log_pdf(d, r)), a, b, epsabs=0, epsrel=1e-12, limit=400)[0]


class TestTruncatedMoment:
    @pytest.mark.parametrize("d", [1, 2, 7, 50, 200])
    def test_normalization(self, d):
        assert truncated_moment(d, 0, 0.0, np.inf) == pytest.approx(1.0, rel=1e-13)

    @pytest.mark.parametrize("d", [1, 3, 10, 100])
    def test_second_moment(self, d):
        assert truncated_moment(d, 2, 0.0, np.inf) == pytest.approx(d, rel=1e-13)

    def test_frozen_value(self):
        assert truncated_moment(7, 1, 1.0, 2.5) == pytest.approx(M1_D7_1_TO_2_5, rel=1e-10)

    def test_random_against_quadrature(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d, n = int(rng.integers(1, 120)), int(rng.integers(0, 3))
            a = rng.uniform(0, math.sqrt(d) + 3)
            b = a + rng.uniform(0.01, 4)
            ref = _chi_quad(d, lambda r: r ** n, a, b)
            if ref > 1e-200:
                assert truncated_moment(d, n, a, b) == pytest.approx(ref, rel=1e-10)

    def test_vectorized(self):
        a = np.array([0.0, 1.0, 2.0])
        b = a + 0.5
        np.testing.assert_allclose(truncated_moment(5, 1, a, b), [truncated_moment(5, 1, x, y) for x, y in zip(a, b)])

    def test_empty_interval(self):
        assert truncated_moment(5, 2, 1.3, 1.3) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            truncated_moment(5, 0, 2.0, 1.0)

    @given(st.integers(1, 100), st.floats(0, 15), st.floats(0, 3), st.floats(0, 3))
    @settings(max_examples=100, deadline=None)
    def test_additive_over_intervals(self, d, a, w1, w2):
        whole = truncated_moment(d, 1, a, a + w1 + w2)
        parts = truncated_moment(d, 1, a, a + w1) + truncated_moment(d, 1, a + w1, a + w1 + w2)
        assert whole == pytest.approx(parts, rel=1e-9, abs=1e-300)


class TestGramMatrix:
    @pytest.mark.parametrize("d", [1, 4, 10, 50])
    def test_structure(self, d):
        dct = build_dictionary(d) if d > 1 else build_dictionary(1, R=0.5, delta=0.25)
        Q = gram_matrix(dct).Q
        np.testing.assert_array_equal(Q, Q.T)
        assert np.all((Q >= 0) & (Q <= 1))
        diag = np.diag(Q)
        assert np.all(Q ** 2 <= np.outer(diag, diag) * (1 + 1e-12) + 1e-300)

    def test_cholesky(self):
        g = gram_matrix(build_dictionary(10))
        Qa = g.Q_active
        np.testing.assert_allclose(g.chol @ g.chol.T, Qa, rtol=1e-13, atol=1e-16)

    def test_solve_round_trip(self):
        g = gram_matrix(build_dictionary(10))
        v = np.random.default_rng(1).standard_normal(len(g.active))
        z = g.solve(v)
        assert np.linalg.norm(g.Q_active @ z - v) <= 1e-10 * np.linalg.norm(v)

    def test_entries_against_quadrature(self):
        dct = build_dictionary(10)
        Q = gram_matrix(dct).Q
        rng = np.random.default_rng(2)
        for _ in range(15):
            i, j = rng.integers(0, dct.size, 2)
            ref = _chi_quad(10, lambda r: eval_basis(dct, r)[i] * eval_basis(dct, r)[j], 0, 20)
            assert Q[i, j] == pytest.approx(ref, rel=1e-9, abs=1e-14)

    def test_unequal_widths(self):
        # base ramp [0, 2] against a narrow ramp inside it
        ref = _chi_quad(3, lambda r: min(max(r / 2, 0), 1) * min(max((r - 0.5) / 0.3, 0), 1), 0, 30)
        assert ramp_product_moment(3, 0.0, 2.0, 0.5, 0.3) == pytest.approx(ref, rel=1e-11)

    def test_independent_of_alpha(self):
        a = gram_matrix(build_dictionary(10, alpha=0.01)).Q
        b = gram_matrix(build_dictionary(10, alpha=1.0)).Q
        np.testing.assert_array_equal(a, b)

    def test_far_ramp_negligible(self):
        # a ramp far beyond the bulk has no chi mass
        assert ramp_product_moment(4, 40.0, 0.5, 40.0, 0.5) <= 1e-12

    def test_far_ramp_dropped(self):
        dct = build_dictionary(4, R=1.0, delta=0.5)
        from dataclasses import replace

        far = replace(dct, offsets=np.append(dct.offsets, 60.0), widths=np.append(dct.widths, 0.5))
        g = gram_matrix(far)
        assert list(g.dropped) == [far.size - 1]
        assert len(g.active) == far.size - 1

    def test_ill_conditioned(self):
        from dataclasses import replace

        dct = build_dictionary(10)
        dup = replace(dct, offsets=np.append(dct.offsets, dct.offsets[-1]), widths=np.append(dct.widths, dct.widths[-1]))
        with pytest.raises(IllConditionedDictionaryError, match="larger mesh"):
            gram_matrix(dup)


class TestMonteCarlo:
    def test_deviation_shrinks(self):
        dct = build_dictionary(10)
        g = gram_matrix(dct)
        coarse = gram_mc_validate(dct, 10_000, np.random.default_rng(0), gram=g)
        fine = gram_mc_validate(dct, 1_000_000, np.random.default_rng(0), gram=g)
        assert fine < coarse
        assert fine <= 5e-3

    def test_deterministic(self):
        dct = build_dictionary(10)
        a = gram_mc_validate(dct, 20_000, np.random.default_rng(4))
        b = gram_mc_validate(dct, 20_000, np.random.default_rng(4))
        assert a == b

    def test_minimum_samples(self):
        with pytest.raises(ValueError):
            gram_mc_validate(build_dictionary(10), 100, np.random.default_rng(0))

    def test_isometry_small(self):
        dct = build_dictionary(10)
        Q = gram_matrix(dct).Q
        rng = np.random.default_rng(5)
        r = np.sqrt(rng.chisquare(10, 400_000))
        for _ in range(3):
            lam, eta = rng.uniform(0, 2, dct.size), rng.uniform(0, 2, dct.size)
            mc = np.mean((radial_value(dct, lam, r) - radial_value(dct, eta, r)) ** 2)
            v = lam - eta
            assert mc == pytest.approx(v @ Q @ v, rel=0.02)


class TestQuadrature:
    @pytest.mark.parametrize("d", [1, 5, 10, 50, 100])
    def test_integrates_moments(self, d):
        dct = build_dictionary(d) if d > 1 else build_dictionary(1, R=0.5, delta=0.25)
        quad = ChiQuadrature(dct)
        assert quad.integrate(np.ones_like(quad.r)) == pytest.approx(1.0, rel=1e-12)
        assert quad.integrate(quad.r ** 2) == pytest.approx(d, rel=1e-12)

    def test_gram_from_nodes(self):
        dct = build_dictionary(10)
        quad = ChiQuadrature(dct)
        Qq = (quad.psi * quad.w[:, None]).T @ quad.psi
        np.testing.assert_allclose(Qq, gram_matrix(dct).Q, atol=1e-13)

    def test_radial_value_shortcut(self):
        dct = build_dictionary(10)
        quad = ChiQuadrature(dct)
        lam = np.random.default_rng(6).uniform(0, 2, dct.size)
        np.testing.assert_allclose(quad.radial_value(lam), radial_value(dct, lam, quad.r), rtol=1e-13)

    def test_interval_mass(self):
        dct = build_dictionary(10)
        quad = ChiQuadrature(dct)
        np.testing.assert_allclose(quad.interval_mass,
                                   [truncated_moment(10, 0, a, a + w) for a, w in zip(dct.offsets, dct.widths)])
