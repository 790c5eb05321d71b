import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import optimize

from radvi.basis import (
    ConfigurationError,
    apply_map,
    build_dictionary,
    eval_basis,
    eval_basis_deriv,
    invert_radial,
    log_det_jacobian,
    radial_deriv,
    radial_value,
)


@pytest.fixture
def toy():
    return build_dictionary(4, R=1.0, delta=0.5, alpha=0.01)


def _weights(dct, seed=0, high=2.0):
    return np.random.default_rng(seed).uniform(0, high, dct.size)


weights10 = arrays(np.float64, build_dictionary(10).size, elements=st.floats(0, 5))


class TestBuild:
    def test_toy_knots(self, toy):
        assert toy.n_interior == 5
        np.testing.assert_allclose(toy.knots, [1.0, 1.5, 2.0, 2.5, 3.0])
        assert toy.widths[0] == 1.0

    def test_zero_cutoff_rejected(self):
        with pytest.raises(ConfigurationError):
            build_dictionary(25, R=0.0)

    def test_cutoff_above_root_rejected(self):
        with pytest.raises(ConfigurationError):
            build_dictionary(4, R=2.5)

    def test_defaults_d50(self):
        dct = build_dictionary(50)
        assert dct.cutoff == pytest.approx(1.978, abs=5e-4)
        assert dct.mesh == pytest.approx(0.521, abs=5e-4)
        assert dct.alpha == 0.01

    @pytest.mark.parametrize("d", [2, 5, 10, 25, 50, 100])
    def test_coverage(self, d):
        dct = build_dictionary(d)
        assert dct.knots[0] == pytest.approx(math.sqrt(d) - dct.cutoff)
        # the last knot lands in [sqrt(d) + R, sqrt(d) + R + delta)
        top = math.sqrt(d) + dct.cutoff
        assert top - 1e-12 <= dct.knots[-1] < top + dct.mesh
        assert np.all(dct.knots > 0)

    @pytest.mark.parametrize("kw", [{"delta": 0.0}, {"delta": 5.0}, {"alpha": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            build_dictionary(10, **kw)

    def test_describe(self, toy):
        info = toy.describe()
        assert info["J"] == 5 and info["knots"] == [1.0, 1.5, 2.0, 2.5, 3.0]


class TestBasis:
    def test_origin(self, toy):
        np.testing.assert_array_equal(eval_basis(toy, 0.0), np.zeros(6))

    def test_saturated(self, toy):
        np.testing.assert_array_equal(eval_basis(toy, 3.5), np.ones(6))
        np.testing.assert_array_equal(eval_basis(toy, 40.0), np.ones(6))

    def test_hand_value(self, toy):
        np.testing.assert_allclose(eval_basis(toy, 1.25), [1, 0.5, 0, 0, 0, 0])

    def test_derivative_inside_ramp(self, toy):
        np.testing.assert_allclose(eval_basis_deriv(toy, 1.8), [0, 0, 2.0, 0, 0, 0])
        np.testing.assert_array_equal(eval_basis_deriv(toy, 10.0), np.zeros(6))

    def test_right_derivative_at_knot(self, toy):
        # at r = 1.5 ramp 2 starts and ramp 1 has ended
        np.testing.assert_allclose(eval_basis_deriv(toy, 1.5), [0, 0, 2.0, 0, 0, 0])

    def test_derivative_finite_difference(self):
        dct = build_dictionary(10)
        rng = np.random.default_rng(1)
        bp = dct.breakpoints
        h = 1e-7
        for r in rng.uniform(0, dct.upper + 1, 100):
            if np.min(np.abs(bp - r)) < 10 * h:
                continue
            fd = (eval_basis(dct, r + h) - eval_basis(dct, r - h)) / (2 * h)
            np.testing.assert_allclose(eval_basis_deriv(dct, r), fd, atol=1e-6)

    def test_entries_monotone(self):
        dct = build_dictionary(10)
        psi = eval_basis(dct, np.linspace(0, 8, 2000))
        assert np.all((psi >= 0) & (psi <= 1))
        assert np.all(np.diff(psi, axis=0) >= 0)


class TestRadialValue:
    def test_zero_weights(self, toy):
        r = np.linspace(0, 5, 11)
        np.testing.assert_allclose(radial_value(toy, np.zeros(6), r), 0.01 * r)

    def test_plateau(self, toy):
        lam = _weights(toy)
        assert radial_value(toy, lam, 7.0) == pytest.approx(0.07 + lam.sum())

    @given(weights10)
    @settings(max_examples=50, deadline=None)
    def test_strictly_increasing(self, lam):
        dct = build_dictionary(10)
        r = np.linspace(0, 8, 4001)
        g = radial_value(dct, lam, r)
        assert g[0] == 0.0
        assert np.all(np.diff(g) >= dct.alpha * (r[1] - r[0]) * (1 - 1e-9))

    @given(weights10, weights10)
    @settings(max_examples=50, deadline=None)
    def test_affine_in_weights(self, lam, eta):
        dct = build_dictionary(10)
        r = np.linspace(0, 8, 101)
        lhs = radial_value(dct, lam + eta, r)
        rhs = radial_value(dct, lam, r) + radial_value(dct, eta, r) - dct.alpha * r
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(lhs).max()))

    @given(weights10, weights10)
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_weights(self, lam, eta):
        dct = build_dictionary(10)
        hi = np.maximum(lam, eta)
        r = np.linspace(0, 8, 101)
        assert np.all(radial_value(dct, hi, r) >= radial_value(dct, eta, r) - 1e-12)

    def test_piecewise_linear(self):
        dct = build_dictionary(10)
        lam = _weights(dct, 3)
        bp = dct.breakpoints
        for lo, hi in zip(bp[:-1], bp[1:]):
            t = np.linspace(lo, hi, 7)
            g = radial_value(dct, lam, t)
            np.testing.assert_allclose(np.diff(g, 2), 0, atol=1e-12)


class TestApplyMap:
    def test_zero_weights_scale(self, toy):
        x = np.random.default_rng(0).standard_normal((5, 4))
        np.testing.assert_allclose(apply_map(toy, np.zeros(6), x), 0.01 * x)

    def test_radiality(self):
        dct = build_dictionary(10)
        lam = _weights(dct, 1)
        x = np.random.default_rng(2).standard_normal((200, 10))
        y = apply_map(dct, lam, x)
        np.testing.assert_allclose(y / np.linalg.norm(y, axis=1, keepdims=True),
                                   x / np.linalg.norm(x, axis=1, keepdims=True), atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(y, axis=1), radial_value(dct, lam, np.linalg.norm(x, axis=1)))

    def test_hand_value(self, toy):
        y = apply_map(toy, [1, 1, 0, 0, 0, 0], np.array([1.25, 0, 0, 0]))
        np.testing.assert_allclose(y, [0.01 * 1.25 + 1 + 0.5, 0, 0, 0], rtol=1e-15)
        assert y[0] == pytest.approx(1.5125)

    def test_origin(self, toy):
        np.testing.assert_array_equal(apply_map(toy, np.ones(6), np.zeros(4)), np.zeros(4))

    def test_linear_along_rays_between_breakpoints(self):
        dct = build_dictionary(10)
        lam = _weights(dct, 4)
        u = np.random.default_rng(5).standard_normal(10)
        u /= np.linalg.norm(u)
        lo, hi = dct.breakpoints[3], dct.breakpoints[4]
        pts = np.outer(np.linspace(lo, hi, 5), u)
        np.testing.assert_allclose(np.diff(apply_map(dct, lam, pts), 2, axis=0), 0, atol=1e-12)


class TestLogDet:
    def test_zero_weights(self, toy):
        assert log_det_jacobian(toy, np.zeros(6), 1.7) == pytest.approx(4 * math.log(0.01))

    def test_plateau(self, toy):
        lam = _weights(toy, 2)
        r = 6.0
        expect = 3 * math.log(0.01 + lam.sum() / r) + math.log(0.01)
        assert log_det_jacobian(toy, lam, r) == pytest.approx(expect, rel=1e-14)

    def test_against_numerical_jacobian(self):
        dct = build_dictionary(6)
        rng = np.random.default_rng(6)
        h = 1e-6
        for _ in range(20):
            lam = rng.uniform(0, 2, dct.size)
            x = rng.standard_normal(6) * 1.3
            r = np.linalg.norm(x)
            if np.min(np.abs(dct.breakpoints - r)) < 1e-4:
                continue
            J = np.column_stack([(apply_map(dct, lam, x + h * e) - apply_map(dct, lam, x - h * e)) / (2 * h)
                                 for e in np.eye(6)])
            assert log_det_jacobian(dct, lam, r) == pytest.approx(np.linalg.slogdet(J)[1], abs=1e-5)

    @given(weights10, st.floats(1e-6, 50))
    @settings(max_examples=100, deadline=None)
    def test_finite_on_feasible_set(self, lam, r):
        assert np.isfinite(log_det_jacobian(build_dictionary(10), lam, r))


class TestInvert:
    def test_zero_weights(self, toy):
        s = np.linspace(0, 3, 7)
        np.testing.assert_allclose(invert_radial(toy, np.zeros(6), s), s / 0.01)

    def test_round_trip(self):
        dct = build_dictionary(10)
        lam = _weights(dct, 7)
        s = np.random.default_rng(8).uniform(0, radial_value(dct, lam, 12.0), 1000)
        np.testing.assert_allclose(radial_value(dct, lam, invert_radial(dct, lam, s)), s, rtol=1e-12, atol=1e-12)

    def test_bisection_oracle(self):
        dct = build_dictionary(10)
        rng = np.random.default_rng(9)
        for _ in range(30):
            lam = rng.uniform(0, 3, dct.size)
            s = rng.uniform(0, 20)
            ref = optimize.brentq(lambda t: radial_value(dct, lam, t) - s, 0, 1e4, xtol=1e-14, rtol=1e-15)
            assert invert_radial(dct, lam, s) == pytest.approx(ref, abs=1e-10)

    def test_sparse_weights(self):
        # zero weights make flat ramps with slope alpha only
        dct = build_dictionary(10)
        lam = np.zeros(dct.size)
        lam[3] = 4.0
        s = np.linspace(0, 10, 200)
        np.testing.assert_allclose(radial_value(dct, lam, invert_radial(dct, lam, s)), s, atol=1e-12)

    def test_derivative_matches(self):
        dct = build_dictionary(10)
        lam = _weights(dct, 10)
        r = np.array([0.3, 2.2, 3.9])
        h = 1e-7
        fd = (radial_value(dct, lam, r + h) - radial_value(dct, lam, r - h)) / (2 * h)
        np.testing.assert_allclose(radial_deriv(dct, lam, r), fd, rtol=1e-6)
