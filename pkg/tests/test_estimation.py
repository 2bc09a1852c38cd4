import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from rampmeter.estimation import (
    SampleWindow,
    algebraic_f_estimate,
    closed_loop_f_estimate,
    crude_f_estimate,
)


def _window(y_fn, u_fn, tau, n, **kw):
    s = np.linspace(0.0, tau, n)
    return SampleWindow(tau / (n - 1), y_fn(s), u_fn(s), **kw)


def quad_oracle(y_fn, u_fn, alpha, tau):
    """Continuous-time estimate by adaptive quadrature, independent of the sampled weights."""
    a, _ = quad(lambda s: (tau - 2 * s) * y_fn(s), 0, tau, epsabs=1e-13, epsrel=1e-13, limit=200)
    b, _ = quad(lambda s: s * (tau - s) * u_fn(s), 0, tau, epsabs=1e-13, epsrel=1e-13, limit=200)
    return -6.0 / tau**3 * (a + alpha * b)


class TestSampleWindow:
    def test_tau_defaults_to_span(self):
        w = SampleWindow(0.5, [0, 1, 2], [0, 0, 0])
        assert w.tau == pytest.approx(1.0)

    def test_tau_consistency(self):
        with pytest.raises(ValueError, match="inconsistent"):
            SampleWindow(0.5, [0, 1, 2], [0, 0, 0], tau=2.0)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            SampleWindow(0.1, [1.0], [0.0])

    def test_shapes_must_match(self):
        with pytest.raises(ValueError):
            SampleWindow(0.1, [1.0, 2.0], [0.0])

    def test_positive_step(self):
        with pytest.raises(ValueError):
            SampleWindow(0.0, [1.0, 2.0], [0.0, 0.0])


class TestAlgebraic:
    def test_constant_output_gives_zero(self):
        w = _window(lambda s: 5 + 0 * s, lambda s: 0 * s, 3.7, 101)
        assert abs(algebraic_f_estimate(w, 12.0)) < 1e-9

    def test_ramp_output(self):
        w = _window(lambda s: 2 * s, lambda s: 0 * s, 1.0, 1001)
        assert algebraic_f_estimate(w, 1.0) == pytest.approx(2.0, abs=1e-4)

    def test_zero_f_plant(self):
        w = _window(lambda s: 2 * 3 * s, lambda s: 3 + 0 * s, 1.0, 1001)
        assert abs(algebraic_f_estimate(w, 2.0)) < 1e-4

    @pytest.mark.parametrize("n", [2, 3, 6, 50])
    def test_exact_on_affine_data_for_any_sample_count(self, n):
        F, alpha, u0 = 0.37, 4.0, -1.5
        w = _window(lambda s: 1.0 + (F + alpha * u0) * s, lambda s: u0 + 0 * s, 2.0, n)
        assert algebraic_f_estimate(w, alpha) == pytest.approx(F, abs=1e-12)

    @pytest.mark.parametrize("n", [101, 401, 1601])
    def test_matches_quadrature_oracle_on_smooth_signals(self, n):
        y = lambda s: np.sin(3 * s) + 0.5 * s**2
        u = lambda s: np.cos(2 * s)
        tau, alpha = 1.3, 2.5
        ref = quad_oracle(y, u, alpha, tau)
        got = algebraic_f_estimate(_window(y, u, tau, n), alpha)
        h = tau / (n - 1)
        # piecewise-linear reconstruction: second-order error
        assert abs(got - ref) < 5.0 * h**2

    @settings(max_examples=50)
    @given(
        st.lists(st.floats(-10, 10), min_size=4, max_size=4),
        st.lists(st.floats(-10, 10), min_size=4, max_size=4),
        st.floats(-3, 3),
        st.floats(-3, 3),
    )
    def test_linear_in_signals(self, y2, u2, a, b):
        y1, u1 = np.array([1.0, 2.0, 0.5, -1.0]), np.array([0.0, 1.0, 1.0, 3.0])
        y2, u2 = np.array(y2), np.array(u2)
        est = lambda y, u: algebraic_f_estimate(SampleWindow(0.25, y, u), 7.0)
        lhs = est(a * y1 + b * y2, a * u1 + b * u2)
        rhs = a * est(y1, u1) + b * est(y2, u2)
        assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(rhs)))

    def test_noise_averages_out(self):
        rng = np.random.default_rng(7)
        tau, n, alpha = 1.0, 201, 2.0
        s = np.linspace(0, tau, n)
        y0 = 0.3 + 1.7 * s
        u = np.zeros(n)
        clean = algebraic_f_estimate(SampleWindow(tau / (n - 1), y0, u), alpha)
        draws = np.array(
            [algebraic_f_estimate(SampleWindow(tau / (n - 1), y0 + rng.normal(0, 0.05, n), u), alpha) for _ in range(2000)]
        )
        sem = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - clean) < 3 * sem


class TestClosedLoop:
    def test_all_zero(self):
        w = SampleWindow(0.1, np.zeros(5), np.zeros(5))
        assert closed_loop_f_estimate(w, 30.0, 0.5) == 0.0

    def test_constant_input(self):
        w = SampleWindow(0.1, np.zeros(5), np.ones(5))
        assert closed_loop_f_estimate(w, 30.0, 0.5) == pytest.approx(-30.0, abs=1e-9)

    def test_reference_rate_cancels_error_term(self):
        w = SampleWindow(0.1, np.zeros(5), np.zeros(5), ystar_dot=np.ones(5), e=np.full(5, 0.5))
        assert abs(closed_loop_f_estimate(w, 30.0, 2.0)) < 1e-9

    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-2, 2))
    def test_linear(self, e2, a):
        e1 = np.array([1.0, 0.0, -1.0])
        u = np.array([0.2, 0.1, 0.4])
        est = lambda uu, ee: closed_loop_f_estimate(SampleWindow(0.5, np.zeros(3), uu, e=ee), 3.0, 0.7)
        assert est(a * u, a * np.array(e2)) == pytest.approx(a * est(u, np.array(e2)), abs=1e-9)


class TestCrude:
    @pytest.mark.parametrize(
        "args, expected",
        [((1, 1, 0.5, 30, 0), 0.0), ((2, 1, 1, 1, 1), 0.0), ((0, 1, 0.5, 2, 3), -8.0)],
    )
    def test_examples(self, args, expected):
        assert crude_f_estimate(*args) == pytest.approx(expected)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            crude_f_estimate(1, 0, 0.0, 1, 0)

    @given(st.floats(-10, 10), st.floats(-5, 5), st.floats(0.01, 2), st.floats(0.1, 40), st.floats(-3, 3))
    def test_exact_on_discrete_plant(self, y_prev, F, h, alpha, u_prev):
        y_now = y_prev + h * (F + alpha * u_prev)
        assert crude_f_estimate(y_now, y_prev, h, alpha, u_prev) == pytest.approx(F, abs=1e-9 * (1 + alpha * abs(u_prev) + abs(y_prev) / h))
