import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmerton.errors import (
    MaxDepthExceededError,
    NonFiniteError,
    NotBracketedError,
)
from invmerton.numerics import (
    Grid1D,
    RngStream,
    fd_partial,
    gaussian_increments,
    integrate_ode,
    invert_monotone,
    quad,
    quad_to_inf,
)


class TestGrid:
    def test_nodes_and_spacing(self):
        g = Grid1D(0.0, 1.0, 101)
        assert g.spacing == pytest.approx(0.01)
        assert g.nodes()[0] == 0.0 and g.nodes()[-1] == 1.0

    @pytest.mark.parametrize("start,stop,n", [(1.0, 0.0, 5), (0.0, 0.0, 5), (0.0, 1.0, 1)])
    def test_invalid(self, start, stop, n):
        with pytest.raises(ValueError):
            Grid1D(start, stop, n)


class TestOde:
    def test_exponential_decay(self):
        _, ys = integrate_ode(lambda t, y: -y, 0.0, 1.0, Grid1D(0.0, 1.0, 101))
        assert ys[-1] == pytest.approx(math.exp(-1.0), abs=1e-8)

    def test_zero_rhs_constant(self):
        _, ys = integrate_ode(lambda t, y: 0.0, 0.0, 3.0, Grid1D(0.0, 2.0, 11))
        assert np.all(ys == 3.0)

    def test_proportional_spend_down(self):
        _, ys = integrate_ode(lambda t, y: -0.1 * y, 0.0, 1.0, Grid1D(0.0, 10.0, 1001))
        assert ys[-1] == pytest.approx(math.exp(-1.0), abs=1e-7)

    def test_fourth_order_convergence(self):
        def err(n):
            _, ys = integrate_ode(lambda t, y: -y, 0.0, 1.0, Grid1D(0.0, 1.0, n))
            return abs(ys[-1] - math.exp(-1.0))

        assert err(11) / err(21) >= 12.0

    def test_absorbing_floor_holds(self):
        _, ys = integrate_ode(lambda t, y: -10.0, 0.0, 1.0, Grid1D(0.0, 1.0, 101), floor=0.0)
        assert ys[-1] == 0.0
        k = np.argmax(ys == 0.0)
        assert np.all(ys[k:] == 0.0)

    def test_non_finite_rhs(self):
        with pytest.raises(NonFiniteError):
            integrate_ode(lambda t, y: float("nan"), 0.0, 1.0, Grid1D(0.0, 1.0, 11))


class TestQuad:
    def test_linear(self):
        assert quad(lambda x: x, 0.0, 1.0, tol=1e-10) == pytest.approx(0.5, abs=1e-12)

    def test_marginal_scale_integrand(self):
        # int_1^2 dxi/(phi xi) with phi = 0.5
        val = quad(lambda x: 1.0 / (0.5 * x), 1.0, 2.0, tol=1e-10)
        assert val == pytest.approx(2.0 * math.log(2.0), abs=1e-8)

    def test_power_tail(self):
        val = quad_to_inf(lambda x: 2.0 * x**-3.0, 1.0, tol=1e-10)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_truncated_tail(self):
        val = quad_to_inf(lambda x: math.exp(-x), 0.0, tol=1e-10, cutoff=60.0)
        assert val == pytest.approx(1.0, abs=1e-9)

    @given(
        a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), d=st.floats(-2, 2)
    )
    @settings(max_examples=40, deadline=None)
    def test_exact_on_cubics(self, a, b, c, d):
        exact = a / 4 + b / 3 + c / 2 + d
        val = quad(lambda x: a * x**3 + b * x**2 + c * x + d, 0.0, 1.0, tol=1e-12)
        assert val == pytest.approx(exact, abs=1e-10)

    def test_split_invariance(self):
        f = lambda x: math.sin(3.0 * x) * math.exp(-x)
        whole = quad(f, 0.0, 2.0, tol=1e-11)
        split = quad(f, 0.0, 0.7, tol=1e-11) + quad(f, 0.7, 2.0, tol=1e-11)
        assert whole == pytest.approx(split, abs=1e-9)

    def test_reversed_interval_sign(self):
        assert quad(lambda x: x, 1.0, 0.0, tol=1e-10) == pytest.approx(-0.5, abs=1e-12)

    def test_max_depth(self):
        with pytest.raises(MaxDepthExceededError):
            quad(lambda x: abs(x - 1 / 3) ** -0.9, 0.0, 1.0, tol=1e-12, max_depth=8)


class TestInvertMonotone:
    def test_square(self):
        assert invert_monotone(lambda x: x * x, 4.0, (0.0, 10.0)) == pytest.approx(2.0, abs=1e-10)

    def test_linear_consumption(self):
        assert invert_monotone(lambda w: 0.1 * w, 0.05, (0.0, 10.0)) == pytest.approx(0.5, abs=1e-10)

    def test_decreasing_marginal_utility(self):
        # (e^w - 1)^{-theta/sigma} = 1 with theta/sigma = 0.5  =>  w = log 2
        f = lambda w: (math.exp(w) - 1.0) ** -0.5
        x = invert_monotone(f, 1.0, (math.log(1.5), math.log(4.0)))
        assert x == pytest.approx(math.log(2.0), abs=1e-8)

    def test_not_bracketed(self):
        with pytest.raises(NotBracketedError):
            invert_monotone(lambda x: x, 5.0, (0.0, 1.0))

    @given(
        a=st.floats(0.1, 3.0), b=st.floats(0.1, 3.0), target=st.floats(0.05, 0.95)
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip(self, a, b, target):
        f = lambda x: a * x**3 + b * x
        y = target * f(1.0)
        x = invert_monotone(f, y, (0.0, 1.0))
        assert f(x) == pytest.approx(y, rel=1e-10, abs=1e-12)


class TestFdPartial:
    def test_first_derivative(self):
        assert fd_partial(lambda t, w: w * w, (0.0, 3.0), "w") == pytest.approx(6.0, abs=1e-6)

    def test_second_derivative(self):
        assert fd_partial(lambda t, w: w * w, (0.0, 3.0), "ww") == pytest.approx(2.0, abs=1e-5)

    def test_one_sided_at_boundary(self):
        # phi w + psi((1+w)^p - 1) at w = 0: slope phi + psi p
        f = lambda t, w: 0.5 * w + 60.0 * ((1.0 + w) ** 0.2 - 1.0)
        assert fd_partial(f, (0.0, 0.0), "w") == pytest.approx(12.5, abs=1e-5)

    def test_time_partial(self):
        assert fd_partial(lambda t, w: 2.0 * t + w, (1.0, 0.5), "t") == pytest.approx(2.0, abs=1e-8)

    @pytest.mark.parametrize("which,expected", [("w", 5.0), ("ww", 4.0)])
    def test_quadratic_accuracy(self, which, expected):
        f = lambda t, w: 2.0 * w * w + 5.0 * w - 1.0
        val = fd_partial(f, (0.0, 0.0), which)  # boundary stencil
        assert val == pytest.approx(expected, abs=1e-6 * max(1.0, expected))

    def test_non_finite(self):
        with pytest.raises(NonFiniteError):
            fd_partial(lambda t, w: float("inf"), (0.0, 1.0), "w")


class TestGaussianIncrements:
    def test_deterministic(self):
        a = gaussian_increments(RngStream(42, 0), 4, 0.01)
        b = gaussian_increments(RngStream(42, 0), 4, 0.01)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = gaussian_increments(RngStream(42, 0), 16, 0.01)
        b = gaussian_increments(RngStream(42, 1), 16, 0.01)
        assert not np.array_equal(a, b)

    def test_mean_within_clt_bound(self):
        incs = gaussian_increments(RngStream(123, 0), 10**6, 0.01)
        assert abs(incs.mean()) < 4.0 * 0.1 / 1000.0

    def test_stream_independence(self):
        a = gaussian_increments(RngStream(7, 0), 10**6, 1.0)
        b = gaussian_increments(RngStream(7, 1), 10**6, 1.0)
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.01

    def test_variance_scales_with_dt(self):
        incs = gaussian_increments(RngStream(5, 2), 10**5, 0.25)
        assert incs.var() == pytest.approx(0.25, rel=0.02)

    @pytest.mark.parametrize("n,dt", [(0, 0.1), (10, 0.0)])
    def test_invalid_args(self, n, dt):
        with pytest.raises(ValueError):
            gaussian_increments(RngStream(1), n, dt)
