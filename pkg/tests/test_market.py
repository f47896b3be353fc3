import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmerton.errors import OutOfDomainError
from invmerton.market import (
    CubicBounded,
    ExpBounded,
    GFamilyConsumption,
    Linear,
    LinearPlusExp,
    LogisticBounded,
    MarketParams,
    PowerShift,
    SqrtQuadExp,
    StrategyPair,
    Tabulated,
    TimehomConsumption,
    det_crra,
    evaluate,
    partial,
    state_price_density,
)


class TestMarketParams:
    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            MarketParams(r=0.0, sigma=0.0, theta=0.1)

    def test_negative_theta(self):
        with pytest.raises(ValueError):
            MarketParams(r=0.0, sigma=0.1, theta=-0.1)

    def test_zero_theta_tolerated(self):
        MarketParams(r=0.0, sigma=0.1, theta=0.0)


class TestStatePriceDensity:
    def test_starts_at_one(self):
        m = MarketParams(r=0.1, sigma=0.3, theta=0.2)
        assert state_price_density(m, 0.0, 5.0) == pytest.approx(1.0)

    def test_direct_value(self):
        m = MarketParams(r=0.03, sigma=0.2, theta=0.08)
        assert state_price_density(m, 1.0, 0.0) == pytest.approx(
            math.exp(-0.0332), abs=1e-9
        )

    def test_deterministic_drift_path(self):
        # B_t = -theta t: Z_t = exp((theta^2/2 - r) t)
        m = MarketParams(r=0.05, sigma=0.2, theta=0.3)
        t = 2.0
        assert state_price_density(m, t, -m.theta * t) == pytest.approx(
            math.exp((m.theta**2 / 2 - m.r) * t), rel=1e-12
        )

    @given(
        t=st.floats(0.0, 5.0),
        s=st.floats(0.01, 5.0),
        b1=st.floats(-2.0, 2.0),
        db=st.floats(-2.0, 2.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_multiplicative_over_increments(self, t, s, b1, db):
        m = MarketParams(r=0.03, sigma=0.2, theta=0.08)
        z_direct = state_price_density(m, t + s, b1 + db)
        z_split = state_price_density(m, t, b1) * math.exp(
            -m.r * s - m.theta * db - 0.5 * m.theta**2 * s
        )
        assert z_direct == pytest.approx(z_split, rel=1e-12)


ALL_FAMILIES = [
    (Linear(0.5), (0.01, 10.0)),
    (det_crra(0.1), (0.01, 10.0)),
    (PowerShift(0.5, 60.0, 0.2), (0.01, 10.0)),
    (PowerShift(2.1, -60.0, 1.0 / 30.0), (0.01, 10.0)),
    (LogisticBounded(), (0.01, 0.95)),
    (ExpBounded(), (0.01, 10.0)),
    (CubicBounded(r=0.5, sigma=0.25, beta=0.1), (0.01, 0.95)),
    (LinearPlusExp(kappa=0.4, alpha=0.1, a=1.25), (0.01, 10.0)),
    (SqrtQuadExp(kappa=0.4, alpha=0.1, a=1.25, r=0.6, sigma=0.25), (0.01, 10.0)),
    (GFamilyConsumption("log1p"), (0.01, 10.0)),
    (GFamilyConsumption("expsat"), (0.01, 0.15)),
]


class TestSurfaceEvaluation:
    def test_linear_value(self):
        assert evaluate(Linear(0.1), 0.0, 2.0) == pytest.approx(0.2)

    def test_power_shift_zero_at_origin(self):
        assert evaluate(PowerShift(0.5, 60.0, 0.2), 1.0, 0.0) == 0.0

    def test_logistic_value(self):
        assert evaluate(LogisticBounded(), 0.0, 0.5) == pytest.approx(0.25)

    def test_negative_wealth_rejected(self):
        with pytest.raises(OutOfDomainError):
            evaluate(Linear(0.1), 0.0, -1.0)

    @pytest.mark.parametrize("surface,span", ALL_FAMILIES)
    def test_zero_at_zero_wealth(self, surface, span):
        assert float(surface.value(0.5, 0.0)) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("surface,span", ALL_FAMILIES)
    def test_non_negative(self, surface, span):
        ws = np.geomspace(span[0], span[1], 30)
        assert np.all(np.asarray(surface.value(0.5, ws)) >= -1e-14)

    def test_g_family_time_zero_limit(self):
        # both G families have c(0, w) = w^2/2
        for choice in ("log1p", "expsat"):
            g = GFamilyConsumption(choice)
            assert float(g.value(0.0, 1.3)) == pytest.approx(1.3**2 / 2, rel=1e-10)

    def test_g_family_series_matches_exact(self):
        g = GFamilyConsumption("log1p")
        # just above and below the series switch at |wt| = 1e-3
        lo = float(g.value(9.99e-4, 1.0))
        hi = float(g.value(1.001e-3, 1.0))
        assert lo == pytest.approx(hi, rel=1e-9)


class TestPartials:
    def test_linear_analytic(self):
        assert partial(Linear(0.5), 1.0, 2.0, "w") == 0.5

    def test_logistic_curvature(self):
        assert partial(LogisticBounded(), 0.0, 0.3, "ww") == pytest.approx(-2.0)

    def test_exp_bounded_slope_at_zero(self):
        assert partial(ExpBounded(), 0.0, 0.0, "w") == pytest.approx(1.0)

    def test_unknown_partial(self):
        with pytest.raises(ValueError):
            partial(Linear(1.0), 0.0, 1.0, "www")

    @pytest.mark.parametrize("surface,span", ALL_FAMILIES)
    @pytest.mark.parametrize("which", ["w", "ww"])
    def test_analytic_matches_fd(self, surface, span, which):
        if not getattr(surface, f"has_analytic_{which}"):
            pytest.skip("no analytic derivative for this family")
        lo, hi = span
        for t in (0.1, 1.0, 5.0):
            for w in np.geomspace(max(lo, 0.1), hi, 5):
                if isinstance(surface, GFamilyConsumption) and surface.choice == "expsat":
                    if w * t >= 0.9:
                        continue
                analytic = float(getattr(surface, f"d_{which}")(t, w))
                fd = _fd_value(surface, t, w, which)
                assert fd == pytest.approx(analytic, abs=1e-5 * max(1.0, abs(analytic)))


def _fd_value(surface, t, w, which):
    from invmerton.numerics import fd_partial

    return fd_partial(lambda tt, ww: float(surface.value(tt, ww)), (t, w), which)


class TestTimehomSurface:
    def test_linear_pi_gives_linear_c(self):
        pi = Linear(0.5)
        c = TimehomConsumption(pi, 0.15, r=0.03, sigma=0.2)
        slope = 0.03 - 0.5 * 0.2**2 * 0.5**2 + 0.15 * 0.5
        assert float(c.value(0.7, 2.0)) == pytest.approx(2.0 * slope, rel=1e-12)

    def test_requires_time_homogeneous_pi(self):
        with pytest.raises(ValueError):
            TimehomConsumption(GFamilyConsumption("log1p"), 0.1, r=0.0, sigma=0.2)

    def test_time_varying_beta(self):
        pi = Linear(0.5)
        c = TimehomConsumption(pi, lambda t: 0.1 + 0.05 * t, r=0.03, sigma=0.2)
        assert not c.time_homogeneous
        dt = float(c.d_t(1.0, 2.0))
        assert dt == pytest.approx(0.05 * float(pi.value(1.0, 2.0)), rel=1e-4)


class TestTabulated:
    def test_round_trip_at_knots(self):
        base = PowerShift(0.5, 60.0, 0.2)
        t_knots = np.array([0.0, 1.0, 2.0])
        w_knots = np.geomspace(0.1, 5.0, 12)
        tab = Tabulated.from_surface(base, t_knots, w_knots)
        for t in t_knots:
            vals = np.asarray(tab.value(float(t), w_knots))
            expect = np.asarray(base.value(float(t), w_knots))
            np.testing.assert_allclose(vals, expect, rtol=0.0, atol=0.0)

    def test_outside_t_hull(self):
        tab = Tabulated.from_surface(Linear(1.0), [0.0, 1.0], [0.0, 1.0, 2.0])
        with pytest.raises(OutOfDomainError):
            tab.value(3.0, 1.0)

    def test_constant_extrapolation_in_w(self):
        tab = Tabulated.from_surface(Linear(1.0), [0.0, 1.0], [0.0, 1.0, 2.0])
        assert float(tab.value(0.5, 5.0)) == pytest.approx(2.0)

    def test_knot_validation(self):
        with pytest.raises(ValueError):
            Tabulated([0.0, 0.0], [0.0, 1.0], np.zeros((2, 2)))

    def test_csv_round_trip(self, tmp_path):
        base = Linear(0.7)
        tab = Tabulated.from_surface(base, [0.0, 2.0], np.linspace(0.0, 3.0, 7))
        path = tmp_path / "surface.csv"
        tab.to_csv(path)
        back = Tabulated.from_csv(path)
        np.testing.assert_array_equal(back.values, tab.values)
        np.testing.assert_array_equal(back.w_knots, tab.w_knots)

    def test_csv_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n0,0,0\n", encoding="utf-8")
        with pytest.raises(ValueError):
            Tabulated.from_csv(path)


class TestStrategyPair:
    def test_cap_overlay(self):
        pair = StrategyPair(
            CubicBounded(r=0.5, sigma=0.25, beta=0.1),
            LogisticBounded(),
            wealth_bound=1.0,
        )
        assert float(pair.pi(0.0, 1.5)) == 0.0
        assert float(pair.c(0.0, 1.5)) == pytest.approx(0.5)  # = r, the cap value
        assert float(pair.pi(0.0, 0.5)) == pytest.approx(0.25)

    def test_missing_investment(self):
        pair = StrategyPair(Linear(0.1))
        with pytest.raises(ValueError):
            pair.pi(0.0, 1.0)

    def test_unbounded_passthrough(self):
        pair = StrategyPair(Linear(0.1), Linear(0.5))
        assert float(pair.c(0.0, 2.0)) == pytest.approx(0.2)
        assert float(pair.pi(0.0, 2.0)) == pytest.approx(1.0)
