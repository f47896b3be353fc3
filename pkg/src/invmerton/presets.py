"""Named example fixtures: parameter sets with closed-form expectations.

Each entry builds the (pair, market) objects and also provides the JSON job
config that drives the same computation through the CLI, so the example
gallery stays in one place.
"""

from __future__ import annotations

import math

from .blackpde import timehom_consumption
from .market import (
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
    det_crra,
)


def crra_stoch(kappa=0.1, phi=0.5, r=0.03, sigma=0.2, theta=0.08):
    market = MarketParams(r=r, sigma=sigma, theta=theta)
    pair = StrategyPair(Linear(kappa), Linear(phi))
    return pair, market


def crra_stoch_constants(kappa=0.1, phi=0.5, r=0.03, sigma=0.2, theta=0.08):
    """beta, xi, R for the proportional-rule fixture."""
    beta = (kappa - r) / phi + 0.5 * sigma**2 * phi
    xi = -theta * beta / sigma + 0.5 * theta**2 - r
    R = theta / (phi * sigma)
    return beta, xi, R


def convex_consumption(kappa=0.4, alpha=0.1, a=1.25, r=0.6, sigma=0.25, theta=0.95):
    market = MarketParams(r=r, sigma=sigma, theta=theta)
    pi = SqrtQuadExp(kappa=kappa, alpha=alpha, a=a, r=r, sigma=sigma)
    c = LinearPlusExp(kappa=kappa, alpha=alpha, a=a)
    return StrategyPair(c, pi), market


def bounded_wealth(r=0.5, sigma=0.25, theta=0.7, beta=0.1):
    market = MarketParams(r=r, sigma=sigma, theta=theta)
    pair = StrategyPair(
        CubicBounded(r=r, sigma=sigma, beta=beta), LogisticBounded(), wealth_bound=1.0
    )
    return pair, market


BOUNDED_WEALTH_REF = 0.5


def bounded_consumption(r=0.0, sigma=0.5, theta=0.25, beta=0.3):
    market = MarketParams(r=r, sigma=sigma, theta=theta)
    pi = ExpBounded()
    c = timehom_consumption(pi, beta, market)
    return StrategyPair(c, pi), market


BOUNDED_CONSUMPTION_REF = math.log(2.0)


def nonlinear_power_shift(variant: str):
    """PowerShift investment with timehom consumption; two published parameter sets.

    "convex": pi and c both convex; "concave": both concave with a
    non-monotone risk-aversion profile.
    """
    if variant == "convex":
        r, theta, sigma, beta = 0.3, 0.026, 0.25, 10.0
        phi, psi, p = 2.1, -60.0, 1.0 / 30.0
    elif variant == "concave":
        r, theta, sigma, beta = 0.05, 0.13, 0.25, 10.0
        phi, psi, p = 0.5, 60.0, 0.2
    else:
        raise ValueError(f"unknown variant {variant!r}")
    market = MarketParams(r=r, sigma=sigma, theta=theta)
    pi = PowerShift(phi=phi, psi=psi, p=p)
    c = timehom_consumption(pi, beta, market)
    return StrategyPair(c, pi), market


def crra_det(kappa=0.1):
    return det_crra(kappa)


def g_family_det(choice: str):
    return GFamilyConsumption(choice)


def perturbed_crra(kappa=0.1, phi=0.5, shift=0.1, r=0.03, sigma=0.2, theta=0.08):
    """Inconsistent fixture: linear consumption with a shifted investment rule."""

    market = MarketParams(r=r, sigma=sigma, theta=theta)

    class _Shifted(Linear):
        def value(self, t, w):
            return super().value(t, w) + shift

    pair = StrategyPair(Linear(kappa), _Shifted(phi))
    return pair, market


# ---------------------------------------------------------------------------
# CLI job configs

def _mc_block(n_paths=100_000, dt=1e-2, horizon=60.0, master_seed=2024):
    return {"n_paths": n_paths, "dt": dt, "horizon": horizon, "master_seed": master_seed}


EXAMPLE_CONFIGS: dict[str, dict] = {
    "crra-det": {
        "pair": {"consumption": {"kind": "det_crra", "kappa": 0.1}},
        "weight": {"kind": "power_tail", "R": 2.0},
        "t_probes": [0.1, 1.0, 5.0],
        "x_probes": [0.5, 1.0, 2.0],
        "recover_t": 0.0,
        "c_grid": {"start": 0.05, "stop": 1.0, "n": 20},
    },
    "g-log1p-det": {
        "pair": {"consumption": {"kind": "g_family", "choice": "log1p"}},
        "weight": {"kind": "power_tail", "R": 2.0},
        "t_probes": [0.1, 1.0, 5.0],
        "x_probes": [0.5, 1.0, 2.0],
        "recover_t": 1.0,
        "c_grid": {"start": 0.05, "stop": 0.3, "n": 20},
    },
    "g-expsat-det": {
        "pair": {"consumption": {"kind": "g_family", "choice": "expsat"}},
        "weight": {"kind": "power_tail", "R": 2.0},
        "t_probes": [0.1, 1.0, 5.0],
        "x_probes": [0.5, 1.0, 2.0],
        "recover_t": 1.0,
        "c_grid": {"start": 0.05, "stop": 0.3, "n": 20},
    },
    "crra-stoch": {
        "market": {"r": 0.03, "sigma": 0.2, "theta": 0.08},
        "pair": {
            "consumption": {"kind": "linear", "slope": 0.1},
            "investment": {"kind": "linear", "slope": 0.5},
        },
        "ref": 1.0,
        "x0": 1.0,
        "integrability_known": True,
        "mc": _mc_block(),
    },
    "nonlin-convex-convex": {
        "market": {"r": 0.3, "sigma": 0.25, "theta": 0.026},
        "pair": {
            "consumption": {
                "kind": "timehom",
                "pi": {"kind": "power_shift", "phi": 2.1, "psi": -60.0, "p": 0.03333333333333333},
                "beta": 10.0,
            },
            "investment": {"kind": "power_shift", "phi": 2.1, "psi": -60.0, "p": 0.03333333333333333},
        },
        "ref": 1.0,
        "x0": 1.0,
        "integrability_known": True,
        "mc": _mc_block(horizon=10.0),
    },
    "nonlin-concave-concave": {
        "market": {"r": 0.05, "sigma": 0.25, "theta": 0.13},
        "pair": {
            "consumption": {
                "kind": "timehom",
                "pi": {"kind": "power_shift", "phi": 0.5, "psi": 60.0, "p": 0.2},
                "beta": 10.0,
            },
            "investment": {"kind": "power_shift", "phi": 0.5, "psi": 60.0, "p": 0.2},
        },
        "ref": 1.0,
        "x0": 1.0,
        "integrability_known": True,
        "mc": _mc_block(horizon=10.0),
    },
    "convex-consumption": {
        "market": {"r": 0.6, "sigma": 0.25, "theta": 0.95},
        "pair": {
            "consumption": {"kind": "linear_plus_exp", "kappa": 0.4, "alpha": 0.1, "a": 1.25},
            "investment": {
                "kind": "sqrt_quad_exp",
                "kappa": 0.4,
                "alpha": 0.1,
                "a": 1.25,
                "r": 0.6,
                "sigma": 0.25,
            },
        },
        "ref": 1.0,
        "x0": 1.0,
        "integrability_known": True,
        "mc": _mc_block(horizon=20.0),
    },
    "bounded-wealth": {
        "market": {"r": 0.5, "sigma": 0.25, "theta": 0.7},
        "pair": {
            "consumption": {"kind": "cubic_bounded", "r": 0.5, "sigma": 0.25, "beta": 0.1},
            "investment": {"kind": "logistic_bounded"},
            "wealth_bound": 1.0,
        },
        "ref": 0.5,
        "x0": 0.5,
        "integrability_known": True,
        "mc": _mc_block(horizon=20.0, dt=1e-3, n_paths=2000),
    },
    "bounded-consumption": {
        "market": {"r": 0.0, "sigma": 0.5, "theta": 0.25},
        "pair": {
            "consumption": {"kind": "timehom", "pi": {"kind": "exp_bounded"}, "beta": 0.3},
            "investment": {"kind": "exp_bounded"},
        },
        "ref": BOUNDED_CONSUMPTION_REF,
        "x0": 1.0,
        "integrability_known": True,
        "mc": _mc_block(horizon=40.0),
    },
}
