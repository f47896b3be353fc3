import math

import pytest

from invmerton import presets
from invmerton.deterministic import PathFamily
from invmerton.market import MarketParams, Linear, StrategyPair


@pytest.fixture(scope="session")
def crra_stoch():
    return presets.crra_stoch()


@pytest.fixture(scope="session")
def crra_constants():
    return presets.crra_stoch_constants()


@pytest.fixture(scope="session")
def convex_consumption():
    return presets.convex_consumption()


@pytest.fixture(scope="session")
def bounded_wealth():
    return presets.bounded_wealth()


@pytest.fixture(scope="session")
def bounded_consumption():
    return presets.bounded_consumption()


@pytest.fixture(scope="session")
def perturbed_pair():
    return presets.perturbed_crra()


@pytest.fixture(scope="session")
def crra_det_family():
    return PathFamily(presets.crra_det(0.1), horizon=12.0)


@pytest.fixture(scope="session")
def g_log1p_family():
    return PathFamily(presets.g_family_det("log1p"), horizon=6.0)


@pytest.fixture(scope="session")
def g_expsat_family():
    return PathFamily(presets.g_family_det("expsat"), horizon=6.0)


@pytest.fixture(scope="session")
def crra_recovered(crra_stoch):
    from invmerton.blackpde import recover_utility

    pair, market = crra_stoch
    return recover_utility(pair, market)
