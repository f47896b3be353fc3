"""Risk-attitude classification in the stochastic setting.

Two independent routes: directly from the strategy pair via the
absolute-risk-aversion formula rho = theta/(sigma*pi(t, Y(t,c))) * Y_c(t,c),
and from a recovered utility via rho = -u_cc/u_c.  Verdicts are uniform sign
patterns of an inequality margin over a probe grid, with a tolerance band for
the boundary (constant) cases.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NotBracketedError, OutOfRangeError, SaturatedError
from .market import MarketParams, StrategyPair
from .numerics import invert_monotone

DARA = "DARA"
CARA = "CARA"
IARA = "IARA"
DRRA = "DRRA"
IRRA = "IRRA"
CONSTANT_RRA = "CONSTANT_RRA"
MIXED = "MIXED"


@dataclass(frozen=True)
class RiskVerdict:
    """Sign-pattern verdict with the witnessing margins."""

    verdict: str
    min_margin: float
    max_margin: float
    n_probes: int
    tol: float


def classify_sign_pattern(
    margins: Sequence[float],
    tols: Sequence[float],
    pos_label: str,
    neg_label: str,
    zero_label: str,
) -> RiskVerdict:
    """Uniform-sign classification of margins with a per-probe tolerance band."""
    margins = np.asarray(margins, dtype=float)
    tols = np.asarray(tols, dtype=float)
    tol = float(np.max(tols))
    lo = float(np.min(margins))
    hi = float(np.max(margins))
    if np.all(np.abs(margins) <= tols):
        verdict = zero_label
    elif np.all(margins >= -tols):
        verdict = pos_label
    elif np.all(margins <= tols):
        verdict = neg_label
    else:
        verdict = MIXED
    return RiskVerdict(verdict, lo, hi, margins.size, tol)


@dataclass
class RiskProfile:
    """Sampled absolute risk aversion plus the classification that produced it."""

    t: np.ndarray
    c: np.ndarray
    rho: np.ndarray
    margins: np.ndarray
    verdict: RiskVerdict
    route: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "c", "rho", "margin"])
            for row in zip(self.t, self.c, self.rho, self.margins):
                writer.writerow([repr(float(v)) for v in row])

    def verdict_json(self) -> str:
        return json.dumps(
            {
                "verdict": self.verdict.verdict,
                "route": self.route,
                "min_margin": self.verdict.min_margin,
                "max_margin": self.verdict.max_margin,
                "n_probes": self.verdict.n_probes,
                "tol": self.verdict.tol,
            },
            sort_keys=True,
        )


def wealth_of_consumption(pair: StrategyPair, t: float, c: float, tol: float = 1e-12) -> float:
    """Y(t, c): invert the consumption rule in wealth at fixed t."""
    if c == 0.0:
        return 0.0
    if c < 0.0:
        raise OutOfRangeError("consumption must be non-negative")
    wb = pair.wbar(t)
    hi = min(1.0, 0.5 * wb) if math.isfinite(wb) else 1.0
    # expand the upper end; approach a finite cap geometrically
    for _ in range(200):
        if float(pair.c(t, hi)) > c:
            break
        hi = 0.5 * (hi + wb) if math.isfinite(wb) else 2.0 * hi
        if math.isfinite(wb) and wb - hi < 1e-13 * wb:
            raise OutOfRangeError(f"consumption {c} at or above the frontier at t={t}")
    else:
        raise NotBracketedError(f"could not bracket consumption {c} at t={t}")
    lo = hi
    for _ in range(2000):
        lo *= 0.5
        if float(pair.c(t, lo)) < c:
            break
    return invert_monotone(lambda w: float(pair.c(t, w)), c, (lo, hi), tol=tol)


def rho_from_strategy(pair: StrategyPair, market: MarketParams, t: float, c: float) -> float:
    """rho(t, c) = theta / (sigma * pi(t, Y(t,c))) * Y_c(t,c)."""
    w = wealth_of_consumption(pair, t, c)
    cw = pair.c_partial(t, w, "w")
    piv = float(pair.pi(t, w))
    return market.theta / (market.sigma * piv) * (1.0 / cw)


def rho_from_utility(recovered, t: float, c: float, rel_step: float = 1e-4) -> float:
    """rho(t, c) = -u_cc / u_c with u_cc by finite differences on recovered u_c.

    Raises SaturatedError when u_c is numerically zero (beyond the satiation
    level).
    """
    uc = float(recovered.uc(t, c))
    if uc <= 1e-12:
        raise SaturatedError(f"u_c ~ 0 at (t={t}, c={c})")
    h = rel_step * max(abs(c), 1e-3)
    up = float(recovered.uc(t, c + h))
    dn = float(recovered.uc(t, c - h))
    ucc = (up - dn) / (2.0 * h)
    return -ucc / uc


def default_probe_grid(
    pair: StrategyPair,
    ts: Sequence[float] = (0.1, 1.0, 5.0),
    n_c: int = 20,
    c_lo_frac: float = 0.05,
    c_hi_frac: float = 0.95,
    w_span: tuple[float, float] = (0.1, 10.0),
) -> list[tuple[float, float]]:
    """Tensor probe grid t x c.

    When consumption saturates at a finite level the c-range spans
    [c_lo_frac, c_hi_frac] of it; otherwise it is taken from consumption at a
    fixed wealth span.
    """
    probes = []
    for t in ts:
        wb = pair.wbar(t)
        if math.isfinite(wb):
            cbar = float(pair.c(t, wb))
        else:
            c_big = float(pair.c(t, 1e6))
            c_bigger = float(pair.c(t, 2e6))
            cbar = c_bigger if (c_bigger - c_big) <= 1e-6 * max(1.0, c_big) else math.inf
        if math.isfinite(cbar):
            cs = np.geomspace(c_lo_frac * cbar, c_hi_frac * cbar, n_c)
        else:
            c_lo = float(pair.c(t, w_span[0]))
            c_hi = float(pair.c(t, w_span[1]))
            cs = np.geomspace(max(c_lo, 1e-12), c_hi, n_c)
        probes.extend((float(t), float(cv)) for cv in cs)
    return probes


def _margin_tol(*terms: float) -> float:
    return 1e-6 * max(1.0, *(abs(x) for x in terms))


def classify_dara_stoch(
    pair: StrategyPair,
    market: MarketParams,
    probe_grid: Sequence[tuple[float, float]] | None = None,
) -> RiskProfile:
    """DARA test from the strategies alone.

    The margin pi_w/pi + c_ww/c_w is >= 0 exactly when absolute risk aversion
    is non-increasing in consumption; uniformly positive margins give DARA,
    uniformly negative IARA, and margins inside the tolerance band CARA.
    """
    probes = probe_grid if probe_grid is not None else default_probe_grid(pair)
    ts, cs, rhos, margins, tols = [], [], [], [], []
    for t, c in probes:
        w = wealth_of_consumption(pair, t, c)
        piv = float(pair.pi(t, w))
        pw = pair.pi_partial(t, w, "w")
        cw = pair.c_partial(t, w, "w")
        cww = pair.c_partial(t, w, "ww")
        m_pi = pw / piv
        m_c = cww / cw
        margins.append(m_pi + m_c)
        tols.append(_margin_tol(m_pi, m_c))
        ts.append(t)
        cs.append(c)
        rhos.append(market.theta / (market.sigma * piv * cw))
    verdict = classify_sign_pattern(margins, tols, pos_label=DARA, neg_label=IARA, zero_label=CARA)
    return RiskProfile(
        np.array(ts), np.array(cs), np.array(rhos), np.array(margins), verdict,
        route="strategy-criterion",
    )


def classify_drra(
    pair: StrategyPair,
    market: MarketParams,
    probe_grid: Sequence[tuple[float, float]] | None = None,
) -> RiskProfile:
    """DRRA test: d/dw log(c/c_w) <= d/dw log(pi) over the probes.

    Equality margins within tolerance give a constant relative risk aversion
    verdict.
    """
    probes = probe_grid if probe_grid is not None else default_probe_grid(pair)
    ts, cs, rhos, margins, tols = [], [], [], [], []
    for t, c in probes:
        w = wealth_of_consumption(pair, t, c)
        piv = float(pair.pi(t, w))
        pw = pair.pi_partial(t, w, "w")
        cv = float(pair.c(t, w))
        cw = pair.c_partial(t, w, "w")
        cww = pair.c_partial(t, w, "ww")
        lhs = cw / cv - cww / cw  # d/dw log(c/c_w)
        rhs = pw / piv
        margins.append(rhs - lhs)
        tols.append(_margin_tol(lhs, rhs))
        ts.append(t)
        cs.append(c)
        rhos.append(market.theta / (market.sigma * piv * cw))
    verdict = classify_sign_pattern(
        margins, tols, pos_label=DRRA, neg_label=IRRA, zero_label=CONSTANT_RRA
    )
    return RiskProfile(
        np.array(ts), np.array(cs), np.array(rhos), np.array(margins), verdict,
        route="strategy-criterion",
    )


def profile_from_utility(
    recovered,
    probe_grid: Sequence[tuple[float, float]],
) -> RiskProfile:
    """Sample rho from a recovered utility and classify its c-slope by FD."""
    ts, cs, rhos = [], [], []
    for t, c in probe_grid:
        ts.append(t)
        cs.append(c)
        rhos.append(rho_from_utility(recovered, t, c))
    ts_a = np.array(ts)
    cs_a = np.array(cs)
    rhos_a = np.array(rhos)
    margins = []
    tols = []
    for t, c, rho in zip(ts_a, cs_a, rhos_a):
        h = 1e-3 * max(abs(c), 1e-3)
        rho_up = rho_from_utility(recovered, t, c + h)
        rho_dn = rho_from_utility(recovered, t, c - h)
        slope = (rho_up - rho_dn) / (2.0 * h)
        margins.append(-slope)  # positive margin = decreasing rho = DARA
        tols.append(1e-4 * max(1.0, abs(rho) / max(c, 1e-6)))
    verdict = classify_sign_pattern(margins, tols, pos_label=DARA, neg_label=IARA, zero_label=CARA)
    return RiskProfile(ts_a, cs_a, rhos_a, np.array(margins), verdict, route="recovered-utility")
