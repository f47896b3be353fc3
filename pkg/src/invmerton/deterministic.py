"""Deterministic inverse problem: recover marginal utility from consumption alone.

The wealth path solves w_t = -c(t, w) from w(0) = x.  Inverting
x -> c(t, w(t, x)) gives y(t, c), and any strictly positive weighting D of
initial wealths with a finite tail integral generates a marginal utility

    u_c(t, c) = integral of D over [y(t, c), infinity).

Risk attitude then follows from the sign of
D'/D + D/tail(D) - (d^2/dx^2 c*)/(d/dx c*) along the paths.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AboveFrontierError,
    NonFiniteError,
    NotBracketedError,
    TailNotNegligibleError,
)
from .market import StrategySurface
from .numerics import Grid1D, invert_monotone
from .risk import CARA, DARA, IARA, RiskVerdict, classify_sign_pattern


# ---------------------------------------------------------------------------
# weighting functions D(x)

@dataclass(frozen=True)
class PowerTail:
    """D(x) = R x^{-R-1}; tail integral x^{-R}."""

    R: float

    def density(self, x):
        return self.R * np.asarray(x, dtype=float) ** (-self.R - 1.0)

    def tail(self, x):
        return np.asarray(x, dtype=float) ** (-self.R)

    def dlog(self, x):
        return -(self.R + 1.0) / np.asarray(x, dtype=float)


@dataclass(frozen=True)
class GaussianWeight:
    """D(x) = x exp(-eta x^2); tail integral exp(-eta x^2)/(2 eta)."""

    eta: float

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return x * np.exp(-self.eta * x * x)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.eta * x * x) / (2.0 * self.eta)

    def dlog(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 / x - 2.0 * self.eta * x


@dataclass(frozen=True)
class ExpWeight:
    """D(x) = exp(-zeta x); tail integral exp(-zeta x)/zeta."""

    zeta: float

    def density(self, x):
        return np.exp(-self.zeta * np.asarray(x, dtype=float))

    def tail(self, x):
        return np.exp(-self.zeta * np.asarray(x, dtype=float)) / self.zeta

    def dlog(self, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, -self.zeta)


class CustomWeight:
    """User-supplied density + tail integral (both required, tail must be finite)."""

    def __init__(
        self,
        density: Callable[[float], float],
        tail: Callable[[float], float],
        dlog: Callable[[float], float] | None = None,
    ):
        self._density = density
        self._tail = tail
        self._dlog = dlog

    def density(self, x):
        return np.vectorize(self._density)(x)

    def tail(self, x):
        return np.vectorize(self._tail)(x)

    def dlog(self, x):
        if self._dlog is not None:
            return np.vectorize(self._dlog)(x)

        def fd(x0: float) -> float:
            h = max(1e-6, 1e-6 * abs(x0))
            return (
                math.log(self._density(x0 + h)) - math.log(self._density(x0 - h))
            ) / (2.0 * h)

        return np.vectorize(fd)(x)


# ---------------------------------------------------------------------------
# wealth paths

@dataclass
class WealthPath:
    """Solved trajectory of w_t = -c(t, w) from initial wealth x0."""

    x0: float
    t: np.ndarray
    w: np.ndarray

    def at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.w))


def solve_wealth_path(
    c: StrategySurface, x0: float, horizon: float, n: int = 2001
) -> WealthPath:
    """RK4 solve of the spend-down ODE with an absorbing floor at zero."""
    if x0 < 0.0:
        raise ValueError("initial wealth must be non-negative")
    ts = np.linspace(0.0, horizon, n)
    ws = _solve_paths(c, np.array([x0]), ts)[0]
    return WealthPath(x0=x0, t=ts, w=ws)


def _solve_paths(c: StrategySurface, x0s: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Vector RK4 across a family of initial wealths, absorbing at zero."""
    n = ts.size
    out = np.empty((x0s.size, n))
    y = x0s.astype(float).copy()
    out[:, 0] = y
    alive = y > 0.0

    def rhs(t, w):
        return -np.asarray(c.value(t, np.maximum(w, 0.0)), dtype=float)

    for i in range(n - 1):
        h = ts[i + 1] - ts[i]
        t = ts[i]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        step = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(step[alive])):
            raise NonFiniteError(f"consumption rhs non-finite near t={t}")
        y = np.where(alive, y + step, 0.0)
        absorbed = y <= 0.0
        y[absorbed] = 0.0
        alive = alive & ~absorbed
        out[:, i + 1] = y
    return out


def budget_exhaustion(
    path: WealthPath,
    c: StrategySurface,
    tail_fraction: float = 0.25,
    tail_limit: float = 0.01,
) -> float:
    """Total consumption along the path relative to x0.

    Quadrature of c(t, w(t)) over the solved horizon plus an exponential-tail
    estimate fitted to the trailing samples.  Raises TailNotNegligibleError
    when the estimated tail exceeds `tail_limit` of x0.
    """
    try:
        cs = np.asarray(c.value(path.t, path.w), dtype=float)
    except (TypeError, ValueError):
        cs = np.array([float(c.value(tv, wv)) for tv, wv in zip(path.t, path.w)])
    integral = float(np.trapezoid(cs, path.t))
    c_end = float(cs[-1])
    tail = 0.0
    if c_end > 1e-300:
        k0 = int((1.0 - tail_fraction) * (cs.size - 1))
        window_t = path.t[k0:]
        window_c = cs[k0:]
        pos = window_c > 0.0
        if pos.sum() >= 2:
            slope = np.polyfit(window_t[pos], np.log(window_c[pos]), 1)[0]
            decay = -slope
            if decay <= 0.0:
                raise TailNotNegligibleError(
                    "trailing consumption is not decaying; cannot bound the tail"
                )
            tail = c_end / decay
    if path.x0 > 0.0 and tail > tail_limit * path.x0:
        raise TailNotNegligibleError(
            f"estimated tail {tail:.3g} exceeds {tail_limit:.0%} of x0={path.x0}"
        )
    if path.x0 == 0.0:
        return 0.0
    return (integral + tail) / path.x0


# ---------------------------------------------------------------------------
# path families and inversion

class PathFamily:
    """Wealth paths over a grid of initial wealths, shared by the inverse ops.

    The x-derivatives of c*(t, w(t, x)) are taken across neighbouring paths
    (local polynomial fits on the log-spaced grid); the inverse y(t, c) is
    bracketed on the family and refined with fresh single-path solves.
    """

    def __init__(
        self,
        consumption: StrategySurface,
        x_grid: np.ndarray | None = None,
        horizon: float = 20.0,
        dt: float = 0.01,
    ):
        self.consumption = consumption
        self.x_grid = (
            np.geomspace(1e-2, 1e2, 201) if x_grid is None else np.asarray(x_grid, float)
        )
        if np.any(np.diff(self.x_grid) <= 0.0) or self.x_grid[0] <= 0.0:
            raise ValueError("x_grid must be positive and strictly increasing")
        self.horizon = horizon
        self.dt = dt
        n = int(round(horizon / dt)) + 1
        self.ts = np.linspace(0.0, horizon, n)
        self.W = _solve_paths(consumption, self.x_grid, self.ts)
        self._check_no_zero_revival()

    def _check_no_zero_revival(self) -> None:
        # wealth paths that stall (zero consumption) at positive wealth and
        # later start consuming again are outside the supported input class
        dW = np.diff(self.W, axis=1)
        for row, drow, x0 in zip(self.W, dW, self.x_grid):
            stalled = (drow == 0.0) & (row[:-1] > 0.0)
            if not stalled.any():
                continue
            first = int(np.argmax(stalled))
            if np.any(drow[first:] < 0.0):
                raise ValueError(
                    f"path from x={x0} has consumption leaving zero; unsupported input"
                )

    def _time_index(self, t: float) -> int:
        i = int(round(t / self.dt))
        if abs(self.ts[min(i, self.ts.size - 1)] - t) > 1e-9:
            raise ValueError(f"probe time {t} is not on the family grid (dt={self.dt})")
        return min(i, self.ts.size - 1)

    def w_at(self, t: float) -> np.ndarray:
        return self.W[:, self._time_index(t)]

    def c_star_at(self, t: float) -> np.ndarray:
        return np.asarray(self.consumption.value(t, self.w_at(t)), dtype=float)

    def solve_single(self, x: float, t: float) -> float:
        """Fresh path from x to time t at the family's step size."""
        if t == 0.0:
            return x
        n = max(2, int(math.ceil(t / self.dt)) + 1)
        ws = _solve_paths(self.consumption, np.array([x]), np.linspace(0.0, t, n))
        return float(ws[0, -1])

    def c_star_single(self, x: float, t: float) -> float:
        return float(self.consumption.value(t, self.solve_single(x, t)))

    def cbar(self, t: float) -> float:
        """Consumption frontier at time t: saturation test by doubling x_max."""
        x_max = self.x_grid[-1]
        c1 = self.c_star_single(x_max, t)
        c2 = self.c_star_single(2.0 * x_max, t)
        if c2 - c1 < 1e-6 * max(1.0, abs(c2)):
            return c2
        return math.inf

    def dx_c_star(self, t: float, x: float, order: int = 1) -> float:
        """d^order/dx^order of c*(t, w(t, x)) by local polynomial fit across paths."""
        cs = self.c_star_at(t)
        return _local_poly_deriv(self.x_grid, cs, x, order)

    def invert(self, t: float, value: float, tol: float = 1e-12) -> float:
        """y(t, value): the unique x with c(t, w(t, x)) = value."""
        if value < 0.0:
            raise AboveFrontierError("consumption must be non-negative")
        if value == 0.0:
            return 0.0
        cb = self.cbar(t)
        if math.isfinite(cb) and value >= cb:
            raise AboveFrontierError(f"value {value} is at/above the frontier {cb} at t={t}")
        cs = self.c_star_at(t)
        if value > cs[-1]:
            raise NotBracketedError(
                f"value {value} above the largest family consumption {cs[-1]}; extend x_grid"
            )
        if value >= cs[0]:
            j = int(np.searchsorted(cs, value))
            lo = self.x_grid[max(j - 1, 0)]
            hi = self.x_grid[min(j, self.x_grid.size - 1)]
        else:
            lo, hi = 1e-12, self.x_grid[0]
        if t == 0.0:
            return invert_monotone(
                lambda x: float(self.consumption.value(0.0, x)), value, (lo, hi), tol=tol
            )
        return invert_monotone(
            lambda x: self.c_star_single(x, t), value, (lo, hi), tol=tol
        )


def _local_poly_deriv(
    xs: np.ndarray, ys: np.ndarray, x0: float, order: int, n_points: int = 7
) -> float:
    """Derivative at x0 from a centered local polynomial fit."""
    j = int(np.clip(np.searchsorted(xs, x0), 0, xs.size - 1))
    half = n_points // 2
    lo = max(0, j - half)
    hi = min(xs.size, lo + n_points)
    lo = max(0, hi - n_points)
    u = xs[lo:hi] - x0
    deg = min(4, u.size - 1)
    coeffs = np.polynomial.polynomial.polyfit(u, ys[lo:hi], deg)
    if order == 1:
        return float(coeffs[1])
    if order == 2:
        return float(2.0 * coeffs[2])
    raise ValueError("order must be 1 or 2")


def invert_consumption(
    c: StrategySurface, family: PathFamily, t: float, value: float
) -> float:
    """y(t, value) through a precomputed path family."""
    return family.invert(t, value)


# ---------------------------------------------------------------------------
# recovery and classification

@dataclass
class DeterministicRecovery:
    """Sampled marginal utility u_c(t, c) and its ingredients at a fixed time."""

    t: float
    c_grid: np.ndarray
    y_of_c: np.ndarray
    uc: np.ndarray
    ucc: np.ndarray
    cbar: float

    @property
    def rho(self) -> np.ndarray:
        return -self.ucc / self.uc

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "c", "y", "u_c", "u_cc", "rho"])
            for c, y, uc, ucc, rho in zip(self.c_grid, self.y_of_c, self.uc, self.ucc, self.rho):
                writer.writerow([repr(float(v)) for v in (self.t, c, y, uc, ucc, rho)])


def recover_marginal_utility(
    c: StrategySurface,
    weight,
    t: float,
    c_grid: Grid1D,
    family: PathFamily | None = None,
) -> DeterministicRecovery:
    """u_c(t, c) = tail integral of D from y(t, c); u_cc through the inverse."""
    family = family if family is not None else PathFamily(c)
    cs = c_grid.nodes()
    ys = np.array([family.invert(t, cv) for cv in cs])
    uc = np.asarray(weight.tail(ys), dtype=float)
    dcdx = np.array([family.dx_c_star(t, y, order=1) for y in ys])
    ucc = -np.asarray(weight.density(ys), dtype=float) / dcdx
    return DeterministicRecovery(
        t=t, c_grid=cs, y_of_c=ys, uc=uc, ucc=ucc, cbar=family.cbar(t)
    )


def classify_risk_det(
    c: StrategySurface,
    weight,
    probes: Sequence[tuple[float, float]],
    family: PathFamily | None = None,
) -> RiskVerdict:
    """Sign of rho_c at probes (t, x): D'/D + D/tail - c*_xx/c*_x.

    Negative everywhere means DARA, positive everywhere IARA, inside the
    tolerance band CARA, otherwise MIXED.  Verdict margins are reported with
    the DARA-positive orientation (margin = -S).
    """
    family = family if family is not None else PathFamily(c)
    margins = []
    tols = []
    for t, x in probes:
        d_part = float(weight.dlog(x)) + float(weight.density(x)) / float(weight.tail(x))
        c1 = family.dx_c_star(t, x, order=1)
        c2 = family.dx_c_star(t, x, order=2)
        s = d_part - c2 / c1
        margins.append(-s)
        tols.append(1e-6 * max(1.0, abs(d_part), abs(c2 / c1)))
    return classify_sign_pattern(margins, tols, pos_label=DARA, neg_label=IARA, zero_label=CARA)
