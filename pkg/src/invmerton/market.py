"""Market parameters, the state-price density, and strategy surfaces.

A strategy surface is an evaluable map (t, w) -> cash rate (consumption) or
cash amount (investment).  Closed-form families carry analytic partial
derivatives where cheap; everything else falls back to finite differences.
Values are vectorised over `w` (and over `t` where it broadcasts).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OutOfDomainError
from .numerics import fd_partial

ArrayLike = float | np.ndarray


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market: interest rate r, volatility sigma, Sharpe ratio theta.

    theta = 0 is tolerated for drift-free simulation fixtures; the recovery
    machinery requires theta > 0 and enforces it at its own entry points.
    """

    r: float
    sigma: float
    theta: float

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.theta < 0.0:
            raise ValueError("theta must be non-negative")


def state_price_density(
    market: MarketParams, t: ArrayLike, brownian_value: ArrayLike
) -> ArrayLike:
    """Z_t = exp(-r t - theta B_t - theta^2 t / 2)."""
    return np.exp(
        -market.r * np.asarray(t, dtype=float)
        - market.theta * np.asarray(brownian_value, dtype=float)
        - 0.5 * market.theta**2 * np.asarray(t, dtype=float)
    )


class StrategySurface:
    """Base class for consumption/investment surfaces.

    Subclasses set the `has_analytic_*` flags for the derivatives they
    provide and may declare `time_homogeneous` when the value does not
    depend on t.
    """

    kind: str = "abstract"
    time_homogeneous: bool = True
    has_analytic_t: bool = False
    has_analytic_w: bool = False
    has_analytic_ww: bool = False
    has_analytic_www: bool = False

    def value(self, t: float, w: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def d_t(self, t: float, w: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def d_w(self, t: float, w: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def d_ww(self, t: float, w: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def d_www(self, t: float, w: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


def evaluate(surface: StrategySurface, t: float, w: ArrayLike) -> ArrayLike:
    """Evaluate `surface` at (t, w); requires w >= 0."""
    if np.min(w) < 0.0:
        raise OutOfDomainError(f"wealth must be non-negative, got {np.min(w)}")
    return surface.value(t, w)


def partial(surface: StrategySurface, t: float, w: float, which: str) -> float:
    """Partial derivative of the surface: analytic when available, else FD."""
    if which == "t":
        if surface.time_homogeneous:
            return 0.0
        if surface.has_analytic_t:
            return float(surface.d_t(t, w))
    elif which == "w":
        if surface.has_analytic_w:
            return float(surface.d_w(t, w))
    elif which == "ww":
        if surface.has_analytic_ww:
            return float(surface.d_ww(t, w))
    else:
        raise ValueError(f"unknown partial {which!r}")
    return fd_partial(lambda tt, ww: float(surface.value(tt, ww)), (t, w), which)


@dataclass(frozen=True)
class Linear(StrategySurface):
    """value = slope * w.  Covers proportional consumption and investment rules."""

    slope: float
    kind: str = field(default="linear", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True
    has_analytic_www = True

    def value(self, t, w):
        return self.slope * np.asarray(w, dtype=float)

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        return np.full_like(np.asarray(w, dtype=float), self.slope)

    def d_ww(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_www(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def params(self):
        return {"slope": self.slope}


def det_crra(kappa: float) -> Linear:
    """Consumption rule c(t, w) = kappa * w (proportional spend-down)."""
    return Linear(kappa)


@dataclass(frozen=True)
class PowerShift(StrategySurface):
    """value = phi*w + psi*((1+w)^p - 1); concave for psi>0, convex for psi<0."""

    phi: float
    psi: float
    p: float
    kind: str = field(default="power_shift", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True
    has_analytic_www = True

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.phi * w + self.psi * ((1.0 + w) ** self.p - 1.0)

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.phi + self.psi * self.p * (1.0 + w) ** (self.p - 1.0)

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.psi * self.p * (self.p - 1.0) * (1.0 + w) ** (self.p - 2.0)

    def d_www(self, t, w):
        w = np.asarray(w, dtype=float)
        return (
            self.psi
            * self.p
            * (self.p - 1.0)
            * (self.p - 2.0)
            * (1.0 + w) ** (self.p - 3.0)
        )

    def params(self):
        return {"phi": self.phi, "psi": self.psi, "p": self.p}


@dataclass(frozen=True)
class LogisticBounded(StrategySurface):
    """value = max(w*(1-w), 0): investment that shuts off at the wealth cap 1."""

    kind: str = field(default="logistic_bounded", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True
    has_analytic_www = True

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        return np.maximum(w * (1.0 - w), 0.0)

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        return np.where(w < 1.0, 1.0 - 2.0 * w, 0.0)

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        return np.where(w < 1.0, -2.0, 0.0)

    def d_www(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))


@dataclass(frozen=True)
class ExpBounded(StrategySurface):
    """value = 1 - exp(-w): investment saturating at 1 for large wealth."""

    kind: str = field(default="exp_bounded", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True
    has_analytic_www = True

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        return -np.expm1(-w)

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        return np.exp(-np.asarray(w, dtype=float))

    def d_ww(self, t, w):
        return -np.exp(-np.asarray(w, dtype=float))

    def d_www(self, t, w):
        return np.exp(-np.asarray(w, dtype=float))


@dataclass(frozen=True)
class CubicBounded(StrategySurface):
    """Consumption partner of LogisticBounded under the wealth cap 1.

    value = w(r - sigma^2/2 + beta) + w^2(3 sigma^2/2 - beta) - w^3 sigma^2
    for w < 1 and the constant r beyond; continuous at 1.
    """

    r: float
    sigma: float
    beta: float
    kind: str = field(default="cubic_bounded", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True

    def _coeffs(self) -> tuple[float, float, float]:
        return (
            self.r - 0.5 * self.sigma**2 + self.beta,
            1.5 * self.sigma**2 - self.beta,
            -(self.sigma**2),
        )

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        a1, a2, a3 = self._coeffs()
        return np.where(w < 1.0, w * (a1 + w * (a2 + w * a3)), self.r)

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        a1, a2, a3 = self._coeffs()
        return np.where(w < 1.0, a1 + w * (2.0 * a2 + 3.0 * a3 * w), 0.0)

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        a1, a2, a3 = self._coeffs()
        return np.where(w < 1.0, 2.0 * a2 + 6.0 * a3 * w, 0.0)

    def params(self):
        return {"r": self.r, "sigma": self.sigma, "beta": self.beta}


@dataclass(frozen=True)
class LinearPlusExp(StrategySurface):
    """value = kappa*w + alpha*(exp(-a*w) - 1); convex increasing for kappa > a*alpha."""

    kappa: float
    alpha: float
    a: float
    kind: str = field(default="linear_plus_exp", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True
    has_analytic_www = True

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.kappa * w + self.alpha * np.expm1(-self.a * w)

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.kappa - self.alpha * self.a * np.exp(-self.a * w)

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        return self.alpha * self.a**2 * np.exp(-self.a * w)

    def d_www(self, t, w):
        w = np.asarray(w, dtype=float)
        return -self.alpha * self.a**3 * np.exp(-self.a * w)

    def params(self):
        return {"kappa": self.kappa, "alpha": self.alpha, "a": self.a}


@dataclass(frozen=True)
class SqrtQuadExp(StrategySurface):
    """Investment pi(w) = (2/sigma) * sqrt((r-kappa)/2 w^2 + alpha w + (alpha/a)(e^{-aw}-1)).

    Increasing and concave for r > kappa > a*alpha > 0; linear growth at both
    ends of the wealth range.
    """

    kappa: float
    alpha: float
    a: float
    r: float
    sigma: float
    kind: str = field(default="sqrt_quad_exp", init=False)
    time_homogeneous = True
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True

    def _q(self, w):
        return (
            0.5 * (self.r - self.kappa) * w * w
            + self.alpha * w
            + (self.alpha / self.a) * np.expm1(-self.a * w)
        )

    def _q1(self, w):
        return (self.r - self.kappa) * w - self.alpha * np.expm1(-self.a * w)

    def _q2(self, w):
        return (self.r - self.kappa) + self.alpha * self.a * np.exp(-self.a * w)

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        return (2.0 / self.sigma) * np.sqrt(np.maximum(self._q(w), 0.0))

    def d_t(self, t, w):
        return np.zeros_like(np.asarray(w, dtype=float))

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        q = self._q(w)
        return np.where(q > 0.0, self._q1(w) / (self.sigma * np.sqrt(np.abs(q))), np.nan)

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        q = self._q(w)
        rq = np.sqrt(np.abs(q))
        return np.where(
            q > 0.0,
            self._q2(w) / (self.sigma * rq) - self._q1(w) ** 2 / (2.0 * self.sigma * q * rq),
            np.nan,
        )

    def params(self):
        return {
            "kappa": self.kappa,
            "alpha": self.alpha,
            "a": self.a,
            "r": self.r,
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class GFamilyConsumption(StrategySurface):
    """Consumption surfaces generated by wealth paths w(t, x) = G(x t)/t.

    choice "log1p" takes G(z) = log(1+z); choice "expsat" takes
    G(z) = 1 - exp(-z) (wealth then stays below 1/t).  Both are concave with
    G(0) = 0 and G'(0) = 1, giving c(0, w) = w^2/2.
    """

    choice: str
    kind: str = field(default="g_family", init=False)
    time_homogeneous = False
    has_analytic_t = False
    has_analytic_w = True
    has_analytic_ww = True

    def __post_init__(self) -> None:
        if self.choice not in ("log1p", "expsat"):
            raise ValueError(f"unknown G-family choice {self.choice!r}")

    def _s(self, t, w):
        # expsat wealth lives below 1/t; clamp just inside so that solver
        # stage evaluations that overshoot the frontier stay finite
        s = np.asarray(w, dtype=float) * t
        if self.choice == "expsat":
            s = np.minimum(s, 1.0 - 1e-9)
        return s

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        s = self._s(t, w)
        small = np.abs(s) < 1e-3
        ssafe = np.where(small, 0.0, s)
        if self.choice == "log1p":
            # c = (tw + e^{-wt} - 1)/t^2 = w^2/2 - w^3 t/6 + w^4 t^2/24 - ...
            series = w * w * (0.5 + s * (-1.0 / 6.0 + s * (1.0 / 24.0 - s / 120.0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                exact = np.where(small, 1.0, (ssafe + np.expm1(-ssafe)))
                exact = exact * np.where(small, 1.0, w * w / (ssafe * ssafe))
        else:
            # c = w/t + (1-wt) log(1-wt)/t^2 = w^2/2 + w^3 t/6 + w^4 t^2/12 + ...
            series = w * w * (0.5 + s * (1.0 / 6.0 + s * (1.0 / 12.0 + s / 20.0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                exact = np.where(
                    small, 1.0, ssafe + (1.0 - ssafe) * np.log1p(-np.where(small, 0.0, ssafe))
                )
                exact = exact * np.where(small, 1.0, w * w / (ssafe * ssafe))
        return np.where(small, series, exact)

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        s = self._s(t, w)
        small = np.abs(s) < 1e-3
        ssafe = np.where(small, 0.0, s)
        if self.choice == "log1p":
            # c_w = (1 - e^{-wt})/t
            series = w * (1.0 + s * (-0.5 + s * (1.0 / 6.0 - s / 24.0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                exact = np.where(small, 1.0, -np.expm1(-ssafe) * np.where(small, 1.0, w / ssafe))
        else:
            # c_w = -log(1-wt)/t
            series = w * (1.0 + s * (0.5 + s * (1.0 / 3.0 + s / 4.0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                exact = np.where(
                    small, 1.0, -np.log1p(-np.where(small, 0.0, ssafe)) * np.where(small, 1.0, w / ssafe)
                )
        return np.where(small, series, exact)

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        s = self._s(t, w)
        if self.choice == "log1p":
            return np.exp(-s)
        return 1.0 / (1.0 - s)

    def params(self):
        return {"choice": self.choice}


class TimehomConsumption(StrategySurface):
    """Consumption generated from a time-homogeneous investment surface.

    c(t, w) = r w - (sigma^2/2) pi(w) pi_w(w) + beta(t) pi(w).
    """

    kind = "timehom_consumption"
    has_analytic_t = True
    has_analytic_w = True
    has_analytic_ww = True

    def __init__(
        self,
        pi: StrategySurface,
        beta: float | Callable[[float], float],
        r: float,
        sigma: float,
    ):
        if not pi.time_homogeneous:
            raise ValueError("pi must be time-homogeneous")
        if not (pi.has_analytic_w and pi.has_analytic_ww):
            raise ValueError("pi must provide analytic first and second derivatives")
        self.pi = pi
        self.r = r
        self.sigma = sigma
        self._beta_const = None if callable(beta) else float(beta)
        self._beta_fn = beta if callable(beta) else None
        self.time_homogeneous = self._beta_const is not None

    def beta(self, t: float) -> float:
        if self._beta_fn is not None:
            return float(self._beta_fn(t))
        return self._beta_const  # type: ignore[return-value]

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        p = self.pi.value(t, w)
        pw = self.pi.d_w(t, w)
        return self.r * w - 0.5 * self.sigma**2 * p * pw + self.beta(t) * p

    def d_t(self, t, w):
        if self.time_homogeneous:
            return np.zeros_like(np.asarray(w, dtype=float))
        h = max(1e-5, 1e-5 * abs(t))
        if t - h >= 0.0:
            dbeta = (self.beta(t + h) - self.beta(t - h)) / (2.0 * h)
        else:
            dbeta = (self.beta(t + h) - self.beta(t)) / h
        return dbeta * self.pi.value(t, np.asarray(w, dtype=float))

    def d_w(self, t, w):
        w = np.asarray(w, dtype=float)
        p = self.pi.value(t, w)
        pw = self.pi.d_w(t, w)
        pww = self.pi.d_ww(t, w)
        return self.r - 0.5 * self.sigma**2 * (pw * pw + p * pww) + self.beta(t) * pw

    def d_ww(self, t, w):
        w = np.asarray(w, dtype=float)
        p = self.pi.value(t, w)
        pw = self.pi.d_w(t, w)
        pww = self.pi.d_ww(t, w)
        if self.pi.has_analytic_www:
            pwww = self.pi.d_www(t, w)
        else:
            pwww = np.vectorize(
                lambda ww: fd_partial(
                    lambda tt, x: float(self.pi.d_ww(tt, x)), (t, ww), "w"
                )
            )(w)
        return -0.5 * self.sigma**2 * (3.0 * pw * pww + p * pwww) + self.beta(t) * pww

    def params(self):
        return {
            "pi": {"kind": self.pi.kind, **self.pi.params()},
            "beta": self._beta_const if self._beta_const is not None else "callable",
            "r": self.r,
            "sigma": self.sigma,
        }


class Tabulated(StrategySurface):
    """Surface given on a lattice of strictly increasing t- and w-knots.

    Bilinear interpolation inside the hull; constant extrapolation in w
    beyond the outer knots; queries outside the t-hull raise OutOfDomainError.
    """

    kind = "tabulated"
    time_homogeneous = False

    def __init__(self, t_knots, w_knots, values):
        t_knots = np.asarray(t_knots, dtype=float)
        w_knots = np.asarray(w_knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if t_knots.ndim != 1 or w_knots.ndim != 1:
            raise ValueError("knots must be one-dimensional")
        if np.any(np.diff(t_knots) <= 0.0) or np.any(np.diff(w_knots) <= 0.0):
            raise ValueError("knots must be strictly increasing")
        if values.shape != (t_knots.size, w_knots.size):
            raise ValueError("values must have shape (len(t_knots), len(w_knots))")
        self.t_knots = t_knots
        self.w_knots = w_knots
        self.values = values
        self.time_homogeneous = t_knots.size == 1

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        tk = self.t_knots
        if tk.size == 1:
            if abs(t - tk[0]) > 1e-12 * max(1.0, abs(t)):
                raise OutOfDomainError(f"t={t} outside single-knot table at {tk[0]}")
            return np.interp(w, self.w_knots, self.values[0])
        if t < tk[0] - 1e-12 or t > tk[-1] + 1e-12:
            raise OutOfDomainError(f"t={t} outside knot hull [{tk[0]}, {tk[-1]}]")
        j = int(np.clip(np.searchsorted(tk, t, side="right") - 1, 0, tk.size - 2))
        frac = (t - tk[j]) / (tk[j + 1] - tk[j])
        lo = np.interp(w, self.w_knots, self.values[j])
        hi = np.interp(w, self.w_knots, self.values[j + 1])
        return (1.0 - frac) * lo + frac * hi

    @classmethod
    def from_surface(cls, surface: StrategySurface, t_knots, w_knots) -> "Tabulated":
        t_knots = np.asarray(t_knots, dtype=float)
        w_knots = np.asarray(w_knots, dtype=float)
        values = np.stack([np.asarray(surface.value(t, w_knots), dtype=float) for t in t_knots])
        return cls(t_knots, w_knots, values)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["t", "w", "value"]:
                raise ValueError(f"expected header t,w,value in {path}, got {header}")
            rows = [(float(a), float(b), float(c)) for a, b, c in reader]
        ts = np.array(sorted({row[0] for row in rows}))
        ws = np.array(sorted({row[1] for row in rows}))
        values = np.full((ts.size, ws.size), np.nan)
        ti = {t: i for i, t in enumerate(ts)}
        wi = {w: i for i, w in enumerate(ws)}
        for t, w, v in rows:
            values[ti[t], wi[w]] = v
        if np.any(np.isnan(values)):
            raise ValueError(f"{path} does not cover a complete t x w lattice")
        return cls(ts, ws, values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "w", "value"])
            for i, t in enumerate(self.t_knots):
                for j, w in enumerate(self.w_knots):
                    writer.writerow([repr(float(t)), repr(float(w)), repr(float(self.values[i, j]))])


@dataclass(frozen=True)
class StrategyPair:
    """Consumption/investment rule pair, with an optional wealth cap.

    Beyond the cap the investment is zero and consumption continues at its
    boundary value, matching how capped rules extend off the observable
    region.
    """

    consumption: StrategySurface
    investment: StrategySurface | None = None
    wealth_bound: float | Callable[[float], float] | None = None

    def wbar(self, t: float) -> float:
        if self.wealth_bound is None:
            return math.inf
        if callable(self.wealth_bound):
            return float(self.wealth_bound(t))
        return float(self.wealth_bound)

    def c(self, t: float, w: ArrayLike) -> ArrayLike:
        wb = self.wbar(t)
        if math.isinf(wb):
            return self.consumption.value(t, w)
        w = np.asarray(w, dtype=float)
        return self.consumption.value(t, np.minimum(w, wb))

    def pi(self, t: float, w: ArrayLike) -> ArrayLike:
        if self.investment is None:
            raise ValueError("pair has no investment surface")
        wb = self.wbar(t)
        val = self.investment.value(t, np.minimum(np.asarray(w, dtype=float), wb))
        if math.isinf(wb):
            return val
        return np.where(np.asarray(w, dtype=float) >= wb, 0.0, val)

    def c_partial(self, t: float, w: float, which: str) -> float:
        return partial(self.consumption, t, w, which)

    def pi_partial(self, t: float, w: float, which: str) -> float:
        if self.investment is None:
            raise ValueError("pair has no investment surface")
        return partial(self.investment, t, w, which)
