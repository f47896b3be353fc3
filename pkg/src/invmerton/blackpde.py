"""Consistency checking and utility recovery in the Black-Scholes market.

A consumption/investment pair (c, pi) is optimal for some utility exactly
when it satisfies the consistency PDE

    pi_t = -(sigma^2/2) pi^2 pi_ww + (c - r w) pi_w - pi c_w + r pi,

equivalently, in integrated form, when

    int_ref^w pi_t/pi^2 dxi + (sigma^2/2) pi_w + c/pi - r w/pi

is flat in w; its common value beta(t) feeds the discount exponent

    A(t) = -(theta/sigma) int_0^t beta(s) ds + (theta^2/2 - r) t

and the marginal utility of wealth

    F(t, w) = exp(A(t)) * exp(-(theta/sigma) int_ref^w dxi / pi(t, xi)).

With Y(t, .) the inverse of c(t, .), the recovered marginal utility is
u_c(t, c) = F(t, Y(t, c)); H integrates it in consumption from a base level
and h(t) = E[H(t, c(t, W_t))] normalises the additive freedom.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    InconsistentPairError,
    NotTimeHomogeneousError,
    OutOfRangeError,
    SingularIntegrandError,
)
from .market import MarketParams, StrategyPair, StrategySurface, TimehomConsumption
from .numerics import Grid1D, invert_monotone, quad
from .risk import wealth_of_consumption


def _require_theta(market: MarketParams) -> None:
    if market.theta <= 0.0:
        raise ValueError("recovery machinery requires a strictly positive Sharpe ratio")


# ---------------------------------------------------------------------------
# residual and beta extraction

def black_residual(
    pair: StrategyPair,
    market: MarketParams,
    t: float,
    w: float,
    return_scale: bool = False,
):
    """Pointwise consistency residual; zero for pairs optimal for some utility.

    residual = pi_t + (sigma^2/2) pi^2 pi_ww - (c - r w) pi_w + pi c_w - r pi.
    """
    piv = float(pair.pi(t, w))
    pi_t = pair.pi_partial(t, w, "t")
    pi_w = pair.pi_partial(t, w, "w")
    pi_ww = pair.pi_partial(t, w, "ww")
    cv = float(pair.c(t, w))
    c_w = pair.c_partial(t, w, "w")
    terms = (
        pi_t,
        0.5 * market.sigma**2 * piv * piv * pi_ww,
        -(cv - market.r * w) * pi_w,
        piv * c_w,
        -market.r * piv,
    )
    residual = sum(terms)
    if return_scale:
        return residual, max(1.0, *(abs(x) for x in terms))
    return residual


def extract_beta(
    pair: StrategyPair,
    market: MarketParams,
    t: float,
    w_grid: Grid1D | np.ndarray,
    ref: float = 1.0,
) -> tuple[float, float]:
    """Evaluate the integrated-form left-hand side over w; return (mean, stdev).

    For a consistent pair the LHS is flat in w, the mean is beta(t) and the
    stdev is numerical noise.
    """
    ws = w_grid.nodes() if isinstance(w_grid, Grid1D) else np.asarray(w_grid, float)
    inv = pair.investment
    time_hom = inv is not None and inv.time_homogeneous
    vals = []
    for w in ws:
        piv = float(pair.pi(t, w))
        if piv <= 0.0:
            raise SingularIntegrandError(f"pi(t={t}, w={w}) = {piv} <= 0")
        lhs = (
            0.5 * market.sigma**2 * pair.pi_partial(t, w, "w")
            + float(pair.c(t, w)) / piv
            - market.r * w / piv
        )
        if not time_hom:
            lhs += quad(
                lambda xi: pair.pi_partial(t, xi, "t") / float(pair.pi(t, xi)) ** 2,
                ref,
                w,
                tol=1e-10,
            )
        vals.append(lhs)
    vals = np.asarray(vals)
    return float(np.mean(vals)), float(np.std(vals))


@dataclass
class ConsistencyReport:
    """Residual/flatness evidence for the consistency verdict."""

    residuals: list[tuple[float, float, float, float]]  # (t, w, residual, scale)
    betas: list[tuple[float, float, float]]  # (t, beta, flatness)
    verdict: str
    tol_res: float = 1e-6
    tol_flat: float = 1e-6

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent"

    @property
    def max_scaled_residual(self) -> float:
        return max(abs(r) / s for _, _, r, s in self.residuals)

    @property
    def max_flatness(self) -> float:
        return max(f for _, _, f in self.betas)

    def beta_fn(self) -> Callable[[float], float]:
        ts = np.array([b[0] for b in self.betas])
        bs = np.array([b[1] for b in self.betas])
        if bs.size == 1 or np.ptp(bs) <= 1e-12 * max(1.0, np.max(np.abs(bs))):
            const = float(bs[0])
            return lambda t: const
        return lambda t: float(np.interp(t, ts, bs))

    def to_json(self) -> str:
        return json.dumps(
            {
                "verdict": self.verdict,
                "tol_res": self.tol_res,
                "tol_flat": self.tol_flat,
                "max_scaled_residual": self.max_scaled_residual,
                "max_flatness": self.max_flatness,
                "beta": [
                    {"t": t, "beta": b, "flatness": f} for t, b, f in self.betas
                ],
            },
            sort_keys=True,
        )

    def residuals_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "w", "residual"])
            for t, w, r, _ in self.residuals:
                writer.writerow([repr(t), repr(w), repr(r)])


def check_consistency(
    pair: StrategyPair,
    market: MarketParams,
    t_grid: Sequence[float] = (0.1, 1.0, 5.0),
    w_grid: Grid1D | np.ndarray | None = None,
    ref: float = 1.0,
    tol_res: float = 1e-6,
    tol_flat: float = 1e-6,
) -> ConsistencyReport:
    """Residuals at a (t, w) probe lattice plus per-t beta flatness."""
    if w_grid is None:
        hull = min(pair.wbar(t) for t in t_grid)
        hi = 4.0 * ref if not math.isfinite(hull) else ref + 0.9 * (hull - ref)
        ws = np.geomspace(ref / 4.0, hi, 9)
    else:
        ws = w_grid.nodes() if isinstance(w_grid, Grid1D) else np.asarray(w_grid, float)
    residuals = []
    betas = []
    for t in t_grid:
        for w in ws:
            r, s = black_residual(pair, market, t, w, return_scale=True)
            residuals.append((float(t), float(w), float(r), float(s)))
        b, flat = extract_beta(pair, market, t, ws, ref=ref)
        betas.append((float(t), b, flat))
    ok_res = all(abs(r) <= tol_res * s for _, _, r, s in residuals)
    ok_flat = all(f <= tol_flat * max(1.0, abs(b)) for _, b, f in betas)
    verdict = "consistent" if (ok_res and ok_flat) else "inconsistent"
    return ConsistencyReport(residuals, betas, verdict, tol_res, tol_flat)


# ---------------------------------------------------------------------------
# discounting and the marginal utility of wealth

def discount_A(
    beta: float | Callable[[float], float],
    market: MarketParams,
    t: float,
    w0: Callable[[float], float] | None = None,
    w0_prime: Callable[[float], float] | None = None,
    pair: StrategyPair | None = None,
) -> float:
    """A(t) = -(theta/sigma) int_0^t beta + (theta^2/2 - r) t.

    When the integration base w0(t) moves in time the correction
    -int_0^t theta w0'(s) / (sigma pi(s, w0(s))) ds is included.
    """
    _require_theta(market)
    drift = (0.5 * market.theta**2 - market.r) * t
    if t == 0.0:
        return 0.0
    if callable(beta):
        integral = quad(beta, 0.0, t, tol=1e-12)
    else:
        integral = beta * t
    val = -market.theta / market.sigma * integral + drift
    if w0 is not None and w0_prime is not None:
        if pair is None:
            raise ValueError("moving base-point correction needs the pair")
        val -= quad(
            lambda s: market.theta * w0_prime(s) / (market.sigma * float(pair.pi(s, w0(s)))),
            0.0,
            t,
            tol=1e-12,
        )
    return val


def _inv_pi_integral(
    pair: StrategyPair, t: float, a: float, b: float, tol: float = 1e-10
) -> float:
    """int_a^b dxi/pi(t, xi) via a substitution adapted to the wealth range.

    The integrand is singular at 0 (and at a finite cap); integrating in
    log-wealth (logit of w/wbar when capped) keeps it smooth.
    """
    wb = pair.wbar(t)
    if math.isfinite(wb):

        def v_of(x: float) -> float:
            return math.log(x / (wb - x))

        def integrand(v: float) -> float:
            x = wb / (1.0 + math.exp(-v))
            piv = float(pair.pi(t, x))
            if piv <= 0.0:
                raise SingularIntegrandError(f"pi(t={t}, w={x}) = {piv} <= 0")
            return x * (1.0 - x / wb) / piv

    else:

        def v_of(x: float) -> float:
            return math.log(x)

        def integrand(v: float) -> float:
            x = math.exp(v)
            piv = float(pair.pi(t, x))
            if piv <= 0.0:
                raise SingularIntegrandError(f"pi(t={t}, w={x}) = {piv} <= 0")
            return x / piv

    return quad(integrand, v_of(a), v_of(b), tol=tol)


def _inv_pi_integral_capped(
    pair: StrategyPair, t: float, a: float, b: float, cap: float
) -> float:
    """Like _inv_pi_integral but accumulated segment-wise, stopping at `cap`.

    Used by the divergence test, where only "exceeds the threshold" matters
    and the exact value may be astronomically large.
    """
    wb = pair.wbar(t)
    if math.isfinite(wb):
        v_of = lambda x: math.log(x / (wb - x))
        x_of = lambda v: wb / (1.0 + math.exp(-v))
        jac = lambda x: x * (1.0 - x / wb)
    else:
        v_of = lambda x: math.log(x)
        x_of = lambda v: math.exp(v)
        jac = lambda x: x

    def integrand(v: float) -> float:
        x = x_of(v)
        piv = float(pair.pi(t, x))
        if piv <= 0.0:
            raise SingularIntegrandError(f"pi(t={t}, w={x}) = {piv} <= 0")
        return jac(x) / piv

    va, vb = v_of(a), v_of(b)
    n_seg = max(2, int(math.ceil(abs(vb - va))))
    edges = np.linspace(va, vb, n_seg + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += quad(integrand, float(lo), float(hi), tol=1e-6 * max(1.0, cap))
        if total >= cap:
            return total
    return total


def compute_F(
    pair: StrategyPair,
    market: MarketParams,
    A: float | Callable[[float], float],
    t: float,
    w: float,
    ref: float = 1.0,
) -> float:
    """F(t, w) = exp(A(t)) exp(-(theta/sigma) int_ref^w dxi/pi(t, xi))."""
    _require_theta(market)
    a_val = A(t) if callable(A) else float(A)
    integral = _inv_pi_integral(pair, t, ref, w)
    return math.exp(a_val - market.theta / market.sigma * integral)


def invert_F(
    pair: StrategyPair,
    market: MarketParams,
    A: float | Callable[[float], float],
    t: float,
    z: float,
    ref: float = 1.0,
    tol: float = 1e-10,
) -> float:
    """f(t, z): the wealth where F(t, .) equals z.  F is strictly decreasing."""
    if z <= 0.0:
        raise OutOfRangeError("target must be positive")
    wb = pair.wbar(t)

    def F(w: float) -> float:
        return compute_F(pair, market, A, t, w, ref=ref)

    lo = hi = ref if not math.isfinite(wb) else min(ref, 0.5 * wb)
    f_seed = F(lo)
    if f_seed > z:  # need larger wealth (F decreasing)
        for _ in range(400):
            hi = 2.0 * hi if not math.isfinite(wb) else 0.5 * (hi + wb)
            if F(hi) < z:
                break
            if math.isfinite(wb) and wb - hi <= 1e-12 * wb:
                raise OutOfRangeError(f"z={z} below the image of F(t={t}, .)")
        else:
            raise OutOfRangeError(f"z={z} below the image of F(t={t}, .)")
    else:
        for _ in range(400):
            lo *= 0.5
            if F(lo) > z:
                break
            if lo < 1e-300:
                raise OutOfRangeError(f"z={z} above the image of F(t={t}, .)")
    return invert_monotone(F, z, (lo, hi), tol=tol)


# ---------------------------------------------------------------------------
# fast F/f map for time-homogeneous investment surfaces

def _center_anchored_cumsum(cells: np.ndarray, i0: int) -> np.ndarray:
    """Node values of a cumulative integral anchored to zero at node i0.

    Summing outward from the anchor keeps mid-table precision even when the
    integrand blows up towards the grid ends.
    """
    out = np.empty(cells.size + 1)
    out[i0] = 0.0
    out[i0 + 1 :] = np.cumsum(cells[i0:])
    out[:i0] = -np.cumsum(cells[:i0][::-1])[::-1]
    return out


class _HermiteTable:
    """Monotone cubic-Hermite interpolant with exact nodal slopes."""

    def __init__(self, x: np.ndarray, y: np.ndarray, dydx: np.ndarray):
        self.x = x
        self.y = y
        self.d = dydx

    def __call__(self, xq: np.ndarray) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        j = np.clip(np.searchsorted(self.x, xq) - 1, 0, self.x.size - 2)
        h = self.x[j + 1] - self.x[j]
        s = (xq - self.x[j]) / h
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = s * s * (s - 1.0)
        return (
            h00 * self.y[j]
            + h10 * h * self.d[j]
            + h01 * self.y[j + 1]
            + h11 * h * self.d[j + 1]
        )


class WealthDualMap:
    """Tabulated F(t, w) = e^{A(t)} G(w) and its inverse, for time-homogeneous pi.

    The wealth axis is resolved through u = log(w/ref) (unbounded) or the
    logit of w/wbar (bounded), which spreads nodes into both singular ends of
    int dxi/pi.  Cumulative per-cell Simpson plus Hermite interpolation with
    exact slopes keeps the map accurate to ~1e-10 for smooth pi.
    """

    def __init__(
        self,
        pair: StrategyPair,
        market: MarketParams,
        A: Callable[[float], float],
        ref: float = 1.0,
        n_cells: int = 8192,
        span: float = 25.0,
    ):
        _require_theta(market)
        if pair.investment is None or not pair.investment.time_homogeneous:
            raise NotTimeHomogeneousError("fast map requires time-homogeneous pi")
        self.pair = pair
        self.market = market
        self.A = A
        self.ref = ref
        wb = pair.wbar(0.0)
        self.wbar = wb if math.isfinite(wb) else None
        u = np.linspace(-span, span, n_cells + 1)
        if self.wbar is None:
            self._w_of_u = lambda uu: ref * np.exp(uu)
            self._u_of_w = lambda ww: np.log(np.asarray(ww, float) / ref)
            dwdu = lambda uu: ref * np.exp(uu)
        else:
            u0 = math.log(ref / (self.wbar - ref))  # logit offset so that u=0 -> ref
            self._w_of_u = lambda uu: self.wbar / (1.0 + np.exp(-(uu + u0)))
            self._u_of_w = lambda ww: np.log(
                np.asarray(ww, float) / (self.wbar - np.asarray(ww, float))
            ) - u0
            dwdu = lambda uu: self._w_of_u(uu) * (1.0 - self._w_of_u(uu) / self.wbar)
        w_nodes = self._w_of_u(u)
        pi_nodes = np.asarray(pair.pi(0.0, w_nodes), dtype=float)
        if np.any(pi_nodes <= 0.0):
            raise SingularIntegrandError("pi must be positive inside the wealth range")
        g = dwdu(u) / pi_nodes
        um = 0.5 * (u[:-1] + u[1:])
        gm = dwdu(um) / np.asarray(pair.pi(0.0, self._w_of_u(um)), dtype=float)
        cells = (u[1:] - u[:-1]) / 6.0 * (g[:-1] + 4.0 * gm + g[1:])
        I = _center_anchored_cumsum(cells, n_cells // 2)  # u = 0 is the ref node
        self.u = u
        self.w_nodes = w_nodes
        self.I = I
        self._fwd = _HermiteTable(u, I, g)
        self._inv = _HermiteTable(I, u, 1.0 / g)

    def pi_integral(self, w) -> np.ndarray:
        """int_ref^w dxi/pi(xi), valid inside the tabulated range."""
        return self._fwd(self._u_of_w(w))

    def F(self, t: float, w) -> np.ndarray:
        a = self.A(t)
        return np.exp(a - self.market.theta / self.market.sigma * self.pi_integral(w))

    def lam(self, x: float) -> float:
        """Multiplier lambda(x) = F(0, x)."""
        return float(self.F(0.0, x))

    def f(self, t: float, z) -> np.ndarray:
        """Wealth inverse of F(t, .): evaluates f(t, z) for array z."""
        z = np.asarray(z, dtype=float)
        target = (self.A(t) - np.log(z)) * self.market.sigma / self.market.theta
        target = np.clip(target, self.I[0], self.I[-1])
        u = self._inv(target)
        # Newton polish on the Hermite forward map
        for _ in range(2):
            w = self._w_of_u(u)
            resid = self._fwd(u) - target
            piv = np.asarray(self.pair.pi(0.0, w), dtype=float)
            dIdu = w * (1.0 if self.wbar is None else (1.0 - w / self.wbar)) / piv
            u = u - resid / dIdu
            u = np.clip(u, self.u[0], self.u[-1])
        return self._w_of_u(u)

    def f_z(self, t: float, z: float, rel_step: float = 1e-6) -> float:
        h = rel_step * abs(z)
        return float((self.f(t, z + h) - self.f(t, z - h)) / (2.0 * h))


# ---------------------------------------------------------------------------
# full recovery

@dataclass
class RecoveredUtility:
    """Callable bundle for the recovered utility and its ingredients.

    uc(t, c) = F(t, Y(t, c)); H(t, c) integrates uc in consumption from the
    base level c0(t); h(t) (optional, Monte-Carlo) fixes the additive
    normalisation u = H - h.
    """

    pair: StrategyPair
    market: MarketParams
    ref: float
    A: Callable[[float], float]
    beta: Callable[[float], float]
    consistency: ConsistencyReport | None
    consistency_verified: bool
    integrability: str
    cbar: Callable[[float], float] | None
    wbar: Callable[[float], float] | None
    c0: Callable[[float], float]
    dual: WealthDualMap | None = None
    h: object | None = None
    _h_slices: dict = field(default_factory=dict, repr=False)

    def F(self, t: float, w):
        if self.dual is not None:
            return self.dual.F(t, w)
        return compute_F(self.pair, self.market, self.A, t, w, ref=self.ref)

    def f(self, t: float, z):
        if self.dual is not None:
            return self.dual.f(t, z)
        return invert_F(self.pair, self.market, self.A, t, z, ref=self.ref)

    def lam(self, x: float) -> float:
        return float(self.F(0.0, x))

    def Y(self, t: float, c: float) -> float:
        return wealth_of_consumption(self.pair, t, c)

    def uc(self, t: float, c) -> float | np.ndarray:
        if np.ndim(c) == 0:
            return float(self.F(t, self.Y(t, float(c))))
        return np.array([float(self.F(t, self.Y(t, float(cv)))) for cv in np.asarray(c)])

    def uc_inverse(self, t: float, z: float) -> float:
        """I(t, z): consumption with marginal utility z."""
        return float(self.pair.c(t, self.f(t, z)))

    def _cw_vec(self, t: float, w: np.ndarray) -> np.ndarray:
        if self.pair.consumption.has_analytic_w:
            return np.asarray(self.pair.consumption.d_w(t, w), dtype=float)
        return np.array([self.pair.c_partial(t, float(wv), "w") for wv in w])

    def _h_slice(self, t: float):
        # cumulative integral of F * c_w in the dual map's u-coordinate,
        # rebased so that H(t, c0(t)) = 0
        key = round(float(t), 12)
        if key not in self._h_slices:
            if self.dual is None:
                raise NotTimeHomogeneousError("H slices need the fast wealth map")
            u = self.dual.u
            w = self.dual.w_nodes

            def integrand(uu, ww):
                dwdu = ww * (1.0 if self.dual.wbar is None else (1.0 - ww / self.dual.wbar))
                F_vals = np.asarray(self.F(t, ww), dtype=float)
                return F_vals * self._cw_vec(t, ww) * dwdu

            g = integrand(u, w)
            um = 0.5 * (u[:-1] + u[1:])
            gm = integrand(um, self.dual._w_of_u(um))
            cells = (u[1:] - u[:-1]) / 6.0 * (g[:-1] + 4.0 * gm + g[1:])
            Hvals = _center_anchored_cumsum(cells, (u.size - 1) // 2)
            cvals = np.asarray(self.pair.c(t, w), dtype=float)
            # dH/dc = u_c = F at the nodes: Hermite keeps the slice smooth
            F_nodes = np.asarray(self.F(t, w), dtype=float)
            # drop float-tied nodes near a consumption plateau
            keep = np.concatenate([[True], np.diff(cvals) > 0.0])
            table = _HermiteTable(cvals[keep], Hvals[keep], F_nodes[keep])
            cvals = cvals[keep]
            base = float(table(np.asarray(float(self.c0(t)))))
            self._h_slices[key] = (table, base, cvals[0], cvals[-1])
        return self._h_slices[key]

    def H(self, t: float, c) -> float | np.ndarray:
        """H(t, c) = int_{c0(t)}^{c} F(t, Y(t, b)) db."""
        if self.dual is not None:
            table, base, c_lo, c_hi = self._h_slice(t)
            cq = np.clip(np.asarray(c, dtype=float), c_lo, c_hi)
            out = table(cq) - base
            return float(out) if np.ndim(c) == 0 else out
        lo = float(self.c0(t))
        return quad(lambda b: float(self.uc(t, b)), lo, float(c), tol=1e-9)

    def to_json(self, t_samples: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 5.0)) -> str:
        payload = {
            "ref": self.ref,
            "consistency_verified": self.consistency_verified,
            "integrability": self.integrability,
            "A": [{"t": t, "A": self.A(t)} for t in t_samples],
            "beta": [{"t": t, "beta": self.beta(t)} for t in t_samples],
        }
        if self.wbar is not None:
            payload["wbar"] = [{"t": t, "wbar": self.wbar(t)} for t in t_samples]
        if self.cbar is not None:
            payload["cbar"] = [{"t": t, "cbar": self.cbar(t)} for t in t_samples]
        if self.h is not None:
            payload["h"] = [
                {"t": float(t), "h": float(hv), "std_error": float(se)}
                for t, hv, se in zip(self.h.t, self.h.h, self.h.std_error)
            ]
        return json.dumps(payload, sort_keys=True)

    def table_csv(self, path, t_grid: Sequence[float], c_grid: Sequence[float]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "c", "u_c", "H"])
            for t in t_grid:
                for c in c_grid:
                    writer.writerow(
                        [repr(float(t)), repr(float(c)), repr(float(self.uc(t, c))),
                         repr(float(self.H(t, c)))]
                    )


def _saturation_cbar(pair: StrategyPair, t: float) -> float:
    c1 = float(pair.c(t, 1e6))
    c2 = float(pair.c(t, 2e6))
    if c2 - c1 <= 1e-6 * max(1.0, abs(c2)):
        return c2
    return math.inf


def recover_utility(
    pair: StrategyPair,
    market: MarketParams,
    t_grid: Sequence[float] = (0.1, 1.0, 5.0),
    c_grid: Grid1D | None = None,
    ref: float = 1.0,
    c0: float | Callable[[float], float] | None = None,
    mc_config=None,
    force: bool = False,
    consistency: ConsistencyReport | None = None,
    integrability_known: bool | None = None,
    mc_x0: float = 1.0,
) -> RecoveredUtility:
    """Run the inverse pipeline and return the recovered utility bundle.

    Consistency is a theorem precondition: the pair is checked first and an
    InconsistentPairError raised unless `force` is given (the output is then
    flagged as unverified).
    """
    _require_theta(market)
    if pair.investment is None:
        raise ValueError("recovery requires an investment surface")
    if consistency is None:
        consistency = check_consistency(pair, market, t_grid=t_grid, ref=ref)
    verified = consistency.consistent
    if not verified and not force:
        raise InconsistentPairError(
            f"consistency verdict: {consistency.verdict} "
            f"(max scaled residual {consistency.max_scaled_residual:.3g}, "
            f"max flatness {consistency.max_flatness:.3g})"
        )
    beta = consistency.beta_fn()
    const_beta = beta(0.0)
    if all(abs(beta(t) - const_beta) <= 1e-12 * max(1.0, abs(const_beta)) for t in t_grid):
        xi = -market.theta * const_beta / market.sigma + 0.5 * market.theta**2 - market.r
        A = lambda t: xi * t
    else:
        A = lambda t: discount_A(beta, market, t)
    dual = None
    if pair.investment.time_homogeneous:
        dual = WealthDualMap(pair, market, A, ref=ref)
    wbar_fn = None
    if pair.wealth_bound is not None:
        wbar_fn = lambda t: pair.wbar(t)
    cbar_fn = None
    if wbar_fn is not None:
        cbar_fn = lambda t: float(pair.c(t, pair.wbar(t)))
    else:
        sat = _saturation_cbar(pair, t_grid[0])
        if math.isfinite(sat):
            cbar_fn = lambda t: _saturation_cbar(pair, t)
    if c0 is None:
        c0_fn = lambda t: float(pair.c(t, ref))
    elif callable(c0):
        c0_fn = c0
    else:
        c0_fn = lambda t: float(c0)
    if integrability_known is None:
        reg = check_regularity(pair, market)
        integrability = "verified" if reg.applies else "not-verified"
    else:
        integrability = "verified" if integrability_known else "not-verified"
    recovered = RecoveredUtility(
        pair=pair,
        market=market,
        ref=ref,
        A=A,
        beta=beta,
        consistency=consistency,
        consistency_verified=verified,
        integrability=integrability,
        cbar=cbar_fn,
        wbar=wbar_fn,
        c0=c0_fn,
        dual=dual,
    )
    if mc_config is not None:
        from .montecarlo import estimate_h

        recovered.h = estimate_h(
            pair, market, recovered, mc_x0, t_grid, mc_config
        )
    return recovered


# ---------------------------------------------------------------------------
# time-homogeneous forward construction

def timehom_consumption(
    pi: StrategySurface,
    beta: float | Callable[[float], float],
    market: MarketParams,
    warn_grid: np.ndarray | None = None,
) -> TimehomConsumption:
    """Consumption c = r w - (sigma^2/2) pi pi_w + beta(t) pi consistent with pi.

    Warns when the construction produces negative or non-increasing
    consumption on the probe grid (the rule is then not admissible as given).
    """
    if not pi.time_homogeneous:
        raise NotTimeHomogeneousError("construction requires time-homogeneous pi")
    probe_t = 0.0
    surface = TimehomConsumption(pi, beta, market.r, market.sigma)
    # cap the default probe range where exp(-w) style terms underflow to 0
    ws = warn_grid if warn_grid is not None else np.geomspace(1e-3, 50.0, 61)
    vals = np.asarray(surface.value(probe_t, ws), dtype=float)
    grads = np.asarray(surface.d_w(probe_t, ws), dtype=float)
    if np.any(vals < -1e-12):
        warnings.warn(
            "constructed consumption is negative on part of the wealth range",
            stacklevel=2,
        )
    if np.any(grads < -1e-12):
        warnings.warn(
            "constructed consumption is decreasing on part of the wealth range",
            stacklevel=2,
        )
    return surface


# ---------------------------------------------------------------------------
# regularity (sufficient conditions for the dual theorem)

@dataclass
class RegularityReport:
    """Slope bounds of (pi, c) and the sufficient-condition verdicts."""

    delta1: float
    delta2: float
    kappa1: float
    kappa2: float
    condition_a: bool
    condition_b: bool
    shortcut: bool
    pi_integrals_diverge: bool
    time_homogeneous: bool
    delta_tilde_0: float = math.nan  # pi_w limit at w -> 0+
    delta_tilde_inf: float = math.nan  # pi_w limit at w -> infinity

    @property
    def applies(self) -> bool:
        return (
            self.time_homogeneous
            and (self.condition_a or self.condition_b)
            and self.delta1 > 0.0
            and self.kappa1 > 0.0
            and self.pi_integrals_diverge
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "delta1": self.delta1,
                "delta2": self.delta2,
                "kappa1": self.kappa1,
                "kappa2": self.kappa2,
                "condition_a": self.condition_a,
                "condition_b": self.condition_b,
                "shortcut": self.shortcut,
                "pi_integrals_diverge": self.pi_integrals_diverge,
                "time_homogeneous": self.time_homogeneous,
                "applies": self.applies,
            },
            sort_keys=True,
        )


def check_regularity(
    pair: StrategyPair,
    market: MarketParams,
    w_probes: np.ndarray | None = None,
    t_probes: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 5.0),
) -> RegularityReport:
    """Estimate the slope bounds of (pi, c) and evaluate the sufficient conditions.

    delta-limits at the ends of the wealth range use Richardson extrapolation
    of pi_w; divergence of int dxi/pi at both ends is tested through partial
    integrals on a shrinking/growing endpoint sequence.
    """
    inv = pair.investment
    if inv is None:
        raise ValueError("regularity check requires an investment surface")
    if not inv.time_homogeneous:
        return RegularityReport(
            math.nan, math.nan, math.nan, math.nan,
            False, False, False, False, time_homogeneous=False,
        )
    wb = pair.wbar(0.0)
    bounded = math.isfinite(wb)
    if w_probes is None:
        hi = 1e4 if not bounded else wb * (1.0 - 1e-6)
        w_probes = np.geomspace(1e-4, hi, 41)

    def pi_w(w: float) -> float:
        return pair.pi_partial(0.0, w, "w")

    # Richardson limits: linear model in w near 0 and in 1/w near infinity
    h0 = 1e-4
    d_tilde_0 = 2.0 * pi_w(h0) - pi_w(2.0 * h0)
    if bounded:
        # capped rules shut investment at the bound; the lemma's unbounded
        # hypotheses cannot hold, keep the raw slope at the far end
        W = wb * (1.0 - 1e-4)
        d_tilde_inf = pi_w(W)
    else:
        W = 1e4
        d_tilde_inf = 2.0 * pi_w(2.0 * W) - pi_w(W)
    slopes = np.array([pi_w(float(w)) for w in w_probes])
    delta1 = min(d_tilde_0, d_tilde_inf)
    delta2 = max(d_tilde_0, d_tilde_inf)
    c_slopes = []
    for t in t_probes:
        for w in w_probes:
            if w < pair.wbar(t):
                c_slopes.append(pair.c_partial(t, float(w), "w"))
    kappa1 = float(min(c_slopes))
    kappa2 = float(max(c_slopes))
    ratio = market.theta / market.sigma
    condition_a = ratio <= delta1 + 1e-12
    condition_b = (
        delta1 > 0.0
        and delta1 < ratio <= delta2 + 1e-12
        and market.theta * (1.0 - delta2 / delta1) + market.sigma * delta2 > 0.0
    )
    shortcut = delta1 > 0.5 * delta2

    w_mid = 1.0 if not bounded else 0.5 * wb

    def _side_diverges(e_near: float, e_mid: float, e_far: float) -> bool:
        # successive shells of int dxi/pi towards the endpoint: a divergent
        # integral keeps adding at least half the previous shell
        big = 1e6
        try:
            seg1 = _inv_pi_integral_capped(pair, 0.0, min(e_mid, e_near), max(e_mid, e_near), cap=big)
            if seg1 >= big:
                return True
            if seg1 <= 0.0:
                return False
            seg2 = _inv_pi_integral_capped(
                pair, 0.0, min(e_far, e_mid), max(e_far, e_mid), cap=2.0 * seg1
            )
        except SingularIntegrandError:
            return False
        return seg2 >= 0.5 * seg1

    lower = _side_diverges(1e-4 * w_mid, 1e-8 * w_mid, 1e-12 * w_mid)
    if bounded:
        upper = _side_diverges(
            wb - 1e-4 * w_mid, wb - 1e-8 * w_mid, wb - 1e-12 * w_mid
        )
    else:
        upper = _side_diverges(1e4 * w_mid, 1e8 * w_mid, 1e12 * w_mid)
    diverges = lower and upper
    return RegularityReport(
        delta1=float(delta1),
        delta2=float(delta2),
        kappa1=kappa1,
        kappa2=kappa2,
        condition_a=bool(condition_a),
        condition_b=bool(condition_b),
        shortcut=bool(shortcut),
        pi_integrals_diverge=bool(diverges),
        time_homogeneous=True,
        delta_tilde_0=float(d_tilde_0),
        delta_tilde_inf=float(d_tilde_inf),
    )


# ---------------------------------------------------------------------------
# Sharpe-ratio remap

@dataclass
class SharpeRemap:
    """Remapped inverse marginal utility for an alternative Sharpe ratio."""

    theta: float
    theta_hat: float
    mu: float
    I_hat: Callable[[float, float], float]

    def lambda_hat(self, lam: float) -> float:
        return lam ** (self.theta_hat / self.theta)


def sharpe_remap(
    uc_inverse: Callable[[float, float], float],
    market: MarketParams,
    theta_hat: float,
) -> SharpeRemap:
    """I_hat(t, z) = I(t, z^{theta/theta_hat} e^{mu t}).

    mu = (theta/2)(theta - theta_hat) + r (theta/theta_hat - 1); the same
    actions are optimal under the remapped Sharpe ratio for the utility whose
    inverse marginal is I_hat.
    """
    _require_theta(market)
    if theta_hat <= 0.0:
        raise ValueError("theta_hat must be positive")
    theta = market.theta
    mu = 0.5 * theta * (theta - theta_hat) + market.r * (theta / theta_hat - 1.0)

    def I_hat(t: float, z: float) -> float:
        return uc_inverse(t, z ** (theta / theta_hat) * math.exp(mu * t))

    return SharpeRemap(theta=theta, theta_hat=theta_hat, mu=mu, I_hat=I_hat)
