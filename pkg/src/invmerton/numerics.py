"""Self-contained numerical kernel.

Classical RK4 stepping with an optional absorbing floor, adaptive Simpson
quadrature (finite and semi-infinite intervals), bracketed inversion of
monotone functions, centered finite differences, and reproducible Gaussian
increment streams built on the Philox counter-based generator.

All routines are pure functions of their inputs and safe to call from any
number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MaxDepthExceededError, NonFiniteError, NotBracketedError

_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid with `n` nodes on [start, stop]."""

    start: float
    stop: float
    n: int

    def __post_init__(self) -> None:
        if not self.stop > self.start:
            raise ValueError(f"need start < stop, got [{self.start}, {self.stop}]")
        if self.n < 2:
            raise ValueError(f"need at least 2 nodes, got n={self.n}")

    @property
    def spacing(self) -> float:
        return (self.stop - self.start) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n)


@dataclass(frozen=True)
class RngStream:
    """Keyed, portable random stream.

    The pair (master_seed, stream_id) keys a Philox-4x64-10 counter-based
    generator, so the same pair reproduces an identical increment sequence on
    any platform and distinct stream ids give statistically independent
    sequences.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))


def gaussian_increments(stream: RngStream, n_steps: int, dt: float) -> np.ndarray:
    """Draw `n_steps` i.i.d. Normal(0, dt) increments from `stream`."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return stream.generator().standard_normal(n_steps) * math.sqrt(dt)


def integrate_ode(
    rhs: Callable[[float, float], float],
    t0: float,
    y0: float,
    grid: Grid1D,
    floor: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical 4th-order Runge-Kutta solve of y' = rhs(t, y) sampled at grid nodes.

    If `floor` is given and a step would cross it, the state is clamped to the
    floor and held there (absorbing boundary).  Returns (times, values).
    """
    if abs(grid.start - t0) > 1e-12 * max(1.0, abs(t0)):
        raise ValueError("grid.start must equal t0")
    ts = grid.nodes()
    h = grid.spacing
    ys = np.empty(grid.n)
    y = float(y0)
    ys[0] = y
    absorbed = floor is not None and y <= floor
    if absorbed:
        y = floor  # type: ignore[assignment]
        ys[0] = y
    for i in range(grid.n - 1):
        if absorbed:
            ys[i + 1] = floor  # type: ignore[assignment]
            continue
        t = ts[i]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        if not (
            math.isfinite(k1) and math.isfinite(k2) and math.isfinite(k3) and math.isfinite(k4)
        ):
            raise NonFiniteError(f"rhs returned non-finite value near t={t}")
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if floor is not None and y <= floor:
            y = floor
            absorbed = True
        ys[i + 1] = y
    return ts, ys


def _simpson(fa: float, fm: float, fb: float, width: float) -> float:
    return width * (fa + 4.0 * fm + fb) / 6.0


def _adaptive_simpson(f, a, m, b, fa, fm, fb, whole, tol, depth, max_depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    if not (math.isfinite(flm) and math.isfinite(frm)):
        raise NonFiniteError(f"integrand non-finite on [{a}, {b}]")
    left = _simpson(fa, flm, fm, m - a)
    right = _simpson(fm, frm, fb, b - m)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth >= max_depth:
        raise MaxDepthExceededError(
            f"adaptive Simpson exceeded depth {max_depth} on [{a}, {b}]"
        )
    return _adaptive_simpson(
        f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth
    ) + _adaptive_simpson(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth)


def quad(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 48,
) -> float:
    """Adaptive-Simpson estimate of the integral of f over [a, b].

    Absolute error <= tol on smooth integrands; exact (to tol) on cubics.
    Raises MaxDepthExceededError when the recursion limit is hit first.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa = f(a)
    fb = f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    if not (math.isfinite(fa) and math.isfinite(fm) and math.isfinite(fb)):
        raise NonFiniteError(f"integrand non-finite on [{a}, {b}]")
    whole = _simpson(fa, fm, fb, b - a)
    return sign * _adaptive_simpson(f, a, m, b, fa, fm, fb, whole, tol, 0, max_depth)


def quad_to_inf(
    f: Callable[[float], float],
    a: float,
    tol: float = 1e-10,
    cutoff: float | None = None,
    max_depth: int = 48,
) -> float:
    """Integral of f over [a, infinity).

    With `cutoff` given the tail beyond it is dropped (caller asserts it is
    below tolerance).  Otherwise the substitution x = a + (1-u)/u maps the
    tail onto (0, 1]; suitable for integrands decaying at least like x^-2.
    """
    if cutoff is not None:
        return quad(f, a, cutoff, tol, max_depth)

    def g(u: float) -> float:
        x = a + (1.0 - u) / u
        return f(x) / (u * u)

    # open lower endpoint: 1e-12 offset keeps the (vanishing) u=0 limit out
    return quad(g, 1e-12, 1.0, tol, max_depth)


def invert_monotone(
    f: Callable[[float], float],
    target: float,
    bracket: tuple[float, float],
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Solve f(x) = target for strictly monotone f on a bracketing interval.

    Hybrid of secant proposals safeguarded by bisection.  Terminates when
    |f(x) - target| <= tol * max(1, |target|) or the bracket collapses to
    floating-point resolution.  Raises NotBracketedError when the endpoint
    values do not straddle the target.
    """
    lo, hi = bracket
    if lo > hi:
        lo, hi = hi, lo
    flo = f(lo) - target
    fhi = f(hi) - target
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise NonFiniteError("bracket endpoint evaluation is non-finite")
    ftol = tol * max(1.0, abs(target))
    if abs(flo) <= ftol:
        return lo
    if abs(fhi) <= ftol:
        return hi
    if flo * fhi > 0.0:
        raise NotBracketedError(
            f"f({lo})={flo + target} and f({hi})={fhi + target} do not straddle {target}"
        )
    x_prev, f_prev = lo, flo
    x_cur, f_cur = hi, fhi
    best_x, best_f = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        x_new = mid
        if f_cur != f_prev:
            sec = x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
            if lo < sec < hi:
                x_new = sec
        f_new = f(x_new) - target
        if not math.isfinite(f_new):
            raise NonFiniteError(f"f({x_new}) is non-finite")
        if abs(f_new) < abs(best_f):
            best_x, best_f = x_new, f_new
        if abs(f_new) <= ftol:
            return x_new
        if flo * f_new <= 0.0:
            hi, fhi = x_new, f_new
        else:
            lo, flo = x_new, f_new
        x_prev, f_prev = x_cur, f_cur
        x_cur, f_cur = x_new, f_new
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)):
            break
    return best_x


def default_fd_step(x: float, order: int = 1) -> float:
    """Default finite-difference step.

    max(1e-5, 1e-5 |x|) for first derivatives; second derivatives use a
    hundredfold larger step, below which the h^-2 roundoff term dominates.
    """
    scale = 1e-5 if order == 1 else 1e-3
    return max(scale, scale * abs(x))


def fd_partial(
    f: Callable[[float, float], float],
    point: tuple[float, float],
    which: str,
    h: float | None = None,
    lower_bounds: tuple[float, float] = (0.0, 0.0),
) -> float:
    """Finite-difference partial of f(t, w) at `point`.

    `which` is one of "t", "w", "ww".  Central stencils (2nd-order accurate)
    are used in the interior; near the domain lower bound a 2nd-order
    one-sided stencil is substituted.
    """
    t, w = point
    if which not in ("t", "w", "ww"):
        raise ValueError(f"unknown partial {which!r}")
    axis = 0 if which == "t" else 1
    x = t if axis == 0 else w
    lb = lower_bounds[axis]
    if h is None:
        h = default_fd_step(x)

    def g(x_new: float) -> float:
        args = (x_new, w) if axis == 0 else (t, x_new)
        val = f(*args)
        if not math.isfinite(val):
            raise NonFiniteError(f"stencil value non-finite at {args}")
        return val

    if which in ("t", "w"):
        if x - h >= lb:
            return (g(x + h) - g(x - h)) / (2.0 * h)
        return (-3.0 * g(x) + 4.0 * g(x + h) - g(x + 2.0 * h)) / (2.0 * h)
    # second derivative in w
    if x - h >= lb:
        return (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h)
    return (2.0 * g(x) - 5.0 * g(x + h) + 4.0 * g(x + 2.0 * h) - g(x + 3.0 * h)) / (h * h)
