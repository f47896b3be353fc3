"""Simulation-based verification of the dual optimality conditions.

Euler-Maruyama for the wealth SDE

    dW = pi(t, W) sigma (dB + theta dt) + (r W - c(t, W)) dt,   W_0 = x,

with absorption at zero; the state-price density Z is updated exactly
(log-exponential) from the same Brownian increments, so pathwise comparisons
against the dual representation W_t = f(t, lambda(x) Z_t) isolate the Euler
discretisation error.  Paths are independent with stream_id = path index;
block-structured accumulation keeps every estimate bit-identical for a given
seed regardless of thread count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import TailNotNegligibleError
from .market import MarketParams, StrategyPair
from .numerics import RngStream

_BLOCK = 4096  # fixed path-block size; part of the reproducibility contract


def _n_threads(n_threads: int | None) -> int:
    if n_threads is not None:
        return max(1, n_threads)
    env = os.environ.get("TOOL_THREADS")
    if env:
        return max(1, int(env))
    # numpy already vectorises inside a block; extra Python threads only pay
    # off when opted in via TOOL_THREADS on wide machines
    return 1


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    dt: float
    horizon: float
    master_seed: int = 0
    scheme: str = "euler-maruyama"

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.horizon < self.dt:
            raise ValueError("horizon must be at least dt")
        if self.scheme != "euler-maruyama":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class PathEnsemble:
    """Simulated bundle: wealth W, state-price density Z and Brownian level B."""

    t: np.ndarray
    W: np.ndarray  # (n_paths, n_times)
    Z: np.ndarray
    B: np.ndarray

    def dump_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path_id", "t", "W", "Z"])
            for pid in range(self.W.shape[0]):
                for k, t in enumerate(self.t):
                    writer.writerow(
                        [pid, repr(float(t)), repr(float(self.W[pid, k])), repr(float(self.Z[pid, k]))]
                    )


def _increments_block(master_seed: int, path_ids: np.ndarray, n_steps: int, dt: float) -> np.ndarray:
    out = np.empty((path_ids.size, n_steps))
    root = math.sqrt(dt)
    for row, pid in enumerate(path_ids):
        out[row] = RngStream(master_seed, int(pid)).generator().standard_normal(n_steps) * root
    return out


def _euler_block(
    pair: StrategyPair,
    market: MarketParams,
    x: float,
    ts: np.ndarray,
    dB: np.ndarray,
    keep_paths: bool,
    zc_sum: np.ndarray | None = None,
):
    """Euler-Maruyama over one path block from shared increments.

    Returns (W, Z, integral) where `integral` is the per-path trapezoid of
    Z * c(t, W) dt; W and Z are None unless keep_paths.
    """
    n_paths, n_steps = dB.shape
    dt = ts[1] - ts[0]
    r, sigma, theta = market.r, market.sigma, market.theta
    w = np.full(n_paths, float(x))
    z = np.ones(n_paths)
    integral = np.zeros(n_paths)
    zc_prev = z * np.asarray(pair.c(ts[0], w), dtype=float)
    if zc_sum is not None:
        zc_sum[0] += zc_prev.sum()
    W = Z = None
    if keep_paths:
        W = np.empty((n_paths, n_steps + 1))
        Z = np.empty((n_paths, n_steps + 1))
        W[:, 0] = w
        Z[:, 0] = z
    log_z_step = (-r - 0.5 * theta * theta) * dt
    for k in range(n_steps):
        t = ts[k]
        pi_v = np.asarray(pair.pi(t, w), dtype=float)
        c_v = np.asarray(pair.c(t, w), dtype=float)
        dw = pi_v * sigma * (dB[:, k] + theta * dt) + (r * w - c_v) * dt
        w = np.maximum(w + dw, 0.0)
        z = z * np.exp(log_z_step - theta * dB[:, k])
        zc = z * np.asarray(pair.c(ts[k + 1], w), dtype=float)
        integral += 0.5 * dt * (zc_prev + zc)
        zc_prev = zc
        if zc_sum is not None:
            zc_sum[k + 1] += zc.sum()
        if keep_paths:
            W[:, k + 1] = w
            Z[:, k + 1] = z
    return W, Z, integral


def simulate(
    pair: StrategyPair,
    market: MarketParams,
    x: float,
    cfg: SimConfig,
    n_threads: int | None = None,
) -> PathEnsemble:
    """Full-ensemble simulation (W, Z, B per path).  Sized for analysis runs.

    Memory guard: n_paths * n_steps is capped; use verify_budget for large
    estimation-only runs.
    """
    n_steps = cfg.n_steps
    if cfg.n_paths * (n_steps + 1) > 5e7:
        raise ValueError("ensemble too large to materialise; use verify_budget")
    ts = np.linspace(0.0, cfg.horizon, n_steps + 1)
    W = np.empty((cfg.n_paths, n_steps + 1))
    Z = np.empty((cfg.n_paths, n_steps + 1))
    B = np.empty((cfg.n_paths, n_steps + 1))
    blocks = [
        np.arange(lo, min(lo + _BLOCK, cfg.n_paths))
        for lo in range(0, cfg.n_paths, _BLOCK)
    ]

    def run(ids: np.ndarray) -> None:
        dB = _increments_block(cfg.master_seed, ids, n_steps, cfg.dt)
        Wb, Zb, _ = _euler_block(pair, market, x, ts, dB, keep_paths=True)
        W[ids] = Wb
        Z[ids] = Zb
        B[ids, 0] = 0.0
        B[ids, 1:] = np.cumsum(dB, axis=1)

    workers = _n_threads(n_threads)
    if workers == 1 or len(blocks) == 1:
        for ids in blocks:
            run(ids)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    return PathEnsemble(t=ts, W=W, Z=Z, B=B)


@dataclass
class BudgetReport:
    """Monte-Carlo check of E[int Z_t c_t dt] = x."""

    estimate: float
    std_error: float
    tail: float
    target: float
    verdict: str
    n_paths: int
    horizon: float
    dt: float

    @property
    def total(self) -> float:
        return self.estimate + self.tail

    def to_json(self) -> str:
        return json.dumps(
            {
                "estimate": self.estimate,
                "std_error": self.std_error,
                "tail": self.tail,
                "total": self.total,
                "target": self.target,
                "verdict": self.verdict,
                "n_paths": self.n_paths,
                "horizon": self.horizon,
                "dt": self.dt,
            },
            sort_keys=True,
        )


def verify_budget(
    pair: StrategyPair,
    market: MarketParams,
    x: float,
    cfg: SimConfig,
    n_threads: int | None = None,
    tail_fraction: float = 0.25,
) -> BudgetReport:
    """Estimate E[int_0^T Z c dt], add a fitted exponential tail, gate vs x.

    Pass iff |estimate + tail - x| <= max(3 std errors, 1% of x); raises
    TailNotNegligibleError when the fitted tail exceeds 10% of x.
    """
    n_steps = cfg.n_steps
    ts = np.linspace(0.0, cfg.horizon, n_steps + 1)
    blocks = [
        np.arange(lo, min(lo + _BLOCK, cfg.n_paths))
        for lo in range(0, cfg.n_paths, _BLOCK)
    ]
    sums = np.zeros(len(blocks))
    sq_sums = np.zeros(len(blocks))
    zc_sums = np.zeros((len(blocks), n_steps + 1))

    def run(b: int) -> None:
        ids = blocks[b]
        dB = _increments_block(cfg.master_seed, ids, n_steps, cfg.dt)
        _, _, integral = _euler_block(
            pair, market, x, ts, dB, keep_paths=False, zc_sum=zc_sums[b]
        )
        sums[b] = integral.sum()
        sq_sums[b] = (integral * integral).sum()

    workers = _n_threads(n_threads)
    if workers == 1 or len(blocks) == 1:
        for b in range(len(blocks)):
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(blocks))))
    n = cfg.n_paths
    mean = float(sums.sum() / n)
    var = max(float(sq_sums.sum() / n - mean * mean), 0.0)
    std_error = math.sqrt(var / max(n - 1, 1))
    mean_zc = zc_sums.sum(axis=0) / n
    tail = _fitted_exponential_tail(ts, mean_zc, tail_fraction)
    if tail > 0.10 * x:
        raise TailNotNegligibleError(
            f"fitted tail {tail:.3g} exceeds 10% of x={x}; extend the horizon"
        )
    gate = max(3.0 * std_error, 0.01 * x)
    verdict = "pass" if abs(mean + tail - x) <= gate else "fail"
    return BudgetReport(
        estimate=mean,
        std_error=std_error,
        tail=tail,
        target=x,
        verdict=verdict,
        n_paths=n,
        horizon=cfg.horizon,
        dt=cfg.dt,
    )


def _fitted_exponential_tail(ts: np.ndarray, curve: np.ndarray, fraction: float) -> float:
    """Tail integral beyond ts[-1] from a log-linear fit of the trailing window."""
    end = float(curve[-1])
    if end <= 1e-300:
        return 0.0
    k0 = int((1.0 - fraction) * (curve.size - 1))
    window_t = ts[k0:]
    window_c = curve[k0:]
    pos = window_c > 0.0
    if pos.sum() < 2:
        return 0.0
    slope = np.polyfit(window_t[pos], np.log(window_c[pos]), 1)[0]
    decay = -float(slope)
    if decay <= 0.0:
        raise TailNotNegligibleError("mean discounted consumption is not decaying")
    return end / decay


def dual_wealth(
    pair: StrategyPair,
    market: MarketParams,
    x: float,
    ensemble: PathEnsemble,
    dual=None,
    ref: float = 1.0,
) -> np.ndarray:
    """Per-path dual trajectories f(t, F(0, x) Z_t) on the ensemble's grid."""
    if dual is None:
        from .blackpde import check_consistency, recover_utility

        dual = recover_utility(pair, market, ref=ref).dual
    lam = dual.lam(x)
    out = np.empty_like(ensemble.W)
    for k, t in enumerate(ensemble.t):
        out[:, k] = dual.f(float(t), lam * ensemble.Z[:, k])
    return out


def convergence_study(
    pair: StrategyPair,
    market: MarketParams,
    x: float,
    dual,
    dts: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    horizon: float = 2.0,
    n_paths: int = 100,
    master_seed: int = 7,
) -> list[tuple[float, float]]:
    """Strong error of Euler vs the dual representation across dt levels.

    All levels consume the same Brownian motion (finest increments, coarsened
    by summation).  Returns [(dt, mean over paths of max_t |W_euler - W_dual|)].
    """
    dts = sorted(dts, reverse=True)
    dt_fine = dts[-1]
    factors = [int(round(dt / dt_fine)) for dt in dts]
    for dt, fac in zip(dts, factors):
        if abs(fac * dt_fine - dt) > 1e-12:
            raise ValueError("dt levels must be integer multiples of the finest")
    n_fine = int(round(horizon / dt_fine))
    ids = np.arange(n_paths)
    dB_fine = _increments_block(master_seed, ids, n_fine, dt_fine)
    lam = dual.lam(x)
    results = []
    for dt, fac in zip(dts, factors):
        n_steps = n_fine // fac
        dB = dB_fine[:, : n_steps * fac].reshape(n_paths, n_steps, fac).sum(axis=2)
        ts = np.linspace(0.0, n_steps * dt, n_steps + 1)
        W, Z, _ = _euler_block(pair, market, x, ts, dB, keep_paths=True)
        W_dual = np.empty_like(W)
        for k, t in enumerate(ts):
            W_dual[:, k] = dual.f(float(t), lam * Z[:, k])
        err = float(np.mean(np.max(np.abs(W - W_dual), axis=1)))
        results.append((dt, err))
    return results


@dataclass
class HEstimate:
    """h(t) = E[H(t, c(t, W_t))] sampled on a time grid, with excess diagnostics."""

    t: np.ndarray
    h: np.ndarray
    std_error: np.ndarray
    excess_plus: np.ndarray  # E[(H - h)^+] per node


def estimate_h(
    pair: StrategyPair,
    market: MarketParams,
    recovered,
    x0: float,
    t_grid: Sequence[float],
    cfg: SimConfig,
) -> HEstimate:
    """Monte-Carlo h(t) using the exact dual wealth W_t = f(t, lambda Z_t).

    Sampling W as a functional of Z removes Euler bias; only the Brownian
    level at the grid nodes is needed.
    """
    if recovered.dual is None:
        raise ValueError("estimate_h needs the recovered utility's fast wealth map")
    t_nodes = np.asarray(sorted(set(float(t) for t in t_grid)), dtype=float)
    if t_nodes[0] < 0.0:
        raise ValueError("t_grid must be non-negative")
    lam = recovered.dual.lam(x0)
    n = cfg.n_paths
    samples = np.empty((n, t_nodes.size))
    blocks = [np.arange(lo, min(lo + _BLOCK, n)) for lo in range(0, n, _BLOCK)]
    deltas = np.diff(np.concatenate([[0.0], t_nodes]))
    scale = np.sqrt(deltas)
    for ids in blocks:
        draws = np.empty((ids.size, t_nodes.size))
        for row, pid in enumerate(ids):
            draws[row] = (
                RngStream(cfg.master_seed, int(pid)).generator().standard_normal(t_nodes.size)
            )
        B = np.cumsum(draws * scale, axis=1)
        for j, t in enumerate(t_nodes):
            z = np.exp(
                -market.r * t - market.theta * B[:, j] - 0.5 * market.theta**2 * t
            )
            if t > 0.0:
                w = np.asarray(recovered.dual.f(float(t), lam * z), dtype=float)
            else:
                w = np.full(ids.size, float(x0))
            samples[ids, j] = np.asarray(
                recovered.H(float(t), np.asarray(pair.c(float(t), w), dtype=float)),
                dtype=float,
            )
    h_vals = samples.mean(axis=0)
    se_vals = (
        samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(t_nodes.size)
    )
    ex_vals = np.maximum(samples - h_vals, 0.0).mean(axis=0)
    return HEstimate(t=t_nodes, h=h_vals, std_error=se_vals, excess_plus=ex_vals)


def zw_moments(ensemble: PathEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of Z_t W_t at each grid node."""
    zw = ensemble.Z * ensemble.W
    n = zw.shape[0]
    mean = zw.mean(axis=0)
    se = zw.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, se
