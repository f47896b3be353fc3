"""Command-line front end.

    invmerton <det-recover|black-check|recover|simulate|budget|examples>
              --config <file> [--force] [--out <dir>]

Exit codes: 0 success/pass, 1 domain verdict fail, 2 config error,
3 numerical error.  All artifacts are deterministic for a given config and
seed (sorted JSON keys, repr-formatted floats).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import blackpde, deterministic, montecarlo, risk
from .errors import ConfigError, InconsistentPairError, InverseMertonError
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
    StrategySurface,
    Tabulated,
    TimehomConsumption,
    det_crra,
)
from .numerics import Grid1D
from .presets import EXAMPLE_CONFIGS


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)} in {where}")


def _positive(value, name: str) -> float:
    v = float(value)
    if v <= 0.0:
        raise ConfigError(f"{name} must be positive, got {v}")
    return v


def parse_market(obj: dict) -> MarketParams:
    _require_keys(obj, {"r", "sigma", "theta"}, {"r", "sigma", "theta"}, "market")
    try:
        return MarketParams(r=float(obj["r"]), sigma=float(obj["sigma"]), theta=float(obj["theta"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


_SURFACE_SCHEMAS = {
    "linear": {"slope"},
    "det_crra": {"kappa"},
    "power_shift": {"phi", "psi", "p"},
    "logistic_bounded": set(),
    "exp_bounded": set(),
    "cubic_bounded": {"r", "sigma", "beta"},
    "linear_plus_exp": {"kappa", "alpha", "a"},
    "sqrt_quad_exp": {"kappa", "alpha", "a", "r", "sigma"},
    "g_family": {"choice"},
    "timehom": {"pi", "beta", "r", "sigma"},
    "tabulated": {"path"},
}


def parse_surface(obj: dict, where: str, market: MarketParams | None = None) -> StrategySurface:
    if "kind" not in obj:
        raise ConfigError(f"surface spec in {where} needs a 'kind'")
    kind = obj["kind"]
    if kind not in _SURFACE_SCHEMAS:
        raise ConfigError(f"unknown surface kind {kind!r} in {where}")
    params = {k: v for k, v in obj.items() if k != "kind"}
    allowed = _SURFACE_SCHEMAS[kind]
    _require_keys(params, allowed, allowed - {"r", "sigma"}, f"{where}.{kind}")
    if kind == "linear":
        return Linear(float(params["slope"]))
    if kind == "det_crra":
        return det_crra(float(params["kappa"]))
    if kind == "power_shift":
        return PowerShift(float(params["phi"]), float(params["psi"]), float(params["p"]))
    if kind == "logistic_bounded":
        return LogisticBounded()
    if kind == "exp_bounded":
        return ExpBounded()
    if kind == "cubic_bounded":
        return CubicBounded(float(params["r"]), float(params["sigma"]), float(params["beta"]))
    if kind == "linear_plus_exp":
        return LinearPlusExp(float(params["kappa"]), float(params["alpha"]), float(params["a"]))
    if kind == "sqrt_quad_exp":
        return SqrtQuadExp(
            float(params["kappa"]), float(params["alpha"]), float(params["a"]),
            float(params["r"]), float(params["sigma"]),
        )
    if kind == "g_family":
        return GFamilyConsumption(str(params["choice"]))
    if kind == "timehom":
        pi = parse_surface(params["pi"], f"{where}.pi")
        r = float(params.get("r", market.r if market else 0.0))
        sigma = float(params.get("sigma", market.sigma if market else 0.0))
        if market is None and ("r" not in params or "sigma" not in params):
            raise ConfigError(f"timehom surface in {where} needs r and sigma (no market given)")
        return TimehomConsumption(pi, float(params["beta"]), r, sigma)
    if kind == "tabulated":
        return Tabulated.from_csv(params["path"])
    raise ConfigError(f"unhandled surface kind {kind!r}")  # pragma: no cover


def parse_pair(obj: dict, market: MarketParams | None, need_investment: bool) -> StrategyPair:
    _require_keys(
        obj, {"consumption", "investment", "wealth_bound"}, {"consumption"}, "pair"
    )
    consumption = parse_surface(obj["consumption"], "pair.consumption", market)
    investment = None
    if "investment" in obj and obj["investment"] is not None:
        investment = parse_surface(obj["investment"], "pair.investment", market)
    if need_investment and investment is None:
        raise ConfigError("this command needs pair.investment")
    bound = obj.get("wealth_bound")
    if bound is not None:
        bound = _positive(bound, "wealth_bound")
    return StrategyPair(consumption, investment, wealth_bound=bound)


def parse_grid(obj: dict, where: str) -> Grid1D:
    _require_keys(obj, {"start", "stop", "n"}, {"start", "stop", "n"}, where)
    try:
        return Grid1D(float(obj["start"]), float(obj["stop"]), int(obj["n"]))
    except ValueError as exc:
        raise ConfigError(f"bad grid in {where}: {exc}") from exc


def parse_weight(obj: dict):
    if "kind" not in obj:
        raise ConfigError("weight spec needs a 'kind'")
    kind = obj["kind"]
    if kind == "power_tail":
        _require_keys(obj, {"kind", "R"}, {"kind", "R"}, "weight")
        return deterministic.PowerTail(_positive(obj["R"], "weight.R"))
    if kind == "gaussian":
        _require_keys(obj, {"kind", "eta"}, {"kind", "eta"}, "weight")
        return deterministic.GaussianWeight(_positive(obj["eta"], "weight.eta"))
    if kind == "exponential":
        _require_keys(obj, {"kind", "zeta"}, {"kind", "zeta"}, "weight")
        return deterministic.ExpWeight(_positive(obj["zeta"], "weight.zeta"))
    raise ConfigError(f"unknown weight kind {kind!r}")


def parse_mc(obj: dict) -> montecarlo.SimConfig:
    allowed = {"n_paths", "dt", "horizon", "master_seed", "scheme"}
    _require_keys(obj, allowed, {"n_paths", "dt", "horizon"}, "mc")
    try:
        return montecarlo.SimConfig(
            n_paths=int(obj["n_paths"]),
            dt=float(obj["dt"]),
            horizon=float(obj["horizon"]),
            master_seed=int(obj.get("master_seed", 0)),
            scheme=str(obj.get("scheme", "euler-maruyama")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_json(path: Path, text: str) -> None:
    path.write_text(text + "\n", encoding="utf-8")


def _write_curve_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# commands

def cmd_det_recover(config: dict, out: Path, force: bool) -> int:
    allowed = {
        "pair", "weight", "t_probes", "x_probes", "recover_t", "c_grid",
        "x_grid", "horizon", "out",
    }
    _require_keys(config, allowed, {"pair", "weight"}, "config")
    pair = parse_pair(config["pair"], None, need_investment=False)
    weight = parse_weight(config["weight"])
    t_probes = [float(t) for t in config.get("t_probes", (0.1, 1.0, 5.0))]
    x_probes = [float(x) for x in config.get("x_probes", (0.5, 1.0, 2.0))]
    recover_t = float(config.get("recover_t", 0.0))
    c_grid = parse_grid(config.get("c_grid", {"start": 0.05, "stop": 1.0, "n": 20}), "c_grid")
    horizon = float(config.get("horizon", 20.0))
    family = deterministic.PathFamily(pair.consumption, horizon=horizon)
    recovery = deterministic.recover_marginal_utility(
        pair.consumption, weight, recover_t, c_grid, family=family
    )
    probes = [(t, x) for t in t_probes for x in x_probes]
    verdict = deterministic.classify_risk_det(pair.consumption, weight, probes, family=family)
    recovery.write_csv(out / "recovery.csv")
    _write_json(
        out / "verdict.json",
        json.dumps(
            {
                "verdict": verdict.verdict,
                "min_margin": verdict.min_margin,
                "max_margin": verdict.max_margin,
                "n_probes": verdict.n_probes,
                "tol": verdict.tol,
                "cbar": recovery.cbar if math.isfinite(recovery.cbar) else None,
            },
            sort_keys=True,
        ),
    )
    return 0


def cmd_black_check(config: dict, out: Path, force: bool) -> int:
    allowed = {"market", "pair", "t_probes", "w_grid", "ref", "out"}
    _require_keys(config, allowed, {"market", "pair"}, "config")
    market = parse_market(config["market"])
    pair = parse_pair(config["pair"], market, need_investment=True)
    t_probes = [float(t) for t in config.get("t_probes", (0.1, 1.0, 5.0))]
    ref = float(config.get("ref", 1.0))
    w_grid = None
    if "w_grid" in config:
        w_grid = parse_grid(config["w_grid"], "w_grid").nodes()
    report = blackpde.check_consistency(pair, market, t_grid=t_probes, w_grid=w_grid, ref=ref)
    _write_json(out / "consistency.json", report.to_json())
    report.residuals_csv(out / "residuals.csv")
    return 0 if report.consistent else 1


def cmd_recover(config: dict, out: Path, force: bool) -> int:
    allowed = {
        "market", "pair", "ref", "c0", "t_probes", "x0", "mc",
        "integrability_known", "plot_t", "plot_w", "out",
    }
    _require_keys(config, allowed, {"market", "pair"}, "config")
    market = parse_market(config["market"])
    pair = parse_pair(config["pair"], market, need_investment=True)
    ref = float(config.get("ref", 1.0))
    t_probes = [float(t) for t in config.get("t_probes", (0.1, 1.0, 5.0))]
    mc_cfg = parse_mc(config["mc"]) if "mc" in config else None
    x0 = float(config.get("x0", 1.0))
    known = config.get("integrability_known")
    try:
        recovered = blackpde.recover_utility(
            pair,
            market,
            t_grid=t_probes,
            ref=ref,
            c0=config.get("c0"),
            mc_config=mc_cfg,
            force=force,
            integrability_known=known,
            mc_x0=x0,
        )
    except InconsistentPairError as exc:
        print(f"inconsistent pair: {exc}", file=sys.stderr)
        return 1
    t0 = float(config.get("plot_t", 0.1))
    wb = pair.wbar(t0)
    w_hi = float(config.get("plot_w", 2.0 if not math.isfinite(wb) else wb * (1.0 - 1e-6)))
    ws = np.linspace(w_hi / 200.0, w_hi, 200)
    pis = np.asarray(pair.pi(t0, ws), dtype=float)
    cs = np.asarray(pair.c(t0, ws), dtype=float)
    _write_curve_csv(out / "pane_investment.csv", ["w", "pi"], zip(ws, pis))
    _write_curve_csv(out / "pane_consumption.csv", ["w", "c"], zip(ws, cs))
    rho = [risk.rho_from_strategy(pair, market, t0, float(c)) for c in cs]
    _write_curve_csv(out / "pane_risk_aversion.csv", ["c", "rho"], zip(cs, rho))
    h0 = 0.0
    if recovered.h is not None:
        h0 = float(np.interp(t0, recovered.h.t, recovered.h.h))
    us = np.asarray(recovered.H(t0, cs), dtype=float) - h0
    _write_curve_csv(out / "pane_utility.csv", ["c", "u"], zip(cs, us))
    recovered.table_csv(out / "uc.csv", t_probes, list(cs[:: max(1, cs.size // 40)]))
    _write_json(out / "utility.json", recovered.to_json(t_samples=t_probes))
    return 0


def cmd_simulate(config: dict, out: Path, force: bool) -> int:
    allowed = {"market", "pair", "x0", "mc", "dump_paths", "out"}
    _require_keys(config, allowed, {"market", "pair", "mc"}, "config")
    market = parse_market(config["market"])
    pair = parse_pair(config["pair"], market, need_investment=True)
    cfg = parse_mc(config["mc"])
    x0 = float(config.get("x0", 1.0))
    ensemble = montecarlo.simulate(pair, market, x0, cfg)
    if config.get("dump_paths", False):
        ensemble.dump_csv(out / "ensemble.csv")
    mean_zw, se_zw = montecarlo.zw_moments(ensemble)
    idx = list(range(0, ensemble.t.size, max(1, ensemble.t.size // 50)))
    _write_json(
        out / "simulation.json",
        json.dumps(
            {
                "n_paths": cfg.n_paths,
                "dt": cfg.dt,
                "horizon": cfg.horizon,
                "master_seed": cfg.master_seed,
                "x0": x0,
                "max_wealth": float(ensemble.W.max()),
                "final_mean_zw": float(mean_zw[-1]),
                "zw_curve": [
                    {"t": float(ensemble.t[i]), "mean_zw": float(mean_zw[i]), "se": float(se_zw[i])}
                    for i in idx
                ],
            },
            sort_keys=True,
        ),
    )
    return 0


def cmd_budget(config: dict, out: Path, force: bool) -> int:
    allowed = {"market", "pair", "x0", "mc", "out"}
    _require_keys(config, allowed, {"market", "pair", "mc"}, "config")
    market = parse_market(config["market"])
    pair = parse_pair(config["pair"], market, need_investment=True)
    cfg = parse_mc(config["mc"])
    x0 = float(config.get("x0", 1.0))
    report = montecarlo.verify_budget(pair, market, x0, cfg)
    _write_json(out / "budget.json", report.to_json())
    return 0 if report.verdict == "pass" else 1


def cmd_examples(config: dict, out: Path, force: bool) -> int:
    for name, cfg in EXAMPLE_CONFIGS.items():
        _write_json(out / f"{name}.json", json.dumps(cfg, sort_keys=True))
    return 0


_COMMANDS = {
    "det-recover": cmd_det_recover,
    "black-check": cmd_black_check,
    "recover": cmd_recover,
    "simulate": cmd_simulate,
    "budget": cmd_budget,
    "examples": cmd_examples,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="invmerton",
        description="Inverse Merton toolkit: consistency checks, utility recovery, "
        "risk classification and Monte-Carlo verification.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON job config")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--force", action="store_true", help="proceed past a failed consistency check")
    args = parser.parse_args(argv)

    config: dict = {}
    if args.command != "examples":
        if args.config is None:
            print("--config is required for this command", file=sys.stderr)
            return 2
        try:
            config = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
        if not isinstance(config, dict):
            print("config must be a JSON object", file=sys.stderr)
            return 2
    out = args.out or Path(config.get("out", "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](config, out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InverseMertonError as exc:
        print(f"numerical failure: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
