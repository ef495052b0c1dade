"""Command-line front end.

    riskbounds price  --config exp.json [--out-dir DIR]
    riskbounds sweep  --config exp.json --param gamma --values 0.01,1,100 [--out-dir DIR]
    riskbounds verify --config exp.json

Exit codes: 0 success, 1 failed invariant (verify), 2 price-chain violation,
3 invalid configuration or model.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .bsde import LEGS, SchemeError, check_monotone, quadruple_kinds, solve_terminal, PriceQuadruple
from .config import ConfigError, ExperimentConfig, load_config
from .lattice import terminal_values
from .market import MarketError
from .oracle import (OracleError, black_scholes_call, constant_scenario_bound, tilted_dp)
from .penalty import PenaltyError
from .verify import run_suite

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CHAIN = 2
EXIT_INVALID = 3

ORACLE_STEPS = 6
SWEEP_PARAMS = ("gamma", "u", "N")



def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n",
                    encoding="utf-8", newline="\n")


def _build(cfg: ExperimentConfig):
    try:
        model = cfg.build_model()
        lattice = cfg.build_lattice()
        check_monotone(model, lattice)
    except MarketError as exc:
        raise cfg.error(str(exc), "model.u" if "EMM" in str(exc) else "model.sigma") from None
    except SchemeError as exc:
        raise cfg.error(str(exc), "model.N") from None
    return model, lattice, cfg.build_claim(), cfg.build_penalty()


def _solve_legs(cfg, model, lattice, terminal, penalty, legs):
    kinds = quadruple_kinds(penalty, cfg.run.hedging)
    return {k: solve_terminal(model, lattice, terminal, kinds[k]) for k in legs}


def _write_prices_csv(path: Path, lattice, sols: dict, max_rows: int) -> dict:
    rows = lattice.total_nodes()
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = _csv_writer(fh)
        if rows <= max_rows:
            w.writerow(["step", "time", "node_coordinates", *(f"p_{k}" for k in LEGS)])
            fh.flush()
            # fields never need quoting (numbers and k1;k2), so rows are joined directly
            for m in range(lattice.steps + 1):
                coords = lattice.coordinates(m).reshape(-1, lattice.dim).tolist()
                head = f"{m},{_fmt(lattice.time(m))},"
                lead = [head + ";".join(map(str, c)) for c in coords]
                cols = [map(repr, sols[k].Y[m].reshape(-1).tolist()) if k in sols
                        else [""] * len(coords) for k in LEGS]
                fh.write("".join(",".join(parts) + "\n" for parts in zip(lead, *cols)))
            return {"file": path.name, "mode": "nodes", "rows": rows}
        header = ["step", "time", "nodes"]
        for k in LEGS:
            header += [f"p_{k}_min", f"p_{k}_max", f"p_{k}_mean"]
        w.writerow(header)
        for m in range(lattice.steps + 1):
            row = [m, _fmt(lattice.time(m)), lattice.node_count(m)]
            for k in LEGS:
                if k in sols:
                    y = sols[k].Y[m]
                    row += [_fmt(y.min()), _fmt(y.max()), _fmt(y.mean())]
                else:
                    row += ["", "", ""]
            w.writerow(row)
        return {"file": path.name, "mode": "slice_summary", "rows": lattice.steps + 1}


def _oracle_deltas(cfg, model, lattice, claim, penalty, prices) -> dict:
    out: dict = {}
    c = cfg.claim
    if model.n == model.d == 1 and c.kind == "call" and c.cap is None and model.constant_sigma:
        bs = black_scholes_call(float(model.s0[0]), c.strike, float(np.linalg.norm(model.sigma[0])),
                                model.horizon)
        out["black_scholes"] = {"value": bs, **{f"delta_{k}": v - bs for k, v in prices.items()}}
    steps = min(ORACLE_STEPS, model.steps)
    try:
        small = model.with_changes(steps=steps)
        small_lat = type(lattice)(steps, lattice.horizon, lattice.dim)
        check_monotone(small, small_lat)
        terminal = terminal_values(small, small_lat, claim)
        points = 101 if model.d - model.n <= 1 else 21
        kinds = quadruple_kinds(penalty, cfg.run.hedging)
        entry = {"steps": steps, "grid_points": points}
        for mode in ("seller", "buyer"):
            dp = tilted_dp(small, small_lat, None, penalty, mode, points, terminal=terminal)
            y = solve_terminal(small, small_lat, terminal, kinds[mode]).y0
            entry[f"{mode}_dp"] = dp
            entry[f"{mode}_bsde"] = y
            entry[f"delta_{mode}"] = dp - y
        const = constant_scenario_bound(small, small_lat, None, penalty, "seller", points,
                                        terminal=terminal)
        entry["seller_constant_scenarios"] = const
        entry["constant_le_adapted"] = bool(const <= entry["seller_dp"] + 1e-12 * (1 + abs(const)))
        out["tilted_dp"] = entry
    except (OracleError, MarketError, SchemeError) as exc:
        out["tilted_dp"] = {"skipped": str(exc)}
    return out


def run_price(cfg: ExperimentConfig, out_dir: Path | None = None) -> tuple[int, dict]:
    t_start = time.perf_counter()
    model, lattice, claim, penalty = _build(cfg)
    out_dir = Path(out_dir if out_dir is not None else cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    terminal = terminal_values(model, lattice, claim)
    t0 = time.perf_counter()
    sols = _solve_legs(cfg, model, lattice, terminal, penalty, cfg.run.drivers)
    t_solve = time.perf_counter() - t0
    prices = {k: sols[k].y0 for k in cfg.run.drivers}

    violations = None
    if cfg.run.chain_check:
        violations = PriceQuadruple(**sols).chain_violations()

    t0 = time.perf_counter()
    csv_info = _write_prices_csv(out_dir / "prices.csv", lattice, sols, cfg.run.max_csv_rows)
    t_csv = time.perf_counter() - t0

    t0 = time.perf_counter()
    oracle = _oracle_deltas(cfg, model, lattice, claim, penalty, prices) if cfg.run.oracle_checks else None
    t_oracle = time.perf_counter() - t0

    summary = {
        "config": cfg.to_dict(),
        "lattice": {"steps": lattice.steps, "dim": lattice.dim, "nodes": lattice.total_nodes()},
        "prices_t0": prices,
        "chain_checked": cfg.run.chain_check,
        "chain_violations": violations,
        "oracle": oracle,
        "csv": csv_info,
        "timings_file": "timings.json",
    }
    _write_json(out_dir / "summary.json", summary)
    # wall-clock numbers live in their own file so summary.json stays reproducible
    _write_json(out_dir / "timings.json", {
        "backend": kernels.BACKEND, "solve_s": t_solve, "csv_s": t_csv, "oracle_s": t_oracle,
        "total_s": time.perf_counter() - t_start})
    code = EXIT_CHAIN if violations else EXIT_OK
    return code, summary


def _parse_values(text: str, param: str) -> list:
    values = []
    for part in text.split(","):
        part = part.strip()
        try:
            x = float(part)
        except ValueError:
            raise ConfigError(f"--values: {part!r} is not a decimal number", None, "sweep") from None
        if not math.isfinite(x):
            raise ConfigError("--values: must be finite", None, "sweep")
        if param == "N":
            if x != int(x) or x < 1:
                raise ConfigError(f"--values: N must be a positive integer, got {part}", None, "sweep")
            x = int(x)
        values.append(x)
    if not values:
        raise ConfigError("--values: empty list", None, "sweep")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("--values: must be strictly increasing", None, "sweep")
    return values


def _sweep_variant(cfg: ExperimentConfig, param: str, value) -> ExperimentConfig:
    if param == "gamma":
        if cfg.penalty.kind != "quadratic":
            raise cfg.error("sweep over gamma needs a quadratic penalty", "penalty.kind")
        return cfg.replace("penalty", gamma=value)
    if param == "u":
        return cfg.replace("model", u=value)
    return cfg.replace("model", N=value)


def run_sweep(cfg: ExperimentConfig, param: str, values: list,
              out_dir: Path | None = None) -> tuple[int, list[dict]]:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"--param must be one of {', '.join(SWEEP_PARAMS)}", None, "sweep")
    out_dir = Path(out_dir if out_dir is not None else cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m = cfg.model
    bs = None
    if param == "N" and m.n == m.d == 1 and cfg.claim.kind == "call" and cfg.claim.cap is None:
        bs = black_scholes_call(m.s0[0], cfg.claim.strike, abs(m.sigma[0][0]), m.T)

    rows = []
    prev = None
    for value in values:
        variant = _sweep_variant(cfg, param, value)
        try:
            model, lattice, claim, penalty = _build(variant)
        except ConfigError as exc:
            key = {"gamma": "penalty.gamma", "u": "model.u", "N": "model.N"}[param]
            raise cfg.error(f"{param}={value}: {exc.reason}", key) from None
        terminal = terminal_values(model, lattice, claim)
        sols = _solve_legs(variant, model, lattice, terminal, penalty, LEGS)
        p = {k: sols[k].y0 for k in LEGS}
        row = {"value": value, **{f"p_{k}": p[k] for k in LEGS},
               "gap": p["seller"] - p["buyer"],
               "chain_violations": PriceQuadruple(**sols).chain_violations()}
        if param == "gamma":
            row["trend_ok"] = None if prev is None else bool(
                row["gap"] >= prev["gap"] - 1e-12 * (1 + abs(prev["gap"]))
                and p["seller"] >= prev["p_seller"] - 1e-12 * (1 + abs(prev["p_seller"]))
                and p["buyer"] <= prev["p_buyer"] + 1e-12 * (1 + abs(prev["p_buyer"])))
        elif param == "u":
            row["trend_ok"] = None if prev is None else bool(
                p["up"] >= prev["p_up"] - 1e-12 * (1 + abs(prev["p_up"])))
        else:
            row["bs_price"] = bs
            row["bs_error"] = None if bs is None else abs(p["seller"] - bs)
            ratio = None
            if bs is not None and prev is not None and row["bs_error"] > 0:
                ratio = prev["bs_error"] / row["bs_error"]
            row["error_ratio"] = ratio
            row["trend_ok"] = None if ratio is None else bool(1.5 <= ratio <= 3.0)
        rows.append(row)
        prev = row

    path = out_dir / f"sweep_{param}.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = _csv_writer(fh)
        header = list(rows[0])
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])
    code = EXIT_CHAIN if any(r["chain_violations"] for r in rows) else EXIT_OK
    return code, rows


def run_verify(cfg: ExperimentConfig, stream=None) -> int:
    stream = stream or sys.stdout
    model, lattice, claim, penalty = _build(cfg)
    results = run_suite(model, lattice, claim, penalty, cfg.run.hedging)
    for r in results:
        print(r.line(), file=stream)
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=stream)
    if any(r.name == "chain" for r in failed):
        return EXIT_CHAIN
    return EXIT_FAILED if failed else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskbounds",
                                description="Hedging and risk-indifference price bounds on a Brownian lattice.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    price = sub.add_parser("price", help="price one configuration")
    price.add_argument("--config", required=True)
    price.add_argument("--out-dir")
    sweep = sub.add_parser("sweep", help="t=0 prices over a parameter grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sweep.add_argument("--values", required=True, help="comma-separated, increasing")
    sweep.add_argument("--out-dir")
    ver = sub.add_parser("verify", help="run the invariant suite")
    ver.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "price":
            code, summary = run_price(cfg, args.out_dir)
            prices = ", ".join(f"{k}={v:.6f}" for k, v in summary["prices_t0"].items())
            print(f"{prices}; chain_violations={summary['chain_violations']}")
            return code
        if args.command == "sweep":
            code, rows = run_sweep(cfg, args.param, _parse_values(args.values, args.param),
                                   args.out_dir)
            for row in rows:
                print(", ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
            return code
        return run_verify(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
