"""Command-line front end.

Commands: ``price``, ``fair-fee``, ``delta``, ``table``, ``strategy-grid``,
``dump-lattice``, ``dump-paths``.  A run is described by a JSON config file
plus flag overrides (flags win); results are printed as JSON and can be
appended to a CSV with a fixed column order.  Exit codes: 0 ok, 2 config
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict
from typing import Optional

import numpy as np

from . import benchmarks
from .engine import Engine, RunSpec
from .fees import FeeSearchError, SecantConfig
from .lattice import (build_chain_lattice, build_heston_lattice,
                      build_hw_lattice, dump_lattice_csv)
from .models import HestonParams, HullWhiteParams, YieldCurve

CSV_COLUMNS = ["model", "contract", "t1", "t2", "wf", "mode", "method",
               "config", "alpha_bp", "ci_bp", "value", "delta", "runtime_s"]


class ConfigError(ValueError):
    pass


def _need(block: dict, field: str, where: str):
    if field not in block:
        raise ConfigError(f"missing field '{where}.{field}'")
    return block[field]


def _build_params(block: dict):
    kind = _need(block, "type", "model")
    try:
        if kind == "heston":
            return kind, HestonParams(
                s0=float(_need(block, "s0", "model")),
                v0=float(_need(block, "v0", "model")),
                theta=float(_need(block, "theta", "model")),
                k=float(_need(block, "k", "model")),
                omega=float(_need(block, "omega", "model")),
                rho=float(_need(block, "rho", "model")),
                r=float(_need(block, "r", "model")))
        if kind in ("bshw", "bs"):
            if kind == "bs":
                curve = YieldCurve.flat(float(_need(block, "r", "model")))
                return kind, HullWhiteParams(
                    s0=float(_need(block, "s0", "model")),
                    sigma=float(_need(block, "sigma", "model")),
                    k=1.0, omega=0.0, rho=0.0, curve=curve)
            cblock = _need(block, "curve", "model")
            if cblock.get("kind") == "tabulated":
                curve = YieldCurve.tabulated(
                    [(float(t), float(f)) for t, f in
                     _need(cblock, "points", "model.curve")])
            else:
                curve = YieldCurve.flat(float(_need(cblock, "r0", "model.curve")))
            return kind, HullWhiteParams(
                s0=float(_need(block, "s0", "model")),
                sigma=float(_need(block, "sigma", "model")),
                k=float(_need(block, "k", "model")),
                omega=float(_need(block, "omega", "model")),
                rho=float(_need(block, "rho", "model")),
                curve=curve)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model block: {exc}") from exc
    raise ConfigError(f"model.type must be heston, bshw or bs (got {kind!r})")


def _spec_from_config(cfg: dict) -> RunSpec:
    model_kind, params = _build_params(_need(cfg, "model", "config"))
    cblock = _need(cfg, "contract", "config")
    product = _need(cblock, "type", "contract")
    if product not in ("cf", "yd"):
        raise ConfigError(f"contract.type must be cf or yd (got {product!r})")
    method = _need(cfg, "method", "config")
    mode = _need(cfg, "mode", "config")
    resolution = cfg.get("resolution", "B")
    letter, explicit = "B", None
    if isinstance(resolution, str):
        letter = resolution.upper()
    else:
        explicit = tuple(resolution)
    try:
        spec = RunSpec(
            model=model_kind, product=product, mode=mode, method=method,
            t2=float(_need(cblock, "t2", "contract")),
            wf=int(cblock.get("wf", 1)),
            t1=float(cblock.get("t1", 0.0)),
            m=int(cblock.get("m", 1)),
            kappa=float(_need(cblock, "kappa", "contract")),
            premium=float(cblock.get("premium", 100.0)),
            alpha_m=float(cblock.get("alpha_m", 0.0)),
            rollup=float(cblock.get("rollup", 0.0)),
            config=letter,
            degree=cfg.get("degree"),
            algorithm=cfg.get("algorithm", "full"),
            seed=int(cfg.get("seed", 20240901)),
            antithetic=bool(cfg.get("antithetic", False)),
            params=params,
            resolution=explicit)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    # flag overrides
    for key in ("method", "mode", "seed", "degree", "algorithm"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "resolution", None) is not None:
        cfg["resolution"] = args.resolution
    return cfg


def _emit(payload: dict, cfg: dict, csv_path: Optional[str],
          row: Optional[dict]) -> None:
    print(json.dumps({"result": payload, "config": cfg}, sort_keys=True,
                     default=str))
    if csv_path and row is not None:
        exists = os.path.exists(csv_path)
        with open(csv_path, "a", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            if not exists:
                wr.writeheader()
            wr.writerow({k: row.get(k, "") for k in CSV_COLUMNS})


def _row(spec: RunSpec, alpha_bp, ci_bp, value, delta, runtime):
    return {"model": spec.model, "contract": spec.product, "t1": spec.t1,
            "t2": spec.t2, "wf": spec.wf, "mode": spec.mode,
            "method": spec.method, "config": spec.config,
            "alpha_bp": _fmt(alpha_bp), "ci_bp": _fmt(ci_bp),
            "value": _fmt(value), "delta": _fmt(delta),
            "runtime_s": _fmt(runtime)}


def _fmt(x):
    return "" if x is None else (f"{x:.6g}" if isinstance(x, float) else x)


def _set_threads(args) -> None:
    threads = getattr(args, "threads", None)
    if threads is None:
        threads = os.environ.get("GMWB_THREADS")
    if threads:
        import numba
        numba.set_num_threads(int(threads))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_price(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    alpha_bp = args.alpha_bp
    if alpha_bp is None:
        alpha_bp = float(cfg.get("contract", {}).get("alpha_g_bp", 100.0))
    t0 = time.time()
    res = Engine(spec).price(alpha_bp * 1e-4)
    rt = time.time() - t0
    payload = json.loads(res.to_json())
    payload["alpha_bp"] = alpha_bp
    payload["runtime_s"] = rt
    payload["diagnostics"] = {k: v for k, v in res.diagnostics.items()
                              if isinstance(v, (int, float, str))}
    _emit(payload, cfg, args.csv,
          _row(spec, alpha_bp, None, res.value,
               res.diagnostics.get("delta"), rt))
    return 0


def cmd_fair_fee(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    t0 = time.time()
    fee = Engine(spec).fair_fee()
    rt = time.time() - t0
    payload = {"alpha_bp": fee.alpha_bp, "value": fee.value,
               "evaluations": fee.evaluations, "ci_bp": fee.std_error_bp,
               "runtime_s": rt}
    _emit(payload, cfg, args.csv,
          _row(spec, fee.alpha_bp, fee.std_error_bp, fee.value, None, rt))
    return 0


def cmd_delta(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    alpha_bp = args.alpha_bp if args.alpha_bp is not None else 100.0
    t0 = time.time()
    eng = Engine(spec)
    delta = eng.delta(alpha_bp * 1e-4, shock=args.shock, route=args.route)
    rt = time.time() - t0
    payload = {"delta": delta, "alpha_bp": alpha_bp, "route": args.route,
               "runtime_s": rt}
    _emit(payload, cfg, args.csv,
          _row(spec, alpha_bp, None, None, delta, rt))
    return 0


def _table_rows(test_id: str, letter: str, seed: int):
    """Compute one benchmark table at the given resolution letter."""
    from .benchmarks import DELTA_FEES_BP, REFERENCE

    def run(model, product, mode, method, t2, wf, t1=0.0, **kw):
        spec = RunSpec(model=model, product=product, mode=mode, method=method,
                       t2=t2, wf=wf, t1=t1, m=1, kappa=0.1, config=letter,
                       seed=seed, **kw)
        return spec, Engine(spec)

    rows = []

    def add_fee_row(spec, eng, ref):
        t0 = time.time()
        fee = eng.fair_fee()
        rt = time.time() - t0
        row = _row(spec, fee.alpha_bp, fee.std_error_bp, fee.value, None, rt)
        if isinstance(ref, tuple):
            row["benchmark_bp"], row["benchmark_ci"] = ref
        else:
            row["benchmark_bp"], row["benchmark_ci"] = ref, ""
        rows.append(row)

    def add_delta_row(spec, eng, fee_bp, ref):
        t0 = time.time()
        delta = eng.delta(fee_bp * 1e-4)
        rt = time.time() - t0
        row = _row(spec, fee_bp, None, None, delta, rt)
        row["benchmark_bp"], row["benchmark_ci"] = ref, ""
        rows.append(row)

    cf_cells = [(wf, t2) for wf in (1, 2) for t2 in (5, 10, 20)]
    if test_id == "bs-static":
        for wf, t2 in cf_cells:
            for method, refkey in (("hpde", "bs_static"), ("smc", "bs_static_mc")):
                spec, eng = run("bs", "cf", "static", method, t2, wf)
                add_fee_row(spec, eng, REFERENCE[refkey][(wf, t2)])
    elif test_id == "bs-dynamic":
        for wf, t2 in cf_cells:
            for method, refkey, kw in (
                    ("hpde", "bs_dynamic", {}),
                    ("smc", "bs_dynamic_mc", {"algorithm": "lines"})):
                spec, eng = run("bs", "cf", "dynamic", method, t2, wf, **kw)
                add_fee_row(spec, eng, REFERENCE[refkey][(wf, t2)])
    elif test_id in ("1", "2", "4", "5"):
        model = "bshw" if test_id in ("1", "4") else "heston"
        mode = "static" if test_id in ("1", "2") else "dynamic"
        refkey = f"{model}_{mode}"
        for wf, t2 in cf_cells:
            for method in ("hmc", "smc", "hpde", "apde"):
                spec, eng = run(model, "cf", mode, method, t2, wf)
                add_fee_row(spec, eng, REFERENCE[refkey][(wf, t2)])
    elif test_id in ("3", "6"):
        mode = "static" if test_id == "3" else "dynamic"
        for model in ("bshw", "heston"):
            fees = DELTA_FEES_BP[(model, mode)]
            ref = REFERENCE[f"{model}_delta_{mode}"]
            for wf, t2 in cf_cells:
                for method in ("hmc", "smc", "hpde", "apde"):
                    spec, eng = run(model, "cf", mode, method, t2, wf)
                    add_delta_row(spec, eng, fees[t2], ref[(wf, t2)])
    elif test_id in ("7", "8"):
        model = "bshw" if test_id == "7" else "heston"
        for t1 in (0, 10):
            for mode in ("static", "surrender"):
                ref = REFERENCE[f"yd_{model}_{mode}"][(t1, 25)]
                for method in ("hmc", "smc", "hpde", "apde"):
                    spec, eng = run(model, "yd", mode, method, 25.0, 1, t1=t1)
                    add_fee_row(spec, eng, ref)
    else:
        raise ConfigError(f"unknown table id {test_id!r}")
    return rows


def cmd_table(args) -> int:
    rows = _table_rows(args.test, args.resolution or "A",
                       args.seed if args.seed is not None else 20240901)
    cols = CSV_COLUMNS + ["benchmark_bp", "benchmark_ci"]
    out = sys.stdout if not args.csv else open(args.csv, "w", newline="")
    wr = csv.DictWriter(out, fieldnames=cols)
    wr.writeheader()
    for row in rows:
        wr.writerow({k: row.get(k, "") for k in cols})
    if args.csv:
        out.close()
    return 0


def cmd_strategy_grid(args) -> int:
    cfg = _load_config(args)
    cfg["mode"] = "dynamic"
    spec = _spec_from_config(cfg)
    if spec.method not in ("hpde", "apde"):
        raise ConfigError("strategy-grid needs a PDE method")
    if spec.method == "apde":
        raise ConfigError("strategy-grid export currently uses hpde")
    eng = Engine(spec)
    res_cfg = eng.resolution(spec.config)
    spy = int(res_cfg[0])
    level = int(round(args.time * spy))
    alpha = (args.alpha_bp if args.alpha_bp is not None else 100.0) * 1e-4
    res = eng.price(alpha, capture_level=level)
    if "strategy" not in res.diagnostics:
        raise ConfigError("requested time is not an event time")
    sl = res.diagnostics["strategy"]
    factors = [float(f) for f in args.factors.split(",")] if args.factors \
        else [float(np.median(sl.factor_values))]
    out = sys.stdout if not args.csv else open(args.csv, "w", newline="")
    wr = csv.writer(out)
    wr.writerow(["factor", "base", "account", "withdrawal"])
    g = eng.contract(alpha).g
    for fval in factors:
        node = int(np.argmin(np.abs(sl.factor_values - fval)))
        for nb, base in enumerate(sl.base_levels):
            for col in range(sl.account_grid.shape[1]):
                acct = sl.account_grid[node, col]
                if acct > 3.5 * spec.premium:
                    continue
                wr.writerow([repr(float(sl.factor_values[node])), base,
                             repr(float(acct)),
                             float(sl.withdrawals[nb, node, col]) * g])
    if args.csv:
        out.close()
    return 0


def cmd_dump_lattice(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    eng = Engine(spec)
    res_cfg = eng.resolution(spec.config)
    spy = int(res_cfg[0]) if spec.method in ("hpde", "hmc") else 16
    n = int(round(spec.t2 * spy))
    if spec.model == "bs":
        lat = build_chain_lattice(spec.t2, n)
    elif spec.model == "bshw":
        lat = build_hw_lattice(eng.params, spec.t2, n)
    else:
        lat = build_heston_lattice(eng.params, spec.t2, n)
    dump_lattice_csv(lat, args.out, max_levels=args.levels)
    print(json.dumps({"result": {"written": args.out, "levels": min(
        args.levels or n, n)}}))
    return 0


def cmd_dump_paths(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    eng = Engine(spec)
    n_paths = args.paths
    res_cfg = eng.resolution(spec.config)
    scen = eng._sample(int(res_cfg[0]), n_paths, 0)
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["path", "time", "fund", "factor", "rate"])
        for p in range(scen.n_paths):
            for ti, t in enumerate(scen.times):
                rate = scen.u[p, ti] if scen.model == "hw" else ""
                factor = scen.u[p, ti]
                wr.writerow([p, t, repr(float(scen.s[p, ti])),
                             repr(float(factor)), rate])
    print(json.dumps({"result": {"written": args.out, "paths": n_paths}}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gmwb",
        description="GMWB variable-annuity pricing engine")
    ap.add_argument("--threads", type=int, default=None,
                    help="numba thread count (default: GMWB_THREADS or all)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", help="JSON run configuration", default=None)
        p.add_argument("--csv", help="append results to this CSV", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--method", default=None)
        p.add_argument("--mode", default=None)
        p.add_argument("--resolution", default=None)
        p.add_argument("--degree", type=int, default=None)
        p.add_argument("--algorithm", default=None)

    p = sub.add_parser("price", help="value the policy at a given fee")
    common(p)
    p.add_argument("--alpha-bp", type=float, default=None)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("fair-fee", help="solve for the fair guarantee fee")
    common(p)
    p.set_defaults(func=cmd_fair_fee)

    p = sub.add_parser("delta", help="delta at a given fee")
    common(p)
    p.add_argument("--alpha-bp", type=float, default=None)
    p.add_argument("--shock", type=float, default=None)
    p.add_argument("--route", choices=("grid", "bump"), default="grid")
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("table", help="reproduce a benchmark table")
    common(p)
    p.add_argument("--test", required=True,
                   choices=("1", "2", "3", "4", "5", "6", "7", "8",
                            "bs-static", "bs-dynamic"))
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("strategy-grid",
                       help="optimal withdrawals at an event time (CSV)")
    common(p)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--factors", default=None,
                   help="comma-separated factor values, nearest nodes used")
    p.add_argument("--alpha-bp", type=float, default=None)
    p.set_defaults(func=cmd_strategy_grid)

    p = sub.add_parser("dump-lattice", help="write the factor lattice as CSV")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=int, default=40)
    p.set_defaults(func=cmd_dump_lattice)

    p = sub.add_parser("dump-paths", help="write sampled paths as CSV")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--paths", type=int, default=100)
    p.set_defaults(func=cmd_dump_paths)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FeeSearchError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
