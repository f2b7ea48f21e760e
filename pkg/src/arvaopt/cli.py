"""Command-line front end: ``python -m arvaopt <command> [options]``.

Every command reads an optional TOML config; explicit flags and ``--set
key=value`` overrides take precedence over it.  Outputs are CSV files plus a
JSON manifest in the output directory.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .calibration import DataError, EstimationError
from .config import ConfigError, RunConfig
from .controls import ControlTable, export_heatmap
from .fourier import GridMismatch
from .mortality import DegenerateAnnuityError, MortalityError
from .reporting import (StageError, calibrated_market, cfg_fragment, config_strategy, frontier_sweep,
                        manifest, simulate, solve, solver_row, summarize, summary_row, write_fan_csv,
                        write_frontier_csv, write_rows)
from .solver import BracketError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICS = 0, 2, 3, 4

log = logging.getLogger("arvaopt")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError) and exc.__cause__ is not None:
        exc = exc.__cause__
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, MortalityError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(exc, (BracketError, EstimationError, DegenerateAnnuityError, GridMismatch,
                        FloatingPointError, ArithmeticError)):
        return EXIT_NUMERICS
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return 1


# -- argument plumbing ----------------------------------------------------------

def _overrides(args) -> list[str]:
    """Translate explicit flags into dotted config overrides (applied after --set)."""
    ov = list(args.set or [])

    def put(key, value, fmt=repr):
        if value is not None:
            ov.append(f"{key}={fmt(value)}")

    q = json.dumps
    put("output.dir", args.out, q)
    put("calibration.source", getattr(args, "data", None), q)
    put("calibration.beta", getattr(args, "beta", None))
    put("calibration.model", getattr(args, "model", None), q)
    if getattr(args, "kappa", None):
        put("objective.kappas", [float(k) for k in args.kappa])
    grid = getattr(args, "grid", None)
    put("grid.n_x", grid)
    put("grid.n_y", grid)
    put("grid.scan_n", getattr(args, "scan_grid", None))
    put("strategy.kind", getattr(args, "strategy", None), q)
    put("strategy.controls", getattr(args, "controls", None), q)
    put("strategy.p", getattr(args, "p", None))
    put("strategy.q", getattr(args, "q", None))
    put("simulation.n_paths", getattr(args, "paths", None))
    put("simulation.seed", getattr(args, "seed", None))
    put("simulation.workers", getattr(args, "workers", None))
    put("simulation.engine", getattr(args, "engine", None), q)
    put("simulation.history", getattr(args, "history", None), q)
    put("simulation.b_hat", getattr(args, "b_hat", None))
    put("heatmap.w_min", getattr(args, "w_min", None))
    put("heatmap.w_max", getattr(args, "w_max", None))
    put("heatmap.n_w", getattr(args, "n_w", None))
    if getattr(args, "field", None):
        put("fan.fields", list(args.field), q)
    if getattr(args, "percentiles", None):
        put("fan.percentiles", [float(x) for x in args.percentiles.split(",")])
    return ov


def _load(args) -> RunConfig:
    return RunConfig.load(args.config, _overrides(args))


def _abs(path):
    # paths given on the command line are relative to the working directory, not the config file
    return None if path is None else str(Path(path).resolve())


def _write_manifest(cfg: RunConfig, command: str, files, extra=None) -> Path:
    path = cfg.out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest(cfg, list(files), {"command": command, **(extra or {})}),
                               indent=2, default=str))
    return path


def _strategy_flags(p: argparse.ArgumentParser):
    p.add_argument("--strategy", choices=["control-table", "constant-weight-arva", "constant-weight-constant-q"])
    p.add_argument("--controls", help="saved control table (.npz) for the control-table strategy")
    p.add_argument("--p", type=float, help="constant equity weight")
    p.add_argument("--q", type=float, help="constant withdrawal (thousands)")
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--engine", choices=["synthetic", "bootstrap", "both"])
    p.add_argument("--history", help="market CSV resampled by the bootstrap engine")
    p.add_argument("--b-hat", type=float, dest="b_hat", help="expected bootstrap block length (years)")


# -- commands -------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    cfg = _load(args)
    if not cfg.section("calibration")["source"]:
        raise ConfigError("calibrate needs --data or calibration.source")
    market, cal = calibrated_market(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    target = Path(args.output) if args.output else cfg.out_dir / "market.toml"
    target.write_text(cfg_fragment(market, cal))
    print(target.read_text(), end="")
    _write_manifest(cfg, "calibrate", [target])
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load(args)
    scenario = cfg.scenario()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    rows, files = [], []
    for obj in cfg.objectives():
        t0 = time.perf_counter()
        res = solve(cfg, scenario, obj)
        rows.append(solver_row(res, time.perf_counter() - t0))
        path = cfg.out_dir / f"controls_kappa{obj.kappa:g}.npz"
        res.controls.save(path)
        files.append(path)
        log.info("kappa=%g W*=%.4f J=%.4f", obj.kappa, res.W_star, res.J)
    files.append(write_rows(cfg.out_dir / "solver_summary.csv", rows))
    _write_manifest(cfg, "solve", files)
    for r in rows:
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return EXIT_OK


def _engine_runs(cfg, args):
    scenario = cfg.scenario()
    strat = config_strategy(cfg)
    e = cfg.section("simulation")["engine"]
    for engine in (["synthetic", "bootstrap"] if e == "both" else [e]):
        yield engine, scenario, strat, simulate(cfg, scenario, strat, engine)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for engine, scenario, strat, out in _engine_runs(cfg, args):
        rows.append(summary_row(summarize(cfg, scenario, out), engine=engine, strategy=strat.kind))
    path = write_rows(cfg.out_dir / "summary.csv", rows)
    _write_manifest(cfg, "simulate", [path])
    for r in rows:
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return EXIT_OK


def cmd_frontier(args) -> int:
    cfg = _load(args)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    values = [float(v) for v in args.values.split(",")] if args.values else None
    pts = frontier_sweep(cfg, values, args.mode, "bootstrap" if args.engine == "bootstrap" else "synthetic")
    path = write_frontier_csv(pts, cfg.out_dir / f"frontier_{args.mode}.csv")
    _write_manifest(cfg, "frontier", [path])
    for p in pts:
        print(f"{p.label}={p.value:g} es={p.es:.4f} ew={p.ew_per_withdrawal:.4f} "
              f"median_WT={p.median_WT:.4f} pareto={p.pareto}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cfg = _load(args)
    src = cfg.section("strategy")["controls"]
    if not src:
        raise ConfigError("heatmap needs --controls or strategy.controls")
    table = ControlTable.load(cfg.resolve(src))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    hm = cfg.section("heatmap")
    path = cfg.out_dir / f"heatmap_kappa{table.kappa:g}.csv"
    n = export_heatmap(table, path, hm["w_min"], hm["w_max"], hm["n_w"] or None)
    _write_manifest(cfg, "heatmap", [path])
    print(f"{path}: {n} rows")
    return EXIT_OK


def cmd_fan(args) -> int:
    cfg = _load(args)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    fan = cfg.section("fan")
    files = []
    for engine, scenario, strat, out in _engine_runs(cfg, args):
        for fld in fan["fields"]:
            files.append(write_fan_csv(out, scenario, cfg.out_dir / f"fan_{engine}_{fld}.csv", fld,
                                       fan["percentiles"]))
    _write_manifest(cfg, "fan", files)
    for f in files:
        print(f)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arvaopt", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario config (TOML)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="fit market parameters to a CSV of index levels")
    p.add_argument("--data", help="CSV with columns date, stock_index, bill_index, cpi")
    p.add_argument("--beta", type=float)
    p.add_argument("--model", choices=["jump-diffusion", "gbm"])
    p.add_argument("--output", help="where to write the [market] fragment (default <out>/market.toml)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("solve", parents=[common], help="solve for the optimal control at each kappa")
    p.add_argument("--kappa", action="append")
    p.add_argument("--grid", type=int, help="nodes per axis of the solve grid")
    p.add_argument("--scan-grid", type=int, dest="scan_grid", help="nodes per axis for the W* scan")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="simulate a strategy and write summary statistics")
    _strategy_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("frontier", parents=[common], help="sweep kappa or a constant weight")
    p.add_argument("--mode", choices=["kappa", "p"], default="kappa")
    p.add_argument("--values", help="comma separated sweep values")
    p.add_argument("--kappa", action="append")
    p.add_argument("--grid", type=int)
    p.add_argument("--scan-grid", type=int, dest="scan_grid")
    _strategy_flags(p)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("heatmap", parents=[common], help="export stored controls as (t, w, p) rows")
    p.add_argument("--controls")
    p.add_argument("--w-min", type=float, dest="w_min")
    p.add_argument("--w-max", type=float, dest="w_max")
    p.add_argument("--n-w", type=int, dest="n_w", help="resample on this many wealth points")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("fan", parents=[common], help="percentile fans of weight, withdrawal and wealth")
    _strategy_flags(p)
    p.add_argument("--field", action="append", choices=["weight", "withdrawal", "wealth"])
    p.add_argument("--percentiles", help="comma separated, default 5,50,95")
    p.set_defaults(func=cmd_fan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("data", "controls", "history", "out"):
        if getattr(args, name, None):
            setattr(args, name, _abs(getattr(args, name)))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        if code == 1:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
