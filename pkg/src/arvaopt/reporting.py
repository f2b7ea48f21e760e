"""Config-driven pipelines: calibrate, solve, simulate and export CSV reports."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .calibration import calibrate_market, ingest_market_csv
from .config import RunConfig, market_fragment
from .controls import ControlTable, export_heatmap
from .scenario import Scenario
from .simulation import (PathOutcomes, StationaryBootstrap, Strategy, SummaryStats, SyntheticMarket,
                         ew_es_summary, percentile_fan, simulate_strategy)
from .solver import PrecommitmentResult, solve_precommitment

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


@dataclass(frozen=True)
class FrontierPoint:
    label: str
    value: float
    es: float
    ew_per_withdrawal: float
    median_WT: float
    mean_median_weight: float = float("nan")
    pareto: bool = True


def pareto_flags(points) -> list[bool]:
    """True for points no other point dominates (ES and EW both weakly better, one strictly)."""
    flags = []
    for a in points:
        dominated = any(b.es >= a.es and b.ew_per_withdrawal >= a.ew_per_withdrawal
                        and (b.es > a.es or b.ew_per_withdrawal > a.ew_per_withdrawal) for b in points)
        flags.append(not dominated)
    return flags


def pareto_filter(points) -> list[FrontierPoint]:
    return [p for p, keep in zip(points, pareto_flags(points)) if keep]


def write_rows(path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if rows:
            out = csv.DictWriter(fh, fieldnames=list(rows[0]))
            out.writeheader()
            out.writerows(rows)
    return path


def write_frontier_csv(points, path) -> Path:
    return write_rows(path, [asdict(p) for p in points])


def write_fan_csv(outcomes: PathOutcomes, scenario: Scenario, path, field: str,
                  percentiles=(5, 50, 95)) -> Path:
    """One row per date; one column per percentile."""
    fan = percentile_fan(outcomes, percentiles, field)
    times = scenario.times[: fan.shape[0]]
    rows = [{"t": float(t), **{f"p{pc:g}": float(v) for pc, v in zip(percentiles, row)}}
            for t, row in zip(times, fan)]
    return write_rows(path, rows)


def summary_row(stats: SummaryStats, **keys) -> dict:
    return {**keys, **stats.as_row(), "n_paths": stats.n_paths}


# -- building blocks from a config ---------------------------------------------

def calibrated_market(cfg: RunConfig):
    """Market parameters from the config, refitted from data when a source is given."""
    cal = cfg.section("calibration")
    if not cal["source"]:
        return cfg.market(), None
    stock, bond = ingest_market_csv(cfg.resolve(cal["source"]))
    res = calibrate_market(stock, bond, cal["beta"], cal["model"], cfg.market().mu_c_b)
    return res.market, res


def path_source(cfg: RunConfig, scenario: Scenario, engine: str):
    if engine == "synthetic":
        return SyntheticMarket(scenario.market)
    sim = cfg.section("simulation")
    if not sim["history"]:
        raise ValueError("bootstrap engine needs simulation.history (a market CSV)")
    stock, bond = ingest_market_csv(cfg.resolve(sim["history"]))
    return StationaryBootstrap(stock.log_returns, bond.log_returns, sim["b_hat"])


def engines(cfg: RunConfig) -> list[str]:
    e = cfg.section("simulation")["engine"]
    return ["synthetic", "bootstrap"] if e == "both" else [e]


def config_strategy(cfg: RunConfig, controls: ControlTable | None = None) -> Strategy:
    st = cfg.section("strategy")
    kind = st["kind"]
    if kind == "control-table":
        if controls is None:
            if not st["controls"]:
                raise ValueError("control-table strategy needs strategy.controls (a saved control file)")
            controls = ControlTable.load(cfg.resolve(st["controls"]))
        return Strategy.optimal(controls)
    if kind == "constant-weight-arva":
        return Strategy.constant_arva(st["p"])
    if kind == "constant-weight-constant-q":
        return Strategy.constant_q(st["p"], st["q"])
    raise ValueError(f"unknown strategy kind {kind!r}")


def simulate(cfg: RunConfig, scenario: Scenario, strat: Strategy, engine: str = "synthetic") -> PathOutcomes:
    sim = cfg.section("simulation")
    return simulate_strategy(path_source(cfg, scenario, engine), strat, scenario, sim["n_paths"],
                             seed=sim["seed"], workers=sim["workers"])


def summarize(cfg: RunConfig, scenario: Scenario, out: PathOutcomes) -> SummaryStats:
    return ew_es_summary(out, cfg.section("objective")["alpha"], scenario.n_withdrawals)


def solve(cfg: RunConfig, scenario: Scenario, obj) -> PrecommitmentResult:
    o = cfg.section("objective")
    return solve_precommitment(obj, scenario, cfg.grid(), tuple(o["bracket"]), o["n_scan"], o["tol"],
                               scan_grid=cfg.scan_grid(), n_p=cfg.n_p,
                               meta={"config_sha256": cfg.digest()})


def solver_row(res: PrecommitmentResult, seconds: float) -> dict:
    c = res.controls
    sol = res.solution
    m1 = len(c.times) + 1
    return {"kappa": c.kappa, "W_star": res.W_star, "J": res.J, "es": res.es,
            "ew_per_withdrawal": sol.ew / m1, "expected_WT": sol.expected_WT, "p0": sol.p0,
            "seconds": round(seconds, 2)}


def frontier_sweep(cfg: RunConfig, values=None, mode: str = "kappa", engine: str = "synthetic",
                   scenario: Scenario | None = None) -> list[FrontierPoint]:
    """One frontier point per kappa (optimal control) or per constant weight (ARVA spending)."""
    scenario = scenario or cfg.scenario()
    if values is None:
        values = cfg.section("objective")["kappas"] if mode == "kappa" else cfg.section("strategy")["p_list"]
    values = list(values)
    if not values:
        raise ValueError("empty sweep")
    pts = []
    for v in values:
        if mode == "kappa":
            obj = replace(cfg.objectives()[0], kappa=float(v))
            strat = Strategy.optimal(solve(cfg, scenario, obj).controls)
        elif mode == "p":
            strat = Strategy.constant_arva(float(v))
        else:
            raise ValueError(f"unknown sweep mode {mode!r}")
        st = summarize(cfg, scenario, simulate(cfg, scenario, strat, engine))
        pts.append(FrontierPoint(mode, float(v), st.es_alpha, st.ew_per_withdrawal, st.median_WT,
                                 st.mean_median_weight))
    flags = pareto_flags(pts)
    return [FrontierPoint(**{**asdict(p), "pareto": f}) for p, f in zip(pts, flags)]


def manifest(cfg: RunConfig, outputs: list[Path], extra: dict | None = None) -> dict:
    return {
        "config_sha256": cfg.digest(),
        "config": cfg.data,
        "seeds": {"simulation": cfg.section("simulation")["seed"]},
        "versions": {"arvaopt": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "outputs": sorted(str(p) for p in outputs),
        **(extra or {}),
    }


def _stage(name):
    def wrap(fn):
        def run(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        return run
    return wrap


@dataclass
class ReportBundle:
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    summaries: list[dict] = field(default_factory=list)
    solutions: list[PrecommitmentResult] = field(default_factory=list)


def run_scenario(cfg: RunConfig) -> ReportBundle:
    """calibrate (optional), solve each kappa, simulate each engine, export everything.

    With a constant-weight strategy kind the solve stage is skipped and the
    strategy is simulated directly.
    """
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out)

    market, cal = _stage("calibrate")(calibrated_market)(cfg)
    scenario = _stage("config")(cfg.scenario)(market)
    if cal is not None:
        p = out / "market.toml"
        p.write_text(cfg_fragment(market, cal))
        bundle.files.append(p)

    strategies: list[tuple[str, Strategy]] = []
    if cfg.section("strategy")["kind"] == "control-table":
        rows = []
        for obj in cfg.objectives():
            t0 = time.perf_counter()
            res = _stage(f"solve kappa={obj.kappa:g}")(solve)(cfg, scenario, obj)
            rows.append(solver_row(res, time.perf_counter() - t0))
            bundle.solutions.append(res)
            tag = f"kappa{obj.kappa:g}"
            path = out / f"controls_{tag}.npz"
            res.controls.save(path)
            hm = cfg.section("heatmap")
            export_heatmap(res.controls, out / f"heatmap_{tag}.csv", hm["w_min"], hm["w_max"], hm["n_w"] or None)
            bundle.files += [path, out / f"heatmap_{tag}.csv"]
            strategies.append((tag, Strategy.optimal(res.controls)))
        bundle.files.append(write_rows(out / "solver_summary.csv", rows))
    else:
        strat = _stage("config")(config_strategy)(cfg)
        strategies.append((f"{strat.kind}_p{strat.p_const:g}", strat))

    fan = cfg.section("fan")
    for engine in engines(cfg):
        for tag, strat in strategies:
            res = _stage(f"simulate {engine} {tag}")(simulate)(cfg, scenario, strat, engine)
            st = summarize(cfg, scenario, res)
            bundle.summaries.append(summary_row(st, engine=engine, strategy=tag))
            for fld in fan["fields"]:
                bundle.files.append(write_fan_csv(res, scenario, out / f"fan_{engine}_{tag}_{fld}.csv",
                                                  fld, fan["percentiles"]))
    bundle.files.append(write_rows(out / "summary.csv", bundle.summaries))
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest(cfg, bundle.files), indent=2, default=str))
    bundle.files.append(mpath)
    return bundle


def cfg_fragment(market, cal) -> str:
    notes = []
    if cal is not None and cal.stock is not None:
        notes.append(f"{cal.model} fit, beta={cal.stock.detection.beta:g}: "
                     f"{cal.stock.detection.n_jumps} stock jumps, {cal.bond.detection.n_jumps} bond jumps")
    return market_fragment(market, notes)
