"""Scenario configuration files (TOML) and their translation into model objects.

Every run is described by one document; calibration writes a ``[market]``
table in the same format, so its output can be dropped into a scenario file.
Command-line overrides use dotted keys, e.g. ``objective.kappas=[2.5, 10]``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fourier import StateGrid
from .market import BASE_MARKET, MarketParams
from .mortality import ArvaConfig, MortalityTable, cpm2014_male
from .scenario import Scenario
from .solver import ObjectiveParams


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "scenario": {"w0": 1000.0, "horizon": 30.0, "final_withdrawal": True},
    "arva": {"x0": 65.0, "r": 0.00454, "survival_fraction": 0.2, "q_min": 30.0, "q_max": 80.0,
             "dt": 1.0, "horizon_basis": "interval-start", "mortality": "cpm2014-male"},
    "market": BASE_MARKET.to_dict(),
    "calibration": {"source": "", "beta": 3.0, "model": "jump-diffusion"},
    "grid": {"n_x": 512, "n_y": 512, "n_p": 0, "scan_n": 128, "wealth_refine": 8},
    "objective": {"kappas": [2.5], "alpha": 0.05, "epsilon": -1e-4,
                  "bracket": [-500.0, 1500.0], "n_scan": 129, "tol": 0.01},
    "strategy": {"kind": "control-table", "p": 0.5, "q": 40.0, "p_list": [], "controls": ""},
    "simulation": {"engine": "synthetic", "n_paths": 200000, "seed": 1, "workers": 1,
                   "history": "", "b_hat": 2.0},
    "fan": {"percentiles": [5.0, 50.0, 95.0], "fields": ["weight", "withdrawal", "wealth"]},
    "heatmap": {"w_min": 0.0, "w_max": 2500.0, "n_w": 0},
    "output": {"dir": "out"},
}


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        key = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"unknown key {key}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{key} must be a table")
            out[k] = _merge(out[k], v, key + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """'a.b=value' with value in TOML syntax (bare words are taken as strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.strip().split("."), value


def _nest(keys: list[str], value) -> dict:
    d = value
    for k in reversed(keys):
        d = {k: d}
    return d


@dataclass
class RunConfig:
    """A fully merged, validated configuration document."""

    data: dict
    base_dir: Path

    def __post_init__(self):
        self._validate()

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict, overrides=(), base_dir=".") -> "RunConfig":
        data = _merge(DEFAULTS, doc)
        for ov in overrides:
            keys, value = parse_override(ov)
            data = _merge(data, _nest(keys, value))
        return cls(data, Path(base_dir))

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        if path is None:
            return cls.from_dict({}, overrides)
        p = Path(path)
        try:
            doc = tomllib.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {p} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        return cls.from_dict(doc, overrides, p.parent)

    def dumps(self) -> str:
        return tomli_w.dumps(self.data)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.data, sort_keys=True, default=str).encode()).hexdigest()

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    # -- validation -------------------------------------------------------
    def _validate(self):
        d = self.data
        g = d["grid"]
        for k in ("n_x", "n_y", "scan_n"):
            n = g[k]
            if not isinstance(n, int) or n < 8 or n & (n - 1):
                raise ConfigError(f"grid.{k} must be a power of two >= 8, got {n!r}")
        if not isinstance(g["wealth_refine"], int) or g["wealth_refine"] < 1:
            raise ConfigError("grid.wealth_refine must be a positive integer")
        if g["n_p"] < 0:
            raise ConfigError("grid.n_p must be >= 0 (0 means n_y)")
        obj = d["objective"]
        if not obj["kappas"] or any(k <= 0 for k in obj["kappas"]):
            raise ConfigError("objective.kappas must be a non-empty list of positive numbers")
        if not 0 < obj["alpha"] < 1:
            raise ConfigError("objective.alpha must lie in (0, 1)")
        if d["simulation"]["engine"] not in ("synthetic", "bootstrap", "both"):
            raise ConfigError("simulation.engine must be synthetic, bootstrap or both")
        if d["simulation"]["n_paths"] < 1:
            raise ConfigError("simulation.n_paths must be positive")
        for section, key in (("calibration", "source"), ("simulation", "history"), ("strategy", "controls")):
            ref = d[section][key]
            if ref and not self.resolve(ref).exists():
                raise ConfigError(f"{section}.{key}: file {ref} not found")
        mort = d["arva"]["mortality"]
        if mort != "cpm2014-male" and not self.resolve(mort).exists():
            raise ConfigError(f"arva.mortality: file {mort} not found")
        try:
            self.scenario()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    # -- model objects ----------------------------------------------------
    def market(self) -> MarketParams:
        return MarketParams.from_dict(self.data["market"])

    def mortality(self) -> MortalityTable:
        m = self.data["arva"]["mortality"]
        return cpm2014_male() if m == "cpm2014-male" else MortalityTable.from_csv(self.resolve(m))

    def scenario(self, market: MarketParams | None = None) -> Scenario:
        a = {k: v for k, v in self.data["arva"].items() if k != "mortality"}
        s = self.data["scenario"]
        return Scenario(market or self.market(), ArvaConfig(**a), self.mortality(),
                        float(s["w0"]), float(s["horizon"]), bool(s["final_withdrawal"]))

    def grid(self) -> StateGrid:
        g = self.data["grid"]
        return StateGrid(g["n_x"], g["n_y"], wealth_refine=g["wealth_refine"])

    def scan_grid(self) -> StateGrid:
        g = self.data["grid"]
        n = min(g["scan_n"], g["n_x"], g["n_y"])
        return StateGrid(n, n, wealth_refine=g["wealth_refine"])

    @property
    def n_p(self) -> int | None:
        return self.data["grid"]["n_p"] or None

    def objectives(self) -> list[ObjectiveParams]:
        o = self.data["objective"]
        return [ObjectiveParams(float(k), o["alpha"], o["epsilon"]) for k in o["kappas"]]

    @property
    def out_dir(self) -> Path:
        return self.resolve(self.data["output"]["dir"])

    def section(self, name: str) -> dict:
        return self.data[name]


def market_fragment(market: MarketParams, comments=()) -> str:
    """TOML text holding a ``[market]`` table, loadable as a scenario config."""
    head = "".join(f"# {c}\n" for c in comments)
    return head + tomli_w.dumps({"market": market.to_dict()})
