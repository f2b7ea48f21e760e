"""Stored optimal controls p_n(w) and their on-disk formats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


@dataclass
class ControlTable:
    """Equity fraction as a function of post-withdrawal wealth at each rebalance date.

    ``w_nodes[n]`` is increasing; ``lookup`` interpolates linearly between nodes,
    clamps at the ends and returns 0 wherever wealth is not positive.
    """

    times: np.ndarray
    w_nodes: list[np.ndarray]
    p_values: list[np.ndarray]
    committed_W_star: float
    kappa: float
    alpha: float
    epsilon: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.w_nodes) != len(self.p_values):
            raise ValueError("w_nodes and p_values must have one entry per date")
        for w, p in zip(self.w_nodes, self.p_values):
            if w.shape != p.shape:
                raise ValueError("mismatched control slice")
            if np.any((p < 0) | (p > 1)):
                raise ValueError("controls must lie in [0, 1]")
            if np.any(p[w <= 0] != 0):
                raise ValueError("controls must vanish at non-positive wealth")

    @property
    def n_dates(self) -> int:
        return len(self.w_nodes)

    def lookup(self, n: int, wealth) -> np.ndarray:
        w = np.asarray(wealth, dtype=float)
        p = np.clip(np.interp(w, self.w_nodes[n], self.p_values[n]), 0.0, 1.0)
        return np.where(w > 0, p, 0.0)

    def header(self) -> dict:
        return {"version": FORMAT_VERSION, "committed_W_star": self.committed_W_star,
                "kappa": self.kappa, "alpha": self.alpha, "epsilon": self.epsilon,
                "times": [float(t) for t in self.times], **self.meta}

    def save(self, path) -> None:
        arrays = {}
        for n, (w, p) in enumerate(zip(self.w_nodes, self.p_values)):
            arrays[f"w_{n}"] = w
            arrays[f"p_{n}"] = p
        np.savez_compressed(path, header=np.array(json.dumps(self.header())), **arrays)

    @classmethod
    def load(cls, path) -> "ControlTable":
        with np.load(path, allow_pickle=False) as z:
            head = json.loads(str(z["header"]))
            if head.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported control file version {head.get('version')}")
            n = len(head["times"])
            w = [z[f"w_{i}"] for i in range(n)]
            p = [z[f"p_{i}"] for i in range(n)]
        meta = {k: v for k, v in head.items()
                if k not in ("version", "committed_W_star", "kappa", "alpha", "epsilon", "times")}
        return cls(np.array(head["times"]), w, p, head["committed_W_star"], head["kappa"],
                   head["alpha"], head["epsilon"], meta)


def export_heatmap(table: ControlTable, path, w_min: float = 0.0, w_max: float = 2500.0,
                   n_w: int | None = None) -> int:
    """Write (t, w, p) rows for the stored controls within [w_min, w_max].

    With ``n_w`` the controls are resampled on an even wealth grid; otherwise the
    stored nodes inside the window are emitted.  Returns the number of rows.
    """
    rows = 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "w", "p"])
        for n, t in enumerate(table.times):
            if n_w:
                ws = np.linspace(w_min, w_max, n_w)
                ps = table.lookup(n, ws)
            else:
                w = table.w_nodes[n]
                keep = (w >= w_min) & (w <= w_max)
                ws, ps = w[keep], table.p_values[n][keep]
            for wv, pv in zip(ws, ps):
                out.writerow([float(t), float(wv), float(pv)])
                rows += 1
    return rows
