"""Deterministic file outputs: delimited tables, JSON reports, figures.

Every writer is a pure function of its inputs: fixed column orders, fixed
float formatting (12 significant digits), sorted JSON keys, LF endings, and
figure rasterization with pinned metadata — so repeated runs with the same
configuration and seed produce byte-identical files (wall time in the run
report is the single documented exception).
"""

import json
import os
import time
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

import numpy as np  # noqa: E402

FLOAT_FMT = "%.12g"
PNG_META = {"Software": None}   # strip the renderer banner for byte-stable output


def _fmt(v):
    return FLOAT_FMT % float(v)


def write_csv(path, header, rows):
    """Delimited table with fixed formatting; rows are value sequences."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_table(path_stem, header, rows, fmt="csv"):
    """Dispatch a table to CSV or a records-style JSON document."""
    if fmt == "csv":
        return write_csv(path_stem + ".csv", header, rows)
    records = [{h: (v if isinstance(v, str) else float(v)) for h, v in zip(header, row)}
               for row in rows]
    return write_json(path_stem + ".json", records)


# ===================== value / potential tables =====================


def write_value_tables(outdir, env, solution, fmt="csv"):
    """values_t<k> tables: node,V,J_stop,C,L,mu,mu_bar,stop_flag per period.

    The final period gains a leading mem column when the mechanism carries
    final-period memory (rows enumerate memory nodes by state nodes).
    """
    paths = []
    for t in range(1, env.T + 1):
        pts = env.grid(t).points
        V = solution.V[t - 1]
        cols = {name: getattr(solution, name)[t - 1]
                for name in ("V", "J_stop", "C", "L", "mu", "mu_bar")}
        stop = solution.stop[t - 1]
        stem = os.path.join(outdir, f"values_t{t}")
        if V.ndim == 2:
            mem_pts = env.grid(t - 1).points
            header = ["mem", "node", "V", "J_stop", "C", "L", "mu", "mu_bar", "stop_flag"]
            rows = []
            for i, m in enumerate(mem_pts):
                for k, x in enumerate(pts):
                    rows.append([m, x] + [cols[n][i, k] for n in
                                          ("V", "J_stop", "C", "L", "mu", "mu_bar")]
                                + [float(stop[i, k])])
        else:
            header = ["node", "V", "J_stop", "C", "L", "mu", "mu_bar", "stop_flag"]
            rows = [[x] + [cols[n][k] for n in ("V", "J_stop", "C", "L", "mu", "mu_bar")]
                    + [float(stop[k])] for k, x in enumerate(pts)]
        paths.append(write_table(stem, header, rows, fmt))
    return paths


def write_potential_tables(outdir, env, pot, fmt="csv"):
    """potentials_t<k> tables: node,beta_stop,beta_cont (mem column at T)."""
    paths = []
    for t in range(1, env.T + 1):
        pts = env.grid(t).points
        bS = pot.beta_S[t - 1]
        bC = pot.beta_Sbar[t - 1]
        stem = os.path.join(outdir, f"potentials_t{t}")
        if bS.ndim == 2:
            mem_pts = env.grid(t - 1).points
            header = ["mem", "node", "beta_stop", "beta_cont"]
            rows = [[m, x, bS[i, k], bC[i, k]]
                    for i, m in enumerate(mem_pts) for k, x in enumerate(pts)]
        else:
            header = ["node", "beta_stop", "beta_cont"]
            rows = [[x, bS[k], bC[k]] for k, x in enumerate(pts)]
        paths.append(write_table(stem, header, rows, fmt))
    return paths


def write_gap_tables(outdir, matrices, fmt="csv"):
    """ic_gaps_t<k> heat-map data: one row per true node, columns = reports."""
    paths = []
    for m in matrices:
        header = ["true_node"] + [_fmt(x) for x in m["report_points"]]
        rows = [[tp] + list(grow) for tp, grow in zip(m["true_points"], m["gaps"])]
        stem = os.path.join(outdir, f"ic_gaps_t{m['t']}")
        paths.append(write_table(stem, header, rows, fmt))
    return paths


def write_curve_bundle(outdir, env, solution, pot=None, fmt="csv"):
    """Long-format plot data: value curves, thresholds, potential curves."""
    paths = []
    rows = []
    for t in range(1, env.T + 1):
        pts = env.grid(t).points
        V = solution.V[t - 1]
        if V.ndim == 2:
            mid = V.shape[0] // 2
            for k, x in enumerate(pts):
                rows.append([t, x, V[mid, k]])
        else:
            for k, x in enumerate(pts):
                rows.append([t, x, V[k]])
    paths.append(write_table(os.path.join(outdir, "value_curves"),
                             ["t", "node", "V"], rows, fmt))
    eta = np.atleast_1d(solution.eta)
    paths.append(write_table(os.path.join(outdir, "thresholds"),
                             ["t", "eta"],
                             [[t + 1, e] for t, e in enumerate(eta)], fmt))
    if pot is not None:
        rows = []
        for t in range(1, env.T + 1):
            pts = env.grid(t).points
            bS, bC = pot.beta_S[t - 1], pot.beta_Sbar[t - 1]
            if bS.ndim == 2:
                mid = bS.shape[0] // 2
                bS, bC = bS[mid], bC[mid]
            for k, x in enumerate(pts):
                rows.append([t, x, bS[k], bC[k]])
        paths.append(write_table(os.path.join(outdir, "potential_curves"),
                                 ["t", "node", "beta_stop", "beta_cont"], rows, fmt))
    return paths


# ===================== figures =====================


def _mem_rows(tab):
    """Representative (label, row) picks from a memory table."""
    n = tab.shape[0]
    return [("mem lo", tab[0]), ("mem mid", tab[n // 2]), ("mem hi", tab[-1])]


def render_value_figure(path, env, solution):
    fig, axes = plt.subplots(1, env.T, figsize=(4.6 * env.T, 3.4), squeeze=False)
    for t in range(1, env.T + 1):
        ax = axes[0][t - 1]
        pts = env.grid(t).points
        V = solution.V[t - 1]
        if V.ndim == 2:
            for label, row in _mem_rows(V):
                ax.plot(pts, row, label=label)
            ax.legend(fontsize=8)
        else:
            ax.plot(pts, V)
        ax.set_title(f"value, period {t}")
        ax.set_xlabel("state")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_META)
    plt.close(fig)
    return path


def render_potential_figure(path, env, pot):
    fig, axes = plt.subplots(1, env.T, figsize=(4.6 * env.T, 3.4), squeeze=False)
    for t in range(1, env.T + 1):
        ax = axes[0][t - 1]
        pts = env.grid(t).points
        bS, bC = pot.beta_S[t - 1], pot.beta_Sbar[t - 1]
        if bS.ndim == 2:
            mid = bS.shape[0] // 2
            bS, bC = bS[mid], bC[mid]
        ax.plot(pts, bS, label="stop")
        ax.plot(pts, bC, "--", label="continue")
        ax.legend(fontsize=8)
        ax.set_title(f"potentials, period {t}")
        ax.set_xlabel("state")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_META)
    plt.close(fig)
    return path


def render_gap_figure(path, matrices):
    n = len(matrices)
    fig, axes = plt.subplots(1, n, figsize=(4.6 * n, 3.8), squeeze=False)
    for k, m in enumerate(matrices):
        ax = axes[0][k]
        tp, rp, G = m["true_points"], m["report_points"], m["gaps"]
        im = ax.imshow(G, origin="lower", aspect="auto",
                       extent=[rp[0], rp[-1], tp[0], tp[-1]], cmap="magma")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_title(f"deviation gaps, period {m['t']}")
        ax.set_xlabel("report")
        ax.set_ylabel("true state")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_META)
    plt.close(fig)
    return path


# ===================== run report =====================


@dataclass
class RunReport:
    command: str
    config_digest: str
    version: str
    reports: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add(self, name, payload):
        self.reports[name] = payload

    def finish(self):
        self.wall_time_s = round(time.perf_counter() - self._t0, 3)
        return self

    def to_dict(self):
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "version": self.version,
            "reports": self.reports,
            "wall_time_s": self.wall_time_s,
        }

    def write(self, outdir):
        self.finish()
        return write_json(os.path.join(outdir, "run_report.json"), self.to_dict())
