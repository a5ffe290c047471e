"""The four figure kinds.

Every renderer validates all of its inputs before the figure is created, so
a schema error never leaves a half-written image behind.  Output is
deterministic for fixed inputs: a stable hash salt, no timestamps in the
file metadata, and sorted group ordering everywhere.

The only statistics computed here are means, standard deviations, and one
least-squares line in log-log space; each is annotated with exactly the
value it was computed from, never a reformatted copy.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reader import PlotError, Table, load_table

METRICS_COLUMNS = ("algo", "seed", "wall_ms", "samples", "round",
                   "train_loss", "grad_norm_sq", "flops", "p_hat")

KINDS = ("loss_vs_time", "rate_loglog", "consistency_alpha", "delay_hist")


def _new_figure():
    plt.rcParams["svg.hashsalt"] = "sgdplots"
    plt.rcParams["svg.fonttype"] = "none"  # keep labels as selectable text
    plt.rcParams["figure.dpi"] = 100
    return plt.subplots(figsize=(7.0, 4.5))


def _save(fig, out: str | Path) -> None:
    out = Path(out)
    kwargs = {}
    if out.suffix == ".svg":
        kwargs["metadata"] = {"Date": None, "Creator": None}
    fig.savefig(out, bbox_inches="tight", **kwargs)
    plt.close(fig)


def render_loss_vs_time(tables: Sequence[Table], out: str | Path) -> dict:
    """One curve per algorithm; mean +/- std bands across seeds.

    Seeds do not share an exact evaluation grid (asynchronous runs evaluate
    at timing-dependent moments), so multi-seed curves are interpolated onto
    a common wall-time grid before averaging.
    """
    by_algo: dict[str, dict[str, list[tuple[float, float]]]] = {}
    for table in tables:
        for row in table.rows:
            by_algo.setdefault(row["algo"], {}).setdefault(row["seed"], []).append(
                (float(row["wall_ms"]), float(row["train_loss"]))
            )
    fig, ax = _new_figure()
    floor = np.inf
    for algo in sorted(by_algo):
        curves = []
        for seed in sorted(by_algo[algo]):
            pts = sorted(by_algo[algo][seed])
            curves.append(
                (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
            )
        if len(curves) == 1:
            wall, loss = curves[0]
            (line,) = ax.plot(wall, loss, label=algo)
            line.set_gid(f"line-{algo}")
            floor = min(floor, float(loss.min()))
            continue
        horizon = min(float(wall[-1]) for wall, _ in curves)
        grid = np.linspace(0.0, horizon, 64)
        losses = np.stack([np.interp(grid, wall, loss) for wall, loss in curves])
        mean = losses.mean(axis=0)
        std = losses.std(axis=0)
        (line,) = ax.plot(grid, mean, label=algo)
        line.set_gid(f"line-{algo}")
        band = ax.fill_between(
            grid, mean - std, mean + std, alpha=0.2, color=line.get_color()
        )
        band.set_gid(f"band-{algo}")
        floor = min(floor, float((mean - std).min()))
    ax.set_xlabel("wall time (ms)")
    ax.set_ylabel("training loss")
    if floor > 0.0:
        ax.set_yscale("log")
    ax.legend()
    ax.set_title("training loss vs wall time")
    _save(fig, out)
    return {"algos": sorted(by_algo)}


def render_rate_loglog(table: Table, out: str | Path) -> dict:
    """Log-log scatter of the per-budget statistic with a fitted line."""
    rounds = table.floats("rounds")
    stats = table.floats("stat")
    if len(rounds) < 2:
        raise PlotError(f"{table.path}: need at least two points to fit a line")
    order = np.argsort(rounds)
    x = np.asarray(rounds, dtype=float)[order]
    y = np.asarray(stats, dtype=float)[order]
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    slope, intercept = float(slope), float(intercept)
    fig, ax = _new_figure()
    ax.loglog(x, y, "o", label="measured")
    ax.loglog(x, np.exp(intercept) * x**slope, "-", label="least-squares fit")
    ax.annotate(
        f"slope = {slope!r}",
        xy=(0.05, 0.08),
        xycoords="axes fraction",
        fontsize=9,
    ).set_gid("slope-annotation")
    ax.set_xlabel("averaging-round budget")
    ax.set_ylabel("best mean gradient norm$^2$")
    ax.legend()
    ax.set_title("ergodic decay fit")
    _save(fig, out)
    return {"slope": slope, "intercept": intercept}


def render_consistency_alpha(table: Table, out: str | Path) -> dict:
    """Measured drift (both norms) against the quadratic-in-lr bound."""
    alpha = table.floats("alpha")
    series = {
        "mean distance": table.floats("mean_dist"),
        "mean squared distance": table.floats("mean_dist_sq"),
        "bound": table.floats("bound"),
    }
    fig, ax = _new_figure()
    for label, values in series.items():
        style = "--" if label == "bound" else "-"
        ax.loglog(alpha, values, style, marker="o", label=label)
    ax.set_xlabel("learning rate")
    ax.set_ylabel("snapshot drift")
    ax.legend()
    ax.set_title("snapshot drift vs learning rate")
    _save(fig, out)
    return {"alphas": alpha}


def render_delay_hist(tables: Sequence[Table], out: str | Path) -> dict:
    """Clean-update fraction per within-round update index."""
    fig, ax = _new_figure()
    width = 0.8 / len(tables)
    for i, table in enumerate(tables):
        t = np.asarray(table.floats("t"))
        p = np.asarray(table.floats("p_hat"))
        label = Path(table.path).stem
        bars = ax.bar(t + i * width, p, width=width, label=label)
        for j, rect in enumerate(bars):
            rect.set_gid(f"bar-{label}-{j}")
    ax.set_xlabel("update index within the averaging round")
    ax.set_ylabel("clean fraction")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    ax.set_title("staleness profile")
    _save(fig, out)
    return {"files": [t.path for t in tables]}


_REQUIRED = {
    "loss_vs_time": METRICS_COLUMNS,
    "rate_loglog": ("rounds", "stat"),
    "consistency_alpha": ("alpha", "mean_dist", "mean_dist_sq", "bound"),
    "delay_hist": ("t", "total", "clean", "p_hat"),
}

_SINGLE_INPUT = ("rate_loglog", "consistency_alpha")


def render(kind: str, paths: Sequence[str | Path], out: str | Path) -> dict:
    """Validate all inputs for ``kind``, then write one image to ``out``."""
    if kind not in KINDS:
        raise PlotError(f"unknown figure kind {kind!r}; known: {', '.join(KINDS)}")
    if not paths:
        raise PlotError("no input files given")
    if kind in _SINGLE_INPUT and len(paths) != 1:
        raise PlotError(f"{kind} takes exactly one CSV, got {len(paths)}")
    tables = [load_table(p, _REQUIRED[kind]) for p in paths]
    if kind == "loss_vs_time":
        return render_loss_vs_time(tables, out)
    if kind == "rate_loglog":
        return render_rate_loglog(tables[0], out)
    if kind == "consistency_alpha":
        return render_consistency_alpha(tables[0], out)
    return render_delay_hist(tables, out)
