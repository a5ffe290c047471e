"""End-to-end: render every figure kind from real runner outputs.

Each standard preset is run with a reduced budget (the figures only need
the file schemas, not converged curves); the two sweep presets run as
shipped.  The headline check: the slope annotated on the rate figure must
agree with the slope the runner itself recorded, to 1e-9.
"""

import re
from pathlib import Path

import pytest

pytest.importorskip("asyncsgd")

from asyncsgd.cli import main as run_main

from sgdplots import load_table, render

STANDARD = {
    "quadratic-smoke": 1200,
    "logreg-blobs": 600,
    "mlp-2layer": 400,
    "mlp-4layer": 400,
}

METRICS_COLS = ("algo", "seed", "wall_ms", "train_loss")


@pytest.fixture(scope="module")
def standard_outputs(tmp_path_factory):
    dirs = {}
    for preset, budget in STANDARD.items():
        out = tmp_path_factory.mktemp(preset.replace("-", "_"))
        assert run_main(["run", preset, "--budget", str(budget), "--out", str(out)]) == 0
        dirs[preset] = out
    return dirs


@pytest.fixture(scope="module")
def rate_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("rate_sweep")
    assert run_main(["run", "rate-sweep", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def consistency_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("consistency_sweep")
    assert run_main(["run", "consistency-sweep", "--out", str(out)]) == 0
    return out


@pytest.mark.parametrize("preset", sorted(STANDARD))
def test_loss_vs_time_renders_on_every_standard_preset(preset, standard_outputs, tmp_path):
    out_dir = standard_outputs[preset]
    metrics = sorted(str(p) for p in out_dir.glob("metrics_*.csv"))
    assert metrics, f"{preset} produced no metrics files"
    fig = tmp_path / f"{preset}.svg"
    info = render("loss_vs_time", metrics, fig)
    assert fig.exists() and fig.stat().st_size > 0

    svg = fig.read_text()
    seeds_by_algo = {}
    for path in metrics:
        table = load_table(path, required=METRICS_COLS)
        for row in table.rows:
            seeds_by_algo.setdefault(row["algo"], set()).add(row["seed"])
    assert sorted(seeds_by_algo) == info["algos"]
    for algo, seeds in seeds_by_algo.items():
        assert f'id="line-{algo}"' in svg
        if len(seeds) > 1:
            assert f'id="band-{algo}"' in svg, f"no seed band for {algo}"


def test_delay_hist_renders_on_standard_async_outputs(standard_outputs, tmp_path):
    out_dir = standard_outputs["quadratic-smoke"]
    delays = sorted(str(p) for p in out_dir.glob("delay_*.csv"))
    assert delays, "standard run produced no per-algorithm delay files"
    fig = tmp_path / "delay.svg"
    render("delay_hist", delays, fig)
    svg = fig.read_text()
    for path in delays:
        assert f"bar-{Path(path).stem}-0" in svg


def test_rate_annotation_matches_runner_recorded_slope(rate_outputs, tmp_path):
    fig = tmp_path / "rate.svg"
    info = render("rate_loglog", [str(rate_outputs / "rate.csv")], fig)

    report = (rate_outputs / "rate_report.txt").read_text()
    recorded = float(re.search(r"slope = ([-+0-9.e]+)", report).group(1))
    assert abs(info["slope"] - recorded) <= 1e-9

    annotated = float(re.search(r"slope = ([-+0-9.e]+)", fig.read_text()).group(1))
    assert abs(annotated - recorded) <= 1e-9


def test_consistency_figures_render_on_sweep_outputs(consistency_outputs, tmp_path):
    cons_fig = tmp_path / "consistency.svg"
    info = render(
        "consistency_alpha", [str(consistency_outputs / "consistency.csv")], cons_fig
    )
    assert cons_fig.exists()
    assert len(info["alphas"]) >= 3

    delay_fig = tmp_path / "delay.svg"
    render("delay_hist", [str(consistency_outputs / "delay.csv")], delay_fig)
    assert delay_fig.exists()
