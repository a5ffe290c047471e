"""The sgd-plot command line."""

import pytest

from sgdplots.cli import main


def test_run_writes_figure_and_reports_path(rate_csv, tmp_path, capsys):
    out = tmp_path / "rate.svg"
    assert main(["rate_loglog", rate_csv, "-o", str(out)]) == 0
    assert out.exists()
    stdout = capsys.readouterr().out
    assert str(out) in stdout
    assert "slope" in stdout


def test_multiple_inputs(metrics_two_seeds, metrics_one_seed, tmp_path):
    out = tmp_path / "loss.svg"
    assert main(["loss_vs_time", metrics_two_seeds, metrics_one_seed, "-o", str(out)]) == 0
    assert out.exists()


def test_missing_input_file_exits_2(tmp_path, capsys):
    out = tmp_path / "fig.svg"
    assert main(["delay_hist", str(tmp_path / "gone.csv"), "-o", str(out)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "no such file" in err
    assert not out.exists()


def test_schema_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("rounds\n250\n")
    assert main(["rate_loglog", str(bad), "-o", str(tmp_path / "fig.svg")]) == 2
    assert "missing column 'stat'" in capsys.readouterr().err


def test_unknown_kind_is_a_usage_error(rate_csv, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["scatter3d", rate_csv, "-o", str(tmp_path / "fig.svg")])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


def test_output_flag_is_required(rate_csv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["rate_loglog", rate_csv])
    assert exc.value.code == 2
