"""CSV loading: schema enforcement and exact error wording."""

import pytest

from sgdplots import PlotError, load_table


def test_load_table_happy_path(rate_csv):
    table = load_table(rate_csv, required=("rounds", "stat"))
    assert table.columns == ("rounds", "stat")
    assert len(table.rows) == 4
    assert table.rows[0] == {"rounds": "250", "stat": "0.04"}
    assert table.floats("stat") == [0.04, 0.021, 0.0099, 0.005]


def test_required_columns_may_be_a_subset(consistency_csv):
    table = load_table(consistency_csv, required=("alpha",))
    assert "n_clean" in table.columns


def test_blank_lines_are_skipped(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n\n3,4\n")
    table = load_table(p, required=("a", "b"))
    assert len(table.rows) == 2


def test_missing_file_is_an_error(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(PlotError, match="no such file"):
        load_table(missing, required=())


def test_missing_column_names_column_and_file(rate_csv):
    with pytest.raises(PlotError) as exc:
        load_table(rate_csv, required=("rounds", "p_hat"))
    assert "missing column 'p_hat'" in str(exc.value)
    assert "rate.csv" in str(exc.value)


def test_header_only_file_is_empty(tmp_path):
    p = tmp_path / "hdr.csv"
    p.write_text("rounds,stat\n")
    with pytest.raises(PlotError, match="empty CSV"):
        load_table(p, required=("rounds",))


def test_zero_byte_file_is_empty(tmp_path):
    p = tmp_path / "zero.csv"
    p.write_text("")
    with pytest.raises(PlotError, match="empty CSV"):
        load_table(p, required=())


def test_ragged_row_reports_its_line_number(tmp_path):
    p = tmp_path / "ragged.csv"
    p.write_text("a,b,c\n1,2,3\n4,5\n")
    with pytest.raises(PlotError, match="line 3 has 2 fields, expected 3"):
        load_table(p, required=("a",))


def test_non_numeric_value_names_the_column(rate_csv, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("rounds,stat\n250,fast\n")
    table = load_table(p, required=("rounds", "stat"))
    assert table.floats("rounds") == [250.0]
    with pytest.raises(PlotError, match="non-numeric value in 'stat'"):
        table.floats("stat")
