import numpy as np

from etsim.hilbert_utils import Boson, DensityMatrix, SpaceSpec
from etsim.io_utils import (
    Table,
    format_number,
    read_csv,
    read_report,
    render_csv,
    timeseries_table,
    write_csv,
    write_report,
)
from etsim.lindblad_solver import TimeSeries
from etsim.models import CheckpointResult, RunReport


def build_series():
    """Helper: a two-sample series with one column."""
    rho = DensityMatrix(SpaceSpec([Boson(2)]), np.diag([1.0, 0.0]))
    return TimeSeries(np.array([0.0, 1.0]), np.array([0.0, 0.5]), {"p_donor": np.array([1.0, 1 / 3])}, rho)


def test_format_number_uses_twelve_significant_digits():
    assert format_number(1 / 3) == "0.333333333333"
    assert format_number(2.0) == "2"
    assert format_number(1.23456789e-7) == "1.23456789e-07"


def test_render_csv_header_and_rows():
    table = Table("t", ["a", "b"], [(1.0, 0.5)])
    text = render_csv(table, {"scenario": "fig2", "seed": "0", "parameters": {"b": 2, "a": 1}})
    lines = text.splitlines()
    assert lines[0] == "# scenario: fig2"
    assert lines[1] == "# seed: 0"
    assert lines[2] == '# parameters: {"a": 1, "b": 2}'
    assert lines[3:] == ["a,b", "1,0.5"]


def test_timeseries_table_columns():
    table = timeseries_table("timeseries", build_series())
    assert table.columns == ["t_ms", "t_omega0", "p_donor"]
    assert table.rows[1] == [0.5, 1.0, 1 / 3]


def test_write_and_read_csv(tmp_path):
    table = timeseries_table("timeseries", build_series())
    path = write_csv(tmp_path / "out" / "series.csv", table, {"scenario": "fig7"})
    columns, rows = read_csv(path)
    assert columns == table.columns
    assert rows[1][2] == float(format_number(1 / 3))
    assert write_csv(tmp_path / "again.csv", table, {"scenario": "fig7"}).read_text() == path.read_text()


def test_write_and_read_report(tmp_path):
    report = RunReport(
        scenario="fig2",
        version="0.1.0",
        seed=3,
        created_at="2024-01-01T00:00:00",
        checkpoints=[CheckpointResult(label="x", value=1.0, expected=1.0, tolerance=0.1, passed=True)],
    )
    path = write_report(tmp_path / "fig2_report.json", report)
    loaded = read_report(path)
    assert loaded == report
    assert loaded.checkpoints_passed
