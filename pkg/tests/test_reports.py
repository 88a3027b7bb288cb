import csv

import numpy as np
import pytest

from app.models.experiments import ExperimentConfig, ExperimentReport, Provenance
from app.services.errors import PersistenceError
from app.services.harness import run_experiment
from app.services.reports import COLUMNS, format_value, load_report, write_path_csv, write_report
from app.services.timeseries import simulate

from conftest import var1


def _empty_report() -> ExperimentReport:
    return ExperimentReport(
        config=ExperimentConfig(kind="cantor-check"),
        columns=COLUMNS["cantor-check"],
        provenance=Provenance(
            master_seed=0, software_version="test", numpy_version=np.__version__, scipy_version="0",
            workers=1, started_at="2024-01-01T00:00:00", wall_time=0.0,
        ),
    )


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.mark.parametrize(
    "value, expected",
    [
        (None, ""),
        (True, "true"),
        (False, "false"),
        (0.1, "0.10000000000000001"),
        (2.0, "2"),
        (float("inf"), "inf"),
        (float("-inf"), "-inf"),
        (float("nan"), "nan"),
        (7, "7"),
        ("NA", "NA"),
    ],
)
def test_format_value(value, expected):
    assert format_value(value) == expected


def test_empty_report_writes_header_only(tmp_path):
    files = write_report(_empty_report(), tmp_path / "empty")
    rows = _read_rows(files["cells"])
    assert rows == [COLUMNS["cantor-check"]]


def test_report_round_trip(tmp_path):
    report = run_experiment({"kind": "cantor-check", "grids": {"B": [8, 100, 1000]}})
    files = write_report(report, tmp_path / "out")
    assert load_report(tmp_path / "out").model_dump() == report.model_dump()
    rows = _read_rows(files["cells"])
    assert len(rows) == 1 + len(report.cells)
    assert rows[0] == report.columns
    assert rows[1][3:] == ["NA"] * 6
    assert rows[2][3:] == ["true"] * 6


def test_write_report_under_a_file_fails(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(PersistenceError):
        write_report(_empty_report(), blocker / "sub")


def test_load_missing_report(tmp_path):
    with pytest.raises(PersistenceError):
        load_report(tmp_path / "nothing")


def test_write_path_csv(tmp_path):
    path = simulate(var1(0.5, p=2), 5, seed=4)
    target = write_path_csv(path, tmp_path / "paths" / "var.csv")
    rows = _read_rows(target)
    assert rows[0] == ["coordinate", "1", "2", "3", "4", "5"]
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    np.testing.assert_array_equal(values, path.data)
