"""实验报告与路径的持久化（JSON 摘要 + CSV 单元表）"""
import csv
import logging
import math
from pathlib import Path
from typing import Any, Dict, Union

from app.models.experiments import ExperimentReport
from app.models.results import SeriesPath
from app.services.errors import PersistenceError

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
CELLS_FILE = "cells.csv"

# per-kind CSV column order
COLUMNS: Dict[str, list] = {
    "rate-scan": [
        "cell", "spectrum", "p", "n", "m", "reps", "seed", "effective_rank", "sigma0_norm",
        "mean", "std_error", "q50", "q90", "q95", "q99", "effective_rank_bound", "ratio_to_rank_bound",
        "population_source",
    ],
    "bound-check": [
        "cell", "spectrum", "p", "n", "m", "reps", "seed", "mean", "std_error", "mean_plus_2se",
        "gaussian_bound", "ratio", "main_bound", "pass", "population_source",
    ],
    "tau-scan": ["cell", "lag", "value", "analytic_bound", "epsilon", "reps", "statistic", "seed"],
    "bernstein-tail": ["cell", "n", "x", "empirical_tail", "bernstein_raw", "bernstein_clipped", "pass", "seed"],
    "cantor-check": ["B", "ell", "card_KB", "prop1", "prop2", "prop3", "prop4", "prop5", "prop6"],
}


def format_value(value: Any) -> str:
    """CSV 单元格格式：浮点数 17 位有效数字，布尔为 true/false，缺失为空"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def _ensure_dir(directory: Union[str, Path]) -> Path:
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PersistenceError(f"cannot create output directory {path}: {e}") from e
    return path


def write_cells_csv(report: ExperimentReport, target: Path) -> None:
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(report.columns)
        for cell in report.cells:
            writer.writerow([format_value(cell.get(col)) for col in report.columns])


def write_report(report: ExperimentReport, directory: Union[str, Path]) -> Dict[str, str]:
    """写出 summary.json 与 cells.csv，返回文件清单"""
    path = _ensure_dir(directory)
    summary = path / SUMMARY_FILE
    cells = path / CELLS_FILE
    try:
        summary.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        write_cells_csv(report, cells)
    except OSError as e:
        logger.error(f"Failed to write report to {path}: {e}")
        raise PersistenceError(f"cannot write report to {path}: {e}") from e
    logger.info(f"Report written: {summary}, {cells} ({len(report.cells)} cells)")
    return {"summary": str(summary), "cells": str(cells)}


def load_report(directory: Union[str, Path]) -> ExperimentReport:
    summary = Path(directory) / SUMMARY_FILE
    try:
        return ExperimentReport.model_validate_json(summary.read_text(encoding="utf-8"))
    except OSError as e:
        raise PersistenceError(f"cannot read report {summary}: {e}") from e


def write_path_csv(path: SeriesPath, target: Union[str, Path]) -> str:
    """路径 CSV：每行一个坐标，第 t 列为观测 t"""
    target = Path(target)
    if target.parent != Path(""):
        _ensure_dir(target.parent)
    try:
        with open(target, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["coordinate"] + [str(t) for t in range(1, path.n + 1)])
            for i, row in enumerate(path.data, start=1):
                writer.writerow([str(i)] + [format_value(float(v)) for v in row])
    except OSError as e:
        raise PersistenceError(f"cannot write path to {target}: {e}") from e
    logger.info(f"Path written: {target} (p={path.p}, n={path.n}, seed={path.seed})")
    return str(target)
