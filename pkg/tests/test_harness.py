import json
import math
from pathlib import Path

import numpy as np
import pytest

from app.services.errors import ConfigValidationError, InputError, PersistenceError
from app.services.harness import analytic_decay_rate, linear_fit, load_config, run_experiment, used_constants

from conftest import arch, banna, var1


def _rate_scan(**overrides):
    cfg = {
        "kind": "rate-scan",
        "reps": 40,
        "master_seed": 11,
        "grids": {"n": [64, 256, 1024], "p": [4], "m": [0], "spectrum": ["identity"]},
    }
    cfg.update(overrides)
    return cfg


# 配置校验


@pytest.mark.parametrize(
    "cfg, field_path",
    [
        ({"kind": "rate-scan", "reps": 10, "grids": {"n": [100], "p": [2]}}, "reps"),
        ({"kind": "rate-scan", "reps": 30, "grids": {"n": [], "p": [2]}}, "grids.n"),
        ({"kind": "rate-scan", "reps": 30, "grids": {"n": [10], "p": [2], "m": [10]}}, "grids.m"),
        ({"kind": "rate-scan", "reps": 30, "grids": {"n": [10]}}, "grids.p"),
        ({"kind": "bound-check", "reps": 30, "grids": {"n": [10]}, "model": arch().model_dump()}, "model.variant"),
        ({"kind": "tau-scan", "reps": 30, "model": var1(0.5).model_dump(), "grids": {"lags": [2, 1]}}, "grids.lags"),
        ({"kind": "tau-scan", "reps": 30, "model": var1(0.5).model_dump(), "grids": {"lags": [1]},
          "statistic": "truncated-outer"}, "truncation_level"),
        ({"kind": "bernstein-tail", "reps": 30, "model": var1(0.5).model_dump(), "grids": {"n": [8], "x": [1.0]}},
         "model.variant"),
        ({"kind": "cantor-check", "grids": {"B": [1, 8]}}, "grids.B"),
        ({"kind": "variance-scan"}, "kind"),
        ({"kind": "bound-check", "reps": 30, "grids": {"n": [10]},
          "model": {"variant": "VAR", "innovations": {"dim": 2, "sigma_e": [[1.0, 0.0], [0.0, 1.0]],
                                                      "sigma0_factor": [[3.0, 0.0], [0.0, 3.0]]}}},
         "model.innovations"),
    ],
)
def test_invalid_configs_report_field_path(cfg, field_path):
    with pytest.raises(ConfigValidationError) as info:
        load_config(cfg)
    assert info.value.field_path == field_path


@pytest.mark.parametrize(
    "cfg",
    [
        {"kind": "rate-scan", "grids": {"n": [64], "p": [2]}},
        {"kind": "bound-check", "grids": {"n": [64], "p": [2]}},
        {"kind": "tau-scan", "model": var1(0.5).model_dump(), "grids": {"lags": [1, 2]}},
        {"kind": "bernstein-tail", "model": banna().model_dump(), "grids": {"n": [64], "x": [1.0]}},
    ],
)
def test_monte_carlo_kinds_require_reps(cfg):
    with pytest.raises(ConfigValidationError) as info:
        run_experiment(cfg)
    assert info.value.field_path == "reps"


def test_cantor_check_needs_no_reps():
    assert load_config({"kind": "cantor-check", "grids": {"B": [100]}}).reps == 0


def test_load_config_from_file(tmp_path):
    target = tmp_path / "cantor.json"
    target.write_text(json.dumps({"kind": "cantor-check", "grids": {"B_range": [2, 20]}}))
    cfg = load_config(target)
    assert cfg.grids.b_values() == list(range(2, 21))
    with pytest.raises(InputError):
        load_config(tmp_path / "missing.json")


def test_model_dimension_must_match_grid():
    cfg = _rate_scan(model=var1(0.0, p=2).model_dump(), grids={"n": [64], "p": [3], "spectrum": ["model"]})
    with pytest.raises(ConfigValidationError) as info:
        run_experiment(cfg)
    assert info.value.field_path == "grids.p"


def test_used_constants_apply_overrides():
    cfg = load_config({"kind": "cantor-check", "grids": {"B": [8]}, "constants": {"c_universal": 2.0}})
    assert used_constants(cfg) == {"epsilon": 1.0, "c_universal": 2.0, "c_prime": 1.0}


# 拟合


def test_linear_fit():
    fit = linear_fit([1.0, 2.0, 3.0], [2.0, 4.0, 6.0], "line", {}, window=(1.5, 2.5))
    assert fit.slope == pytest.approx(2.0)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.ci_low == pytest.approx(2.0) and fit.ci_high == pytest.approx(2.0)
    assert fit.passed is True
    two = linear_fit([1.0, 2.0], [0.0, 1.0], "line", {})
    assert two.stderr is None and two.passed is None
    assert linear_fit([1.0], [1.0], "line", {}) is None
    assert linear_fit([1.0, 1.0], [1.0, 2.0], "line", {}) is None
    slope_fit = linear_fit(np.log([64.0, 256.0, 1024.0]), np.log([0.4, 0.2, 0.1]), "line", {}, window=(-0.6, -0.4))
    assert slope_fit.passed is True


def test_analytic_decay_rate():
    assert analytic_decay_rate(var1(0.6)) == pytest.approx(math.log(0.6))
    assert analytic_decay_rate(var1(0.0)) == float("-inf")
    assert analytic_decay_rate(banna(a_w=0.5)) == pytest.approx(math.log(0.5))
    assert analytic_decay_rate(arch(scale=0.4, a2=0.3)) == pytest.approx(math.log(0.7))


# 实验类型


def test_rate_scan_recovers_root_n_rate():
    report = run_experiment(_rate_scan())
    assert len(report.cells) == 3
    fit = next(f for f in report.fits if f.target == "log-mean-vs-log-n")
    assert -0.6 <= fit.slope <= -0.4
    assert report.checks["n_slope_in_window"]
    assert all(c["population_source"] == "exact" for c in report.cells)
    assert report.constants == {"epsilon": 1.0, "c_universal": 1.0, "c_prime": 1.0}


def test_rate_scan_effective_rank_comparison():
    report = run_experiment(_rate_scan(
        grids={"n": [256], "p": [8], "m": [0], "spectrum": ["identity", "effective-rank:2"]},
        rank_ratio_tolerance=3.0,
    ))
    ranks = [c["effective_rank"] for c in report.cells]
    assert ranks == [pytest.approx(8.0), pytest.approx(2.0)]
    fit = next(f for f in report.fits if f.target == "log-mean-vs-log-rank")
    assert fit.slope > 0
    assert "rank_ratio_within_tolerance" in report.checks


def test_rate_scan_failing_window_is_reported():
    report = run_experiment(_rate_scan(slope_window=(0.0, 0.1)))
    assert not report.checks["n_slope_in_window"]
    assert not report.passed


def test_bound_check_iid_passes():
    report = run_experiment({
        "kind": "bound-check", "reps": 40, "master_seed": 3,
        "grids": {"n": [64], "p": [3], "m": [0, 1], "spectrum": ["identity"]},
    })
    assert report.passed
    assert [c["m"] for c in report.cells] == [0, 1]
    for cell in report.cells:
        assert cell["pass"] is True
        assert cell["mean_plus_2se"] <= cell["gaussian_bound"]
        assert cell["main_bound"] > 0


@pytest.mark.parametrize("scale", [0.3, 0.6])
def test_bound_check_var1_passes(scale):
    report = run_experiment({
        "kind": "bound-check", "reps": 60, "master_seed": 20240602, "model": var1(scale).model_dump(),
        "grids": {"n": [256], "p": [4], "m": [0], "spectrum": ["identity"]},
    })
    assert report.checks["gaussian_bound_dominates"]
    assert report.cells[0]["population_source"] == "exact"
    assert report.cells[0]["mean_plus_2se"] <= report.cells[0]["gaussian_bound"]


def test_tau_scan_arch_decays_at_least_as_fast_as_contraction():
    report = run_experiment({
        "kind": "tau-scan", "reps": 200, "master_seed": 20240607, "split_index": 4,
        "model": arch(scale=0.4, a2=0.3, p=4).model_dump(), "grids": {"lags": list(range(1, 13))},
    })
    assert report.checks["decay_rate"] is True
    assert report.fits[0].expected == pytest.approx(math.log(0.7))
    assert report.fits[0].slope <= math.log(0.7) + 0.1


def test_tau_scan_var_rate():
    report = run_experiment({
        "kind": "tau-scan", "reps": 50, "split_index": 2, "model": var1(0.6, p=3).model_dump(),
        "grids": {"lags": list(range(1, 11))},
    })
    assert report.passed
    assert report.fits[0].slope == pytest.approx(math.log(0.6), abs=1e-6)
    assert [c["lag"] for c in report.cells] == list(range(1, 11))
    assert all(c["analytic_bound"] is None for c in report.cells)


def test_tau_scan_independent_model_skips_fit():
    report = run_experiment({
        "kind": "tau-scan", "reps": 30, "model": var1(0.0, p=2).model_dump(), "grids": {"lags": [1, 2, 3]},
    })
    assert report.checks["decay_rate"] is True
    assert report.fits[0].slope == float("-inf")
    assert "-Infinity" in report.model_dump_json()


def test_tau_scan_truncated_outer_within_analytic_bound():
    report = run_experiment({
        "kind": "tau-scan", "reps": 50, "split_index": 2, "model": var1(0.6, p=2).model_dump(),
        "grids": {"lags": list(range(1, 9))}, "statistic": "truncated-outer", "truncation_level": 1.0,
    })
    assert report.checks["tau_within_analytic_bound"]
    assert all(c["value"] <= 2.0 + 1e-12 for c in report.cells)


def test_bernstein_tail_experiment():
    report = run_experiment({
        "kind": "bernstein-tail", "reps": 40, "model": banna(a_w=0.5, p=2).model_dump(),
        "grids": {"n": [64], "x": [0.0, 5.0, 20.0]}, "bound_m": 1.0,
    })
    assert report.checks["empirical_tail_below_bound"]
    assert report.constants["nu_sq"] == pytest.approx(1.0 / 3.0)
    tails = [c["empirical_tail"] for c in report.cells]
    assert tails == sorted(tails, reverse=True)


def test_cantor_check_marks_degenerate_rows():
    report = run_experiment({"kind": "cantor-check", "grids": {"B": [8, 100]}})
    assert report.passed
    assert report.cells[0]["prop1"] == "NA"
    assert report.cells[1]["prop3"] is True


# 确定性与持久化


@pytest.mark.parametrize(
    "cfg",
    [
        _rate_scan(grids={"n": [64, 128], "p": [3], "m": [0, 1], "spectrum": ["identity"]}),
        {"kind": "bernstein-tail", "reps": 40, "model": banna(a_w=0.5, p=2).model_dump(),
         "grids": {"n": [32], "x": [0.0, 5.0]}},
    ],
    ids=["rate-scan", "bernstein-tail"],
)
@pytest.mark.parametrize("workers", [2, 8])
def test_results_do_not_depend_on_worker_count(tmp_path, cfg, workers):
    run_experiment(cfg, workers=1, output_dir=tmp_path / "one")
    run_experiment(cfg, workers=workers, output_dir=tmp_path / "many")
    one = (tmp_path / "one" / "cells.csv").read_bytes()
    many = (tmp_path / "many" / "cells.csv").read_bytes()
    assert one == many


def test_persistence_failure_keeps_the_report(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(PersistenceError) as info:
        run_experiment({"kind": "cantor-check", "grids": {"B": [100]}}, output_dir=blocker / "out")
    assert info.value.report.cells[0]["B"] == 100


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIG_DIR.glob("*.json") if p.name != "model_var1.json"))
def test_shipped_configs_are_valid(name):
    cfg = load_config(CONFIG_DIR / name)
    assert cfg.output_dir.startswith("results/")
