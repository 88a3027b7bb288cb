"""实验编排：配置校验、网格展开、确定性蒙特卡洛执行与报告汇总

Cell c of an experiment uses the seed ``derive_seed(master_seed, c)`` and its
replicate r uses ``derive_seed(master_seed, c, r)``. Replicates are reduced in
index order, so reports do not depend on the worker count.
"""
import logging
import math
import time
from datetime import datetime
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy
from pydantic import ValidationError
from scipy import linalg as la
from scipy import stats

from config.settings import settings
from app.models.experiments import ExperimentConfig, ExperimentReport, FitResult, Provenance
from app.models.specs import BoundParams, InnovationSpec, ModelSpec
from app.services import rng
from app.services.bounds import (
    bernstein_tail,
    bound_params_for_model,
    clip_probability,
    gaussian_moment_bound_lagged,
    main_moment_bound,
    mixing_params_for_banna,
    tau_analytic_bound,
    effective_rank_bound,
)
from app.services.cantor import build_cantor, verify_cantor_properties
from app.services.errors import ConfigValidationError, InputError, PersistenceError
from app.services.estimators import (
    monte_carlo_deviation,
    population_autocov,
    population_autocov_sequence,
    resolve_workers,
    run_replicates,
    tau_hat,
)
from app.services.matrix_core import block_companion, effective_rank, spectral_norm, spectral_radius
from app.services.reports import COLUMNS, write_report
from app.services.timeseries import build_sigma0_spectrum, simulate_banna_matrices, spectrum_eigenvalues

logger = logging.getLogger(__name__)

CI_LEVEL = 0.95


# ---------------------------------------------------------------------------
# configuration


def _validation_error(e: ValidationError) -> ConfigValidationError:
    first = e.errors()[0]
    path = ".".join(str(part) for part in first.get("loc", ())) or None
    return ConfigValidationError(first.get("msg", str(e)), field_path=path)


def load_config(source: Union[str, Path, Dict[str, Any], ExperimentConfig]) -> ExperimentConfig:
    """从 JSON 文件、字典或已有对象载入并校验实验配置"""
    if isinstance(source, ExperimentConfig):
        cfg = source
    else:
        try:
            if isinstance(source, dict):
                cfg = ExperimentConfig.model_validate(source)
            else:
                try:
                    text = Path(source).read_text(encoding="utf-8")
                except OSError as e:
                    raise InputError(f"cannot read config {source}: {e}") from e
                cfg = ExperimentConfig.model_validate_json(text)
        except ValidationError as e:
            raise _validation_error(e) from e
    check_config(cfg)
    return cfg


def _require(condition: bool, message: str, path: str):
    if not condition:
        raise ConfigValidationError(message, field_path=path)


def check_config(cfg: ExperimentConfig) -> None:
    """按实验类型检查网格与模型"""
    g = cfg.grids
    if cfg.kind in ("rate-scan", "bound-check"):
        _require(bool(g.n), "must be nonempty", "grids.n")
        _require(bool(g.m), "must be nonempty", "grids.m")
        _require(bool(g.spectrum), "must be nonempty", "grids.spectrum")
        _require(all(n >= 2 for n in g.n), "sample sizes must be >= 2", "grids.n")
        _require(all(0 <= m < min(g.n) for m in g.m), "lags must satisfy 0 <= m < min(n)", "grids.m")
        _require(bool(g.p) or cfg.model is not None, "needs a p grid or a model", "grids.p")
        _require(all(p >= 1 for p in g.p), "dimensions must be >= 1", "grids.p")
        _require(
            cfg.kind != "bound-check" or cfg.model is None or cfg.model.variant != "ARCH",
            "bound-check needs a closed-form autocovariance sequence (VAR or BANNA)", "model.variant",
        )
    elif cfg.kind == "tau-scan":
        _require(cfg.model is not None, "tau-scan needs a model", "model")
        _require(bool(g.lags), "must be nonempty", "grids.lags")
        _require(
            g.lags[0] >= 1 and all(b > a for a, b in zip(g.lags, g.lags[1:])),
            "lags must be positive and strictly increasing", "grids.lags",
        )
        _require(
            cfg.statistic == "vector" or cfg.truncation_level is not None,
            "truncated-outer needs a truncation level", "truncation_level",
        )
    elif cfg.kind == "bernstein-tail":
        _require(cfg.model is not None and cfg.model.variant == "BANNA", "bernstein-tail needs a BANNA model", "model.variant")
        _require(bool(g.n), "must be nonempty", "grids.n")
        _require(all(n >= 2 for n in g.n), "sample sizes must be >= 2", "grids.n")
        _require(bool(g.x), "must be nonempty", "grids.x")
        _require(all(x >= 0 for x in g.x), "thresholds must be nonnegative", "grids.x")
    else:
        values = g.b_values()
        _require(bool(values), "must be nonempty", "grids.B")
        _require(values[0] >= 2, "B values must be >= 2", "grids.B")


def used_constants(cfg: ExperimentConfig) -> Dict[str, float]:
    o = cfg.constants
    return {
        "epsilon": settings.epsilon if o.epsilon is None else o.epsilon,
        "c_universal": settings.c_universal if o.c_universal is None else o.c_universal,
        "c_prime": settings.c_prime if o.c_prime is None else o.c_prime,
    }


def _bound_params(cfg: ExperimentConfig, spec: ModelSpec) -> BoundParams:
    const = used_constants(cfg)
    base = bound_params_for_model(
        spec, epsilon=const["epsilon"], c_universal=const["c_universal"], c_prime=const["c_prime"],
    )
    overrides = {k: v for k, v in cfg.constants.model_dump().items() if v is not None}
    return BoundParams.model_validate({**base.model_dump(), **overrides})


def _cell_model(cfg: ExperimentConfig, spectrum: str, spectrum_index: int, p: int) -> ModelSpec:
    template = cfg.model
    if spectrum == "model":
        spec = template or ModelSpec(variant="VAR", innovations=InnovationSpec(dim=p))
        _require(spec.p == p, f"model has p={spec.p} but the grid asks for p={p}", "grids.p")
        return spec
    try:
        lam = spectrum_eigenvalues(spectrum, p)
    except (InputError, ValueError) as e:
        raise ConfigValidationError(str(e), field_path="grids.spectrum") from e
    sigma = build_sigma0_spectrum(p, lam, rng.derive_seed(cfg.master_seed, rng.SPECTRUM_KEY, spectrum_index, p))
    data = template.model_dump() if template else {"variant": "VAR"}
    kind = template.innovations.kind if template else "gaussian"
    data["innovations"] = {"dim": p, "kind": kind, "sigma_e": sigma.tolist()}
    try:
        return ModelSpec.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e) from e


def _dims(cfg: ExperimentConfig) -> List[int]:
    return list(cfg.grids.p) if cfg.grids.p else [cfg.model.p]


# ---------------------------------------------------------------------------
# fits


def linear_fit(
    xs: Sequence[float], ys: Sequence[float], target: str, group: Dict[str, Any],
    expected: Optional[float] = None, window: Optional[Tuple[float, float]] = None,
) -> Optional[FitResult]:
    """最小二乘直线拟合，斜率 95% 置信区间基于 t 分布（点数 < 3 时不给出）"""
    if len(xs) < 2 or len(set(xs)) < 2:
        return None
    fit = stats.linregress(xs, ys)
    ci_low = ci_high = stderr = None
    if len(xs) >= 3:
        stderr = float(fit.stderr)
        half = float(stats.t.ppf(0.5 + CI_LEVEL / 2.0, len(xs) - 2)) * stderr
        ci_low, ci_high = float(fit.slope) - half, float(fit.slope) + half
    passed = None
    if window is not None:
        passed = bool(window[0] <= fit.slope <= window[1])
    return FitResult(
        target=target, group=group, points=len(xs), slope=float(fit.slope), intercept=float(fit.intercept),
        r2=float(fit.rvalue ** 2), stderr=stderr, ci_low=ci_low, ci_high=ci_high, expected=expected, passed=passed,
    )


# ---------------------------------------------------------------------------
# experiment kinds


def _run_rate_scan(cfg: ExperimentConfig, workers: int, report: Dict[str, Any]) -> None:
    g = cfg.grids
    const = used_constants(cfg)
    cells, fits, checks = report["cells"], report["fits"], report["checks"]
    by_n: Dict[Tuple[str, int, int], List[Tuple[int, float]]] = {}
    by_rank: Dict[Tuple[int, int, int], List[Tuple[str, float, float]]] = {}
    index = 0
    for si, spectrum in enumerate(g.spectrum):
        for p in _dims(cfg):
            spec = _cell_model(cfg, spectrum, si, p)
            sigma0 = population_autocov(spec, 0, max(g.n), cfg.master_seed)[0]
            r = effective_rank(sigma0)
            norm0 = spectral_norm(sigma0)
            for n in g.n:
                for m in g.m:
                    seed = rng.derive_seed(cfg.master_seed, index)
                    st = monte_carlo_deviation(spec, n, m, cfg.reps, seed, workers=workers)
                    bound = effective_rank_bound(sigma0, n, m, c=const["c_universal"])
                    cells.append({
                        "cell": index, "spectrum": spectrum, "p": p, "n": n, "m": m, "reps": cfg.reps,
                        "seed": seed, "effective_rank": r, "sigma0_norm": norm0, "mean": st.mean,
                        "std_error": st.std_error, "q50": st.quantiles[0.5], "q90": st.quantiles[0.9],
                        "q95": st.quantiles[0.95], "q99": st.quantiles[0.99], "effective_rank_bound": bound,
                        "ratio_to_rank_bound": st.mean / bound, "population_source": st.population_source,
                    })
                    by_n.setdefault((spectrum, p, m), []).append((n, st.mean))
                    by_rank.setdefault((p, n, m), []).append((spectrum, r, st.mean))
                    logger.info(f"rate-scan cell {index}: {spectrum} p={p} n={n} m={m} mean={st.mean:.6g}")
                    index += 1

    n_fits = []
    for (spectrum, p, m), points in by_n.items():
        fit = linear_fit(
            [math.log(n) for n, _ in points], [math.log(v) for _, v in points], "log-mean-vs-log-n",
            {"spectrum": spectrum, "p": p, "m": m}, expected=-0.5, window=cfg.slope_window,
        )
        if fit is not None:
            n_fits.append(fit)
    fits.extend(n_fits)
    if n_fits:
        checks["n_slope_in_window"] = all(f.passed for f in n_fits)

    ratios = []
    for (p, n, m), points in by_rank.items():
        if len({r for _, r, _ in points}) < 2:
            continue
        scaled = [v / math.sqrt(r) for _, r, v in points]
        ratios.append(max(scaled) / min(scaled))
        fit = linear_fit(
            [math.log(r) for _, r, _ in points], [math.log(v) for _, _, v in points], "log-mean-vs-log-rank",
            {"p": p, "n": n, "m": m}, expected=0.5,
        )
        if fit is not None:
            fits.append(fit)
    if ratios:
        checks["rank_ratio_within_tolerance"] = bool(max(ratios) <= cfg.rank_ratio_tolerance)


def _run_bound_check(cfg: ExperimentConfig, workers: int, report: Dict[str, Any]) -> None:
    g = cfg.grids
    cells, checks = report["cells"], report["checks"]
    index = 0
    for si, spectrum in enumerate(g.spectrum):
        for p in _dims(cfg):
            spec = _cell_model(cfg, spectrum, si, p)
            sequence = population_autocov_sequence(spec)
            bp = _bound_params(cfg, spec)
            for n in g.n:
                for m in g.m:
                    seed = rng.derive_seed(cfg.master_seed, index)
                    st = monte_carlo_deviation(spec, n, m, cfg.reps, seed, workers=workers)
                    bound = gaussian_moment_bound_lagged(sequence, n, m)
                    upper = st.mean + 2.0 * st.std_error
                    ok = bool(upper <= bound)
                    cells.append({
                        "cell": index, "spectrum": spectrum, "p": p, "n": n, "m": m, "reps": cfg.reps,
                        "seed": seed, "mean": st.mean, "std_error": st.std_error, "mean_plus_2se": upper,
                        "gaussian_bound": bound, "ratio": upper / bound if bound > 0 else None,
                        "main_bound": main_moment_bound(bp, n, m, p), "pass": ok,
                        "population_source": st.population_source,
                    })
                    logger.info(f"bound-check cell {index}: mean+2se={upper:.6g} bound={bound:.6g} pass={ok}")
                    index += 1
    checks["gaussian_bound_dominates"] = all(c["pass"] for c in cells)


def analytic_decay_rate(spec: ModelSpec) -> float:
    """耦合距离的解析衰减率（对数），VAR/BANNA 为精确值，ARCH 为收缩上界"""
    if spec.variant == "VAR":
        rho = spectral_radius(block_companion(spec.var_coefficients()))
        return math.log(rho) if rho > 0 else float("-inf")
    if spec.variant == "BANNA":
        return math.log(spec.a_w) if spec.a_w > 0 else float("-inf")
    contraction = spec.arch_a1() + spec.a2
    return math.log(contraction) if contraction > 0 else float("-inf")


def _run_tau_scan(cfg: ExperimentConfig, workers: int, report: Dict[str, Any]) -> None:
    spec = cfg.model
    const = used_constants(cfg)
    seed = rng.derive_seed(cfg.master_seed, 0)
    est = tau_hat(
        spec, cfg.split_index, cfg.grids.lags, epsilon=const["epsilon"], reps=cfg.reps, seed=seed,
        statistic=cfg.statistic, truncation_level=cfg.truncation_level, workers=workers,
    )
    bp = _bound_params(cfg, spec) if cfg.statistic == "truncated-outer" else None
    for index, (k, value) in enumerate(zip(est.lags, est.values)):
        bound = tau_analytic_bound(bp, k, 0, cfg.truncation_level) if bp is not None else None
        report["cells"].append({
            "cell": index, "lag": k, "value": value, "analytic_bound": bound, "epsilon": est.epsilon,
            "reps": est.replications, "statistic": est.statistic, "seed": seed,
        })

    expected = analytic_decay_rate(spec)
    positive = [(k, v) for k, v in zip(est.lags, est.values) if v > 0]
    fit = linear_fit([k for k, _ in positive], [math.log(v) for _, v in positive], "log-tau-vs-lag", {"variant": spec.variant})
    if fit is None:
        fit = FitResult(target="log-tau-vs-lag", group={"variant": spec.variant}, points=len(positive), slope=est.fit_rate)
    fit.expected = expected
    if spec.variant == "ARCH":
        fit.passed = bool(fit.slope <= expected + cfg.rate_tolerance)
    elif math.isinf(expected):
        fit.passed = bool(est.fit_skipped)
    else:
        fit.passed = bool(abs(fit.slope - expected) <= cfg.rate_tolerance)
    report["fits"].append(fit)
    report["checks"]["decay_rate"] = fit.passed
    if bp is not None:
        report["checks"]["tau_within_analytic_bound"] = all(
            bool(c["value"] <= c["analytic_bound"]) for c in report["cells"]
        )
    logger.info(f"tau-scan {spec.variant}: fitted rate {fit.slope:.4f}, analytic {expected:.4f}")


def bernstein_statistic(seed: int, spec: ModelSpec, n: int, bound_m: float) -> float:
    """λmax(Σ_{i<=n} X_i)"""
    total = simulate_banna_matrices(spec, n, seed, bound_m).sum(axis=0)
    return float(la.eigvalsh(total)[-1])


def _run_bernstein_tail(cfg: ExperimentConfig, workers: int, report: Dict[str, Any]) -> None:
    spec = cfg.model
    p = spec.p
    mp = mixing_params_for_banna(spec, cfg.bound_m)
    report["constants"].update({"psi1": mp.psi1, "psi2": mp.psi2, "bound_m": mp.bound_m, "nu_sq": mp.nu_sq})
    index = 0
    for ni, n in enumerate(cfg.grids.n):
        seed = rng.derive_seed(cfg.master_seed, ni)
        task = partial(bernstein_statistic, spec=spec, n=n, bound_m=cfg.bound_m)
        sample = np.asarray(run_replicates(task, cfg.reps, seed, workers))
        for x in cfg.grids.x:
            empirical = float(np.count_nonzero(sample >= x)) / cfg.reps
            raw = bernstein_tail(x, mp, n, p)
            clipped = clip_probability(raw)
            report["cells"].append({
                "cell": index, "n": n, "x": float(x), "empirical_tail": empirical, "bernstein_raw": raw,
                "bernstein_clipped": clipped, "pass": bool(empirical <= clipped), "seed": seed,
            })
            index += 1
        logger.info(f"bernstein-tail n={n}: max lambda_max {sample.max():.6g} over {cfg.reps} reps")
    report["checks"]["empirical_tail_below_bound"] = all(c["pass"] for c in report["cells"])


def _run_cantor_check(cfg: ExperimentConfig, workers: int, report: Dict[str, Any]) -> None:
    degenerate = 0
    ok = True
    for B in cfg.grids.b_values():
        result = verify_cantor_properties(build_cantor(B))
        row = {"B": B, "ell": result.ell, "card_KB": result.card_KB}
        row.update({k: ("NA" if v is None else v) for k, v in result.properties.items()})
        report["cells"].append(row)
        if result.degenerate:
            degenerate += 1
        else:
            ok = ok and result.all_pass
    report["checks"]["properties_hold"] = ok
    logger.info(f"cantor-check: {len(report['cells'])} values of B, {degenerate} degenerate")


RUNNERS = {
    "rate-scan": _run_rate_scan,
    "bound-check": _run_bound_check,
    "tau-scan": _run_tau_scan,
    "bernstein-tail": _run_bernstein_tail,
    "cantor-check": _run_cantor_check,
}


def run_experiment(
    cfg: Union[ExperimentConfig, Dict[str, Any], str, Path],
    workers: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> ExperimentReport:
    """执行实验网格；若给出输出目录则写出报告

    A write failure raises ``PersistenceError`` whose ``report`` attribute
    holds the computed report.
    """
    cfg = load_config(cfg)
    n_workers = resolve_workers(workers)
    started = datetime.now()
    t0 = time.perf_counter()
    logger.info(f"Running {cfg.kind} experiment (seed={cfg.master_seed}, workers={n_workers})")

    body: Dict[str, Any] = {"cells": [], "fits": [], "checks": {}, "constants": dict(used_constants(cfg))}
    RUNNERS[cfg.kind](cfg, n_workers, body)

    report = ExperimentReport(
        config=cfg,
        columns=COLUMNS[cfg.kind],
        cells=body["cells"],
        fits=body["fits"],
        checks=body["checks"],
        passed=all(body["checks"].values()),
        constants=body["constants"],
        provenance=Provenance(
            master_seed=cfg.master_seed,
            software_version=settings.app_version,
            numpy_version=np.__version__,
            scipy_version=scipy.__version__,
            workers=n_workers,
            started_at=started.isoformat(),
            wall_time=time.perf_counter() - t0,
        ),
    )
    logger.info(f"{cfg.kind} finished in {report.provenance.wall_time:.2f}s, passed={report.passed}")

    target = output_dir if output_dir is not None else cfg.output_dir
    if target is not None:
        try:
            write_report(report, target)
        except PersistenceError as e:
            e.report = report
            raise
    return report
