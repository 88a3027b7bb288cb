"""估计量：样本自协方差、偏差统计、κ 常数、耦合 τ 系数与 ν² 窗口估计"""
import logging
import math
import os
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from config.settings import settings
from app.models.results import DeviationStats, KappaPair, SeriesPath, TauEstimate
from app.models.specs import ModelSpec
from app.services import rng
from app.services.errors import CapabilityError, DomainError, InputError, MatrixInputError
from app.services.matrix_core import (
    GAUSSIAN_PSI2,
    DenseMatrix,
    MatrixLike,
    SymmetricMatrix,
    as_array,
    block_companion,
    hypercube_quadratic_max,
    psd_eigenvalues,
    spectral_norm,
    stationary_var_covariance,
    var_autocovariance,
)
from app.services.timeseries import simulate, simulate_coupled, stationary_w_variance

logger = logging.getLogger(__name__)

DEFAULT_QUANTILES = (0.5, 0.9, 0.95, 0.99)
MIN_REPS = 30
MIN_NU_REPS = 100
MAX_WINDOW_STARTS = 8


# ---------------------------------------------------------------------------
# replicate execution


def resolve_workers(workers: Optional[int] = None) -> int:
    value = workers if workers is not None else settings.workers
    if value is None:
        value = os.cpu_count() or 1
    if value < 1:
        raise InputError(f"workers must be >= 1, got {value}")
    return value


def _run_chunk(task: Callable[[int], object], seed: int, start: int, stop: int) -> list:
    return [task(rng.derive_seed(seed, r)) for r in range(start, stop)]


def run_replicates(task: Callable[[int], object], reps: int, seed: int, workers: Optional[int] = None) -> list:
    """按副本序号顺序返回 task(derive_seed(seed, r)) 的结果"""
    n_jobs = min(resolve_workers(workers), max(reps, 1))
    if n_jobs == 1:
        return _run_chunk(task, seed, 0, reps)
    bounds = np.linspace(0, reps, n_jobs + 1).astype(int)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_run_chunk)(task, seed, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])
    )
    return [item for part in parts for item in part]


def nearest_rank_quantile(sorted_values: Sequence[float], q: float) -> float:
    """最近秩分位数：第 ceil(qN) 个次序统计量"""
    count = len(sorted_values)
    idx = min(max(math.ceil(q * count) - 1, 0), count - 1)
    return float(sorted_values[idx])


# ---------------------------------------------------------------------------
# sample statistics


def _path_data(path: Union[SeriesPath, np.ndarray]) -> np.ndarray:
    data = path.data if isinstance(path, SeriesPath) else np.asarray(path, dtype=float)
    if data.ndim != 2:
        raise InputError(f"path data must be p x n, got shape {data.shape}")
    return data


def sample_autocov(path: Union[SeriesPath, np.ndarray], m: int) -> DenseMatrix:
    """Σ̂_m = (n-m)^{-1} Σ_{i=1}^{n-m} Y_i Y_{i+m}^T"""
    y = _path_data(path)
    n = y.shape[1]
    if not 0 <= m < n:
        raise InputError(f"lag must satisfy 0 <= m <= n-1, got m={m}, n={n}")
    est = y[:, :n - m] @ y[:, m:].T / (n - m)
    if m == 0:
        return SymmetricMatrix(0.5 * (est + est.T), check=False)
    return DenseMatrix(est)


def deviation_spectral(est: MatrixLike, pop: MatrixLike) -> float:
    a, b = as_array(est), as_array(pop)
    if a.shape != b.shape:
        raise MatrixInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return spectral_norm(a - b)


def kappa_pair(sigma0: MatrixLike, mode: str = "gaussian-exact") -> KappaPair:
    """中心高斯向量的 κ1、κ*（ψ2 常数 √(8/3)）"""
    a = as_array(sigma0)
    w = psd_eigenvalues(a)
    lam_max = float(w[-1])
    if lam_max <= 0.0:
        raise DomainError("kappa constants of the zero covariance are undefined")
    p = a.shape[0]
    if mode == "trace-proxy":
        quad = float(np.trace(a))
    elif mode == "enumerate":
        if p > settings.enumerate_max_dim:
            raise CapabilityError(f"enumerate mode supports p <= {settings.enumerate_max_dim}, got p = {p}")
        quad = hypercube_quadratic_max(a)
    elif mode == "gaussian-exact":
        try:
            quad = hypercube_quadratic_max(a)
        except CapabilityError:
            logger.warning(f"p={p} has sign-mixed covariances beyond the enumeration limit, using trace-proxy")
            mode, quad = "trace-proxy", float(np.trace(a))
    else:
        raise InputError(f"unknown kappa mode '{mode}'")
    return KappaPair(
        kappa1=GAUSSIAN_PSI2 * math.sqrt(lam_max),
        kappa_star=GAUSSIAN_PSI2 * math.sqrt(max(quad, lam_max)),
        mode=mode,
    )


# ---------------------------------------------------------------------------
# coupling coefficients


def _truncated_outer(y: np.ndarray, level: float) -> np.ndarray:
    """批量 trunc(y y^T, M)，利用 ||y y^T|| = |y|²"""
    sq = np.einsum("...i,...i->...", y, y)
    scale = np.ones_like(sq)
    np.divide(level, sq, out=scale, where=sq > level)
    return scale[..., None, None] * y[..., :, None] * y[..., None, :]


def _coupling_distances(
    seed: int, spec: ModelSpec, j: int, lags: Tuple[int, ...], statistic: str, level: Optional[float]
) -> np.ndarray:
    pair = simulate_coupled(spec, j, j + lags[-1], seed)
    cols = [j + k - 1 for k in lags]
    y = pair.original.data[:, cols].T
    y_alt = pair.coupled.data[:, cols].T
    if statistic == "vector":
        return np.linalg.norm(y - y_alt, axis=1)
    diff = _truncated_outer(y, level) - _truncated_outer(y_alt, level)
    return np.array([spectral_norm(SymmetricMatrix(d, check=False)) for d in diff])


def tau_hat(
    spec: ModelSpec,
    j: int,
    lags: Sequence[int],
    epsilon: Optional[float] = None,
    reps: int = 2000,
    seed: int = 0,
    statistic: str = "vector",
    truncation_level: Optional[float] = None,
    workers: Optional[int] = None,
) -> TauEstimate:
    """耦合距离的 L(1+ε) 范数 (E||Y_{j+k} - Ỹ_{j+k}||^{1+ε})^{1/(1+ε)} 及其对数线性拟合"""
    eps = settings.epsilon if epsilon is None else epsilon
    if reps < MIN_REPS:
        raise InputError(f"tau_hat needs reps >= {MIN_REPS}, got {reps}")
    if eps < 0:
        raise DomainError(f"epsilon must be nonnegative, got {eps}")
    if j < 0:
        raise InputError(f"split index must be nonnegative, got {j}")
    lags = tuple(int(k) for k in lags)
    if not lags or lags[0] < 1 or any(b <= a for a, b in zip(lags, lags[1:])):
        raise InputError("lags must be positive and strictly increasing")
    if statistic not in ("vector", "truncated-outer"):
        raise InputError(f"unknown tau statistic '{statistic}'")
    if statistic == "truncated-outer" and not (truncation_level and truncation_level > 0):
        raise DomainError("truncated-outer statistic needs a positive truncation level")

    task = partial(_coupling_distances, spec=spec, j=j, lags=lags, statistic=statistic, level=truncation_level)
    rows = run_replicates(task, reps, seed, workers)
    power = 1.0 + eps
    values = []
    for col in range(len(lags)):
        moment = math.fsum(float(row[col]) ** power for row in rows) / reps
        values.append(moment ** (1.0 / power))

    fit_rate, fit_r2 = float("-inf"), None
    positive = [(k, v) for k, v in zip(lags, values) if v > 0.0]
    if len(positive) >= 2:
        fit = stats.linregress([k for k, _ in positive], [math.log(v) for _, v in positive])
        fit_rate, fit_r2 = float(fit.slope), float(fit.rvalue ** 2)
    else:
        logger.warning(f"tau fit skipped: {len(positive)} positive values out of {len(lags)}")
    logger.info(f"tau_hat {spec.variant} j={j} reps={reps}: rate={fit_rate:.4f}")
    return TauEstimate(
        lags=list(lags), values=values, epsilon=eps, replications=reps,
        fit_rate=fit_rate, fit_r2=fit_r2, statistic=statistic,
    )


# ---------------------------------------------------------------------------
# variance proxy


def _window_lengths(n: int) -> List[int]:
    lengths = [1 << k for k in range(n.bit_length()) if (1 << k) <= n]
    if lengths[-1] != n:
        lengths.append(n)
    return lengths


def nu_squared_from_samples(samples: np.ndarray, mean: Optional[np.ndarray] = None) -> float:
    """连续窗口上的 sup_K λmax{E(Σ_{i∈K} X_i - EX_i)²}/card(K)

    ``samples`` has shape (reps, n, d, d) and holds symmetric matrices. The
    expectation EX_i is the pooled sample mean unless ``mean`` is given. Window
    lengths run over 1, 2, 4, ... and n with at most eight evenly spaced starts
    each, so the result is a lower bound on the supremum over all subsets.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 4 or x.shape[2] != x.shape[3]:
        raise InputError(f"samples must have shape (reps, n, d, d), got {x.shape}")
    reps, n = x.shape[0], x.shape[1]
    if reps < 2 or n < 1:
        raise InputError("need at least two replications and one time step")
    center = x.mean(axis=(0, 1)) if mean is None else np.asarray(mean, dtype=float)
    prefix = np.zeros((reps, n + 1) + x.shape[2:])
    np.cumsum(x - center, axis=1, out=prefix[:, 1:])

    best = 0.0
    for length in _window_lengths(n):
        starts = np.unique(np.linspace(0, n - length, min(MAX_WINDOW_STARTS, n - length + 1)).round().astype(int))
        for s in starts:
            total = prefix[:, s + length] - prefix[:, s]
            second = np.einsum("rij,rkj->ik", total, total) / reps
            lam = spectral_norm(SymmetricMatrix(0.5 * (second + second.T), check=False))
            best = max(best, lam / length)
    return best


def _truncated_lag_products(seed: int, spec: ModelSpec, n: int, m: int, level: float) -> np.ndarray:
    y = simulate(spec, n + m, seed).data
    u, v = y[:, :n].T, y[:, m:m + n].T
    if m == 0:
        return _truncated_outer(u, level)
    p = spec.p
    norms = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    scale = np.ones_like(norms)
    np.divide(level, norms, out=scale, where=norms > level)
    out = np.zeros((n, 2 * p, 2 * p))
    block = scale[:, None, None] * u[:, :, None] * v[:, None, :]
    out[:, :p, p:] = block
    out[:, p:, :p] = np.transpose(block, (0, 2, 1))
    return out


def nu_squared_window_estimate(
    spec: ModelSpec, n: int, level: float, m: int, reps: int, seed: int, workers: Optional[int] = None
) -> float:
    """截断外积 X_i^M（m > 0 时为扩张 Z_i^M）的 ν² 窗口下界估计"""
    if reps < MIN_NU_REPS:
        raise InputError(f"nu-squared estimate needs reps >= {MIN_NU_REPS}, got {reps}")
    if not level > 0:
        raise DomainError(f"truncation level must be positive, got {level}")
    if n < 1 or m < 0:
        raise InputError(f"need n >= 1 and m >= 0, got n={n}, m={m}")
    task = partial(_truncated_lag_products, spec=spec, n=n, m=m, level=level)
    samples = np.stack(run_replicates(task, reps, seed, workers))
    value = nu_squared_from_samples(samples)
    logger.info(f"nu^2 window estimate {spec.variant} n={n} m={m} M={level}: {value:.6g}")
    return value


# ---------------------------------------------------------------------------
# population and Monte Carlo deviation


def population_autocov(spec: ModelSpec, m: int, n: Optional[int] = None, seed: int = 0) -> Tuple[DenseMatrix, str]:
    """总体 Σ_m 及其来源（exact 或 reference-path）"""
    if m < 0:
        raise InputError(f"lag must be nonnegative, got {m}")
    p = spec.p
    if spec.variant == "VAR":
        return var_autocovariance(spec.var_coefficients(), spec.innovations.covariance(), m), "exact"
    if spec.variant == "BANNA":
        if m > 0:
            return DenseMatrix(np.zeros((p, p))), "exact"
        scale = stationary_w_variance(spec.a_w, spec.kappa_w)
        return SymmetricMatrix(scale * spec.innovations.covariance(), check=False), "exact"

    if n is None:
        raise InputError("reference-path population needs the sample size n")
    n_ref = settings.reference_path_factor * n
    logger.warning(f"no closed-form Sigma_{m} for {spec.variant}, using a reference path of length {n_ref}")
    try:
        path = simulate(spec, n_ref, rng.derive_seed(seed, rng.REFERENCE_PATH_KEY))
    except Exception as e:
        logger.error(f"reference path generation failed: {e}")
        raise
    return sample_autocov(path, m), "reference-path"


def population_autocov_sequence(spec: ModelSpec) -> Callable[[int], np.ndarray]:
    """精确总体自协方差序列 m -> Σ_m（VAR 与标量调制模型）"""
    p = spec.p
    if spec.variant == "VAR":
        coefs = spec.var_coefficients()
        big = block_companion(coefs)
        cache = [as_array(stationary_var_covariance(coefs, spec.innovations.covariance()))]

        def var_lag(m: int) -> np.ndarray:
            while len(cache) <= m:
                cache.append(cache[-1] @ big.T)
            return cache[m][:p, :p]

        return var_lag
    if spec.variant == "BANNA":
        sigma0 = as_array(population_autocov(spec, 0)[0])
        zero = np.zeros((p, p))
        return lambda m: sigma0 if m == 0 else zero
    raise DomainError(f"no closed-form autocovariance sequence for {spec.variant}")


def _single_deviation(seed: int, spec: ModelSpec, n: int, m: int, pop: np.ndarray) -> float:
    return deviation_spectral(sample_autocov(simulate(spec, n, seed), m), pop)


def summarize_deviations(raw: Sequence[float], quantiles: Sequence[float] = DEFAULT_QUANTILES) -> Tuple[float, float, dict]:
    """均值、标准误（样本标准差/√N）与最近秩分位数"""
    count = len(raw)
    mean = math.fsum(raw) / count
    var = math.fsum((x - mean) ** 2 for x in raw) / (count - 1) if count > 1 else 0.0
    ordered = sorted(raw)
    return mean, math.sqrt(var / count), {q: nearest_rank_quantile(ordered, q) for q in quantiles}


def monte_carlo_deviation(
    spec: ModelSpec,
    n: int,
    m: int,
    reps: int,
    seed: int,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    workers: Optional[int] = None,
) -> DeviationStats:
    """||Σ̂_m - Σ_m|| 的蒙特卡洛分布"""
    if reps < MIN_REPS:
        raise InputError(f"monte_carlo_deviation needs reps >= {MIN_REPS}, got {reps}")
    if not 0 <= m < n:
        raise InputError(f"lag must satisfy 0 <= m <= n-1, got m={m}, n={n}")
    pop, source = population_autocov(spec, m, n, seed)
    task = partial(_single_deviation, spec=spec, n=n, m=m, pop=as_array(pop))
    raw = [float(x) for x in run_replicates(task, reps, seed, workers)]
    mean, std_error, qs = summarize_deviations(raw, quantiles)
    metadata = {}
    if source == "reference-path":
        metadata["reference_path_length"] = float(settings.reference_path_factor * n)
    logger.info(f"deviation {spec.variant} n={n} m={m} reps={reps}: mean={mean:.6g} se={std_error:.3g}")
    return DeviationStats(
        mean=mean, std_error=std_error, quantiles=qs, raw=raw, population_source=source, metadata=metadata,
    )
