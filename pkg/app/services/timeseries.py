"""时间序列生成器：VAR(d)、标量调制模型 Y_t = W_t E_t、非线性 ARCH，以及因果移位耦合

Time t of a path (t = 1..n) is row ``burn + t - 1`` of every per-step random
array. A coupled path at split j redraws every row up to and including time j
(burn-in and initial state too) from the pre-coupling streams and keeps the
rows after j, so both paths see bit-identical innovations for t > j.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import signal
from scipy.stats import ortho_group

from app.models.results import CoupledPair, SeriesPath
from app.models.specs import InnovationSpec, ModelSpec
from app.services import rng
from app.services.errors import CapabilityError, DomainError, InputError
from app.services.matrix_core import (
    GAUSSIAN_PSI2,
    SymmetricMatrix,
    hypercube_quadratic_max,
    psd_factor,
    spectral_norm,
    stationary_var1_covariance,
)

logger = logging.getLogger(__name__)


def spectrum_eigenvalues(name: str, p: int) -> np.ndarray:
    """按名称生成特征值谱：identity、geometric:q、effective-rank:r"""
    if p < 1:
        raise InputError(f"dimension must be >= 1, got {p}")
    kind, _, arg = name.partition(":")
    if kind == "identity":
        return np.ones(p)
    if kind == "geometric":
        q = float(arg) if arg else 0.5
        if not 0.0 < q <= 1.0:
            raise DomainError(f"geometric ratio must lie in (0, 1], got {q}")
        return q ** np.arange(p)
    if kind == "effective-rank":
        r = float(arg)
        if p == 1:
            return np.ones(1)
        if not 1.0 < r <= p:
            raise DomainError(f"effective rank must lie in (1, {p}], got {r}")
        lam = np.full(p, (r - 1.0) / (p - 1.0))
        lam[0] = 1.0
        return lam
    raise InputError(f"unknown spectrum '{name}'")


def build_sigma0_spectrum(p: int, eigenvalues, seed: int) -> SymmetricMatrix:
    """QΛQ^T，Q 为按种子抽取的 Haar 正交矩阵"""
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if lam.size != p:
        raise InputError(f"expected {p} eigenvalues, got {lam.size}")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
        raise DomainError("eigenvalues must be finite and strictly positive")
    if p == 1:
        return SymmetricMatrix(lam.reshape(1, 1))
    q = ortho_group.rvs(p, random_state=rng.stream(seed, rng.STREAM_ORTHOGONAL))
    s = (q * lam) @ q.T
    return SymmetricMatrix(0.5 * (s + s.T), check=False)


def innovation_kappas(innovations: InnovationSpec) -> Tuple[float, float]:
    """新息的 (κ1′, κ*′)，按高斯 ψ2 常数由 Σ_E 计算"""
    cov = innovations.covariance()
    lam_max = spectral_norm(SymmetricMatrix(cov, check=False))
    try:
        quad = hypercube_quadratic_max(cov)
    except CapabilityError:
        logger.warning(f"p={innovations.dim} too large for enumeration, using Tr(Sigma_E) for kappa_star'")
        quad = float(np.trace(cov))
    return GAUSSIAN_PSI2 * np.sqrt(lam_max), GAUSSIAN_PSI2 * np.sqrt(max(quad, 0.0))


def arch_kappa_star_prime(spec: ModelSpec) -> float:
    if spec.kappa_star_prime is not None:
        return spec.kappa_star_prime
    value = innovation_kappas(spec.innovations)[1]
    if value <= 0.0:
        raise DomainError("kappa_star' of degenerate innovations is zero")
    return value


def _arch_gain(spec: ModelSpec) -> float:
    return 0.0 if spec.a2 == 0.0 else spec.a2 / arch_kappa_star_prime(spec)


def arch_volatility(spec: ModelSpec, u) -> np.ndarray:
    """H(u) = σ0 I + (a2/κ*′) diag(tanh u)"""
    u = np.asarray(u, dtype=float).ravel()
    if u.size != spec.p:
        raise InputError(f"expected a vector of length {spec.p}, got {u.size}")
    return spec.sigma_base * np.eye(spec.p) + _arch_gain(spec) * np.diag(np.tanh(u))


def _draw_innovations(innovations: InnovationSpec, gen: np.random.Generator, steps: int) -> np.ndarray:
    if innovations.kind == "gaussian":
        z = gen.standard_normal((steps, innovations.dim))
    else:
        z = 1.0 - 2.0 * gen.integers(0, 2, size=(steps, innovations.dim))
    return z @ innovations.factor().T


def _innovations(spec: ModelSpec, seed: int, steps: int, cut: Optional[int]) -> np.ndarray:
    out = _draw_innovations(spec.innovations, rng.stream(seed, rng.STREAM_INNOVATIONS), steps)
    if cut:
        out[:cut] = _draw_innovations(spec.innovations, rng.stream(seed, rng.STREAM_HISTORY), cut)
    return out


def _scalar_lags(coefs: List[np.ndarray]) -> Optional[List[float]]:
    eye = np.eye(coefs[0].shape[0])
    scales = []
    for c in coefs:
        s = float(c[0, 0])
        if not np.array_equal(c, s * eye):
            return None
        scales.append(s)
    return scales


def _run_var(spec: ModelSpec, n: int, seed: int, split: Optional[int]) -> np.ndarray:
    p = spec.p
    coefs = spec.var_coefficients()
    d = len(coefs)
    exact = spec.is_gaussian_var1
    burn = 0 if exact else spec.burn_in_steps
    steps = burn + n
    cut = None if split is None else burn + split
    innov = _innovations(spec, seed, steps, cut)
    if spec.is_independent:
        return innov[burn:].T.copy()

    y0 = np.zeros(p)
    if exact:
        sigma0 = stationary_var1_covariance(coefs[0], spec.innovations.covariance())
        stream_id = rng.STREAM_INITIAL if split is None else rng.STREAM_HISTORY_INITIAL
        y0 = psd_factor(sigma0) @ rng.stream(seed, stream_id).standard_normal(p)

    scales = _scalar_lags(coefs)
    if scales is not None:
        # A_k = s_k I: every coordinate is a scalar AR(d) filter
        forcing = innov
        if exact:
            forcing = innov.copy()
            forcing[0] += scales[0] * y0
        denom = np.concatenate(([1.0], -np.asarray(scales)))
        out = signal.lfilter([1.0], denom, forcing, axis=0)
        return out[burn:].T.copy()

    stacked = np.hstack(coefs)
    ys = np.zeros((steps + d, p))
    ys[d - 1] = y0
    for t in range(steps):
        ys[t + d] = innov[t] + stacked @ ys[t:t + d][::-1].ravel()
    return ys[d + burn:].T.copy()


def _run_banna(spec: ModelSpec, n: int, seed: int, split: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (W_1..W_n, E_1..E_n)"""
    burn = spec.burn_in_steps
    steps = burn + n
    kappa, a = spec.kappa_w, spec.a_w
    u = rng.stream(seed, rng.STREAM_W_CHAIN).uniform(-kappa, kappa, steps)
    cut = None if split is None else burn + split
    if cut:
        u[:cut] = rng.stream(seed, rng.STREAM_HISTORY_W_CHAIN).uniform(-kappa, kappa, cut)
    innov = _innovations(spec, seed, steps, cut)
    w = signal.lfilter([1.0 - a], [1.0, -a], u)
    np.clip(w, -kappa, kappa, out=w)  # rounding
    return w[burn:], innov[burn:]


def _run_arch(spec: ModelSpec, n: int, seed: int, split: Optional[int]) -> np.ndarray:
    a = spec.arch_a()
    gain = _arch_gain(spec)
    sigma = spec.sigma_base
    burn = spec.burn_in_steps
    steps = burn + n
    innov = _innovations(spec, seed, steps, None if split is None else burn + split)
    out = np.empty_like(innov)
    y = np.zeros(spec.p)
    for t in range(steps):
        e = innov[t]
        y = a @ y + sigma * e + gain * np.tanh(y) * e
        out[t] = y
    return out[burn:].T.copy()


def _generate(spec: ModelSpec, n: int, seed: int, split: Optional[int] = None) -> SeriesPath:
    if n < 1:
        raise InputError(f"path length must be >= 1, got {n}")
    latent = None
    if spec.variant == "VAR":
        data = _run_var(spec, n, seed, split)
    elif spec.variant == "BANNA":
        latent, innov = _run_banna(spec, n, seed, split)
        data = (latent[:, None] * innov).T.copy()
        latent.setflags(write=False)
    else:
        data = _run_arch(spec, n, seed, split)
    data.setflags(write=False)
    return SeriesPath(p=spec.p, n=n, data=data, seed=seed, model=spec, latent=latent)


def _require(spec: ModelSpec, variant: str):
    if spec.variant != variant:
        raise InputError(f"expected a {variant} model, got {spec.variant}")


def simulate_var(spec: ModelSpec, n: int, seed: int) -> SeriesPath:
    _require(spec, "VAR")
    return _generate(spec, n, seed)


def simulate_banna(spec: ModelSpec, n: int, seed: int) -> SeriesPath:
    _require(spec, "BANNA")
    return _generate(spec, n, seed)


def simulate_arch(spec: ModelSpec, n: int, seed: int) -> SeriesPath:
    _require(spec, "ARCH")
    return _generate(spec, n, seed)


def simulate(spec: ModelSpec, n: int, seed: int) -> SeriesPath:
    """按模型类型分派"""
    return _generate(spec, n, seed)


def simulate_coupled(spec: ModelSpec, j: int, n: int, seed: int) -> CoupledPair:
    """原路径与在 j 处耦合的路径：t > j 共享新息，t <= j 的历史独立重抽"""
    if not 0 <= j < n:
        raise InputError(f"split index must satisfy 0 <= j < n, got j={j}, n={n}")
    original = _generate(spec, n, seed)
    coupled = _generate(spec, n, seed, split=j)
    return CoupledPair(original=original, coupled=coupled, split_index=j)


def simulate_banna_matrices(
    spec: ModelSpec, n: int, seed: int, bound_m: float = 1.0, split: Optional[int] = None
) -> np.ndarray:
    """有界对称矩阵序列 X_i = M (W_i/κ_W) trunc(E_i E_i^T, 1)，形状 n × p × p"""
    _require(spec, "BANNA")
    if not bound_m > 0:
        raise DomainError(f"bound M must be positive, got {bound_m}")
    if n < 1:
        raise InputError(f"sequence length must be >= 1, got {n}")
    w, e = _run_banna(spec, n, seed, split)
    sq = np.einsum("ij,ij->i", e, e)
    # ||e e^T|| = |e|^2
    shrink = np.ones_like(sq)
    np.divide(1.0, sq, out=shrink, where=sq > 1.0)
    scale = bound_m * (w / spec.kappa_w) * shrink
    return scale[:, None, None] * e[:, :, None] * e[:, None, :]


def stationary_w_variance(a_w: float, kappa_w: float) -> float:
    """平稳链 W_t 的方差 (1-a)²κ²/(3(1-a²))"""
    return (1.0 - a_w) ** 2 * kappa_w ** 2 / (3.0 * (1.0 - a_w ** 2))
