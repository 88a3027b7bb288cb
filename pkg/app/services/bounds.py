"""偏差与尾概率界的数值计算

All logarithms are natural; ``ln(e p)`` is ``1 + ln p``. Evaluators return the
raw value of each formula. Clipping probability-valued outputs to [0, 1] is
left to the reporting layer (``clip_probability``).
"""
import logging
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from config.settings import settings
from app.models.results import KappaPair
from app.models.specs import BoundParams, MixingParams, ModelSpec
from app.services.errors import CapabilityError, DomainError, InputError
from app.services.estimators import kappa_pair, population_autocov
from app.services.matrix_core import (
    MatrixLike,
    as_array,
    companion_matrix,
    effective_rank,
    nuclear_norm,
    psd_eigenvalues,
    spectral_norm,
    spectral_radius,
)
from app.services.timeseries import arch_kappa_star_prime, innovation_kappas, stationary_w_variance

logger = logging.getLogger(__name__)

A2_BASE = 453.0 ** 2
SEQUENCE_RTOL = 1e-12
RATE_FLOOR = 1e-12
MAX_GELFAND_POWER = 100_000

SigmaSequence = Union[Sequence[MatrixLike], Callable[[int], MatrixLike]]


def _effective_n(n: int, m: int) -> int:
    if m < 0 or n - m < 1:
        raise InputError(f"need 0 <= m <= n-1, got n={n}, m={m}")
    return n - m


def _log_ep(p: int) -> float:
    if p < 1:
        raise InputError(f"dimension must be >= 1, got {p}")
    return 1.0 + math.log(p)


# ---------------------------------------------------------------------------
# moment bounds


def main_moment_bound(bp: BoundParams, n: int, m: int, p: int) -> float:
    """C κ1² {√(r* ln(ep)/(n-m)) + r* ln(ep) (ln np)³/(n-m)}"""
    if n < 2:
        raise InputError(f"need n >= 2, got {n}")
    nm = _effective_n(n, m)
    r = bp.r_star
    lep = _log_ep(p)
    return bp.c_universal * bp.kappa1 ** 2 * (
        math.sqrt(r * lep / nm) + r * lep * math.log(n * p) ** 3 / nm
    )


def stationary_moment_bound(sigma0: MatrixLike, n: int, m: int, c: Optional[float] = None) -> float:
    """平稳形式 C′||Σ0|| {√(r(Σ0) ln(ep)/(n-m)) + r(Σ0) ln(ep) (ln np)³/(n-m)}"""
    c = settings.c_prime if c is None else c
    if n < 2:
        raise InputError(f"need n >= 2, got {n}")
    nm = _effective_n(n, m)
    p = as_array(sigma0).shape[0]
    r = effective_rank(sigma0)
    lep = _log_ep(p)
    return c * spectral_norm(sigma0) * (math.sqrt(r * lep / nm) + r * lep * math.log(n * p) ** 3 / nm)


def _sequence_getter(sigma_sequence: SigmaSequence) -> Callable[[int], Optional[np.ndarray]]:
    if callable(sigma_sequence):
        return lambda h: as_array(sigma_sequence(h))
    items = list(sigma_sequence)
    if not items:
        raise InputError("autocovariance sequence is empty")
    return lambda h: as_array(items[h]) if h < len(items) else None


def gaussian_moment_bound(sigma_sequence: SigmaSequence, n: int) -> float:
    """(2/n){2S_* + √(2n||Σ0||S_*) + √(2n S_sp Tr Σ0)}，无隐藏常数

    ``sigma_sequence`` is either the list Σ_0, Σ_1, ... or a callable m -> Σ_m.
    The sums stop at the first lag whose nuclear norm falls below 1e-12·||Σ0||_*
    or at m = n - 1.
    """
    if n < 1:
        raise InputError(f"need n >= 1, got {n}")
    get = _sequence_getter(sigma_sequence)
    sigma0 = get(0)
    psd_eigenvalues(sigma0)
    nuc0 = nuclear_norm(sigma0)
    if nuc0 == 0.0:
        return 0.0
    s_nuc, s_sp = nuc0, spectral_norm(sigma0)
    used = 0
    for h in range(1, n):
        sigma = get(h)
        if sigma is None:
            break
        nuc = nuclear_norm(sigma)
        if nuc < SEQUENCE_RTOL * nuc0:
            break
        s_nuc += 2.0 * nuc
        s_sp += 2.0 * spectral_norm(sigma)
        used = h
    logger.debug(f"gaussian bound: n={n}, lags used={used}, S_*={s_nuc:.6g}, S_sp={s_sp:.6g}")
    trace = float(np.trace(sigma0))
    norm0 = spectral_norm(sigma0)
    return (2.0 / n) * (
        2.0 * s_nuc + math.sqrt(2.0 * n * norm0 * s_nuc) + math.sqrt(2.0 * n * s_sp * trace)
    )


def stacked_autocovariances(sigma_sequence: SigmaSequence, m: int) -> Callable[[int], np.ndarray]:
    """Ȳ_i = (Y_i, Y_{i+m}) 的自协方差 Σ̄_h = [[Σ_h, Σ_{h+m}], [Σ_{h-m}, Σ_h]]，Σ_{-k} = Σ_k^T"""
    get = _sequence_getter(sigma_sequence)
    p = get(0).shape[0]
    zero = np.zeros((p, p))

    def lag(h: int) -> np.ndarray:
        if h < 0:
            value = get(-h)
            return zero if value is None else value.T
        value = get(h)
        return zero if value is None else value

    def stacked(h: int) -> np.ndarray:
        return np.block([[lag(h), lag(h + m)], [lag(h - m), lag(h)]])

    return stacked


def gaussian_moment_bound_lagged(sigma_sequence: SigmaSequence, n: int, m: int) -> float:
    """滞后 m 的高斯界：对 n-m 个堆叠观测 Ȳ_i 应用显式高斯界"""
    nm = _effective_n(n, m)
    if m == 0:
        return gaussian_moment_bound(sigma_sequence, n)
    return gaussian_moment_bound(stacked_autocovariances(sigma_sequence, m), nm)


def effective_rank_bound(sigma0: MatrixLike, n: int, m: int, c: Optional[float] = None) -> float:
    """c ||Σ0|| (√(r/(n-m)) + r/(n-m))，r 为有效秩"""
    c = settings.c_universal if c is None else c
    if not c > 0:
        raise DomainError(f"constant must be positive, got {c}")
    nm = _effective_n(n, m)
    r = effective_rank(sigma0)
    return c * spectral_norm(sigma0) * (math.sqrt(r / nm) + r / nm)


# ---------------------------------------------------------------------------
# tail bounds


def m_delta(bp: BoundParams, n: int, m: int, delta: float) -> float:
    """M_δ = C max{(κ*/κ1)² ln((n-m)/δ), (κ*/κ1)², 2κ*γ1/κ1}"""
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    nm = _effective_n(n, m)
    r = bp.r_star
    return bp.c_universal * max(r * math.log(nm / delta), r, 2.0 * bp.kappa_ratio * bp.gamma1)


def _rate_denominator(bp: BoundParams) -> float:
    denom = -math.expm1(-bp.mixing_rate())
    if not denom > RATE_FLOOR:
        raise DomainError(f"mixing-rate denominator underflows (1 - exp(-rate) = {denom:.3e})")
    return denom


def tail_bound(x: float, delta: float, bp: BoundParams, n: int, m: int, p: int, clip: bool = False) -> float:
    """2p exp{-C′(n-m)²x²/(A1(n-m) + A2 M_δ² + A3(n-m)x M_δ)} + δ

    With ``clip`` the value is capped at 1 + δ.
    """
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if not bp.gamma2 > 0:
        raise DomainError(f"gamma2 must be positive, got {bp.gamma2}")
    nm = _effective_n(n, m)
    ratio = bp.kappa_ratio
    a1 = (ratio * bp.gamma1 + ratio ** 2 * (bp.gamma3 + 2 * m + 1) + 2 * m + 1) / _rate_denominator(bp)
    a2 = A2_BASE / bp.gamma2
    a3 = (2.0 * math.log(nm) / math.log(2.0)) * max(1.0, 8.0 * m + 48.0 * math.log(nm * p) / bp.gamma2)
    md = m_delta(bp, n, m, delta)
    exponent = bp.c_prime * nm ** 2 * x ** 2 / (a1 * nm + a2 * md ** 2 + a3 * nm * x * md)
    value = 2.0 * p * math.exp(-exponent) + delta
    return min(value, 1.0 + delta) if clip else value


def psi_tilde(psi1: float, psi2: float, n: int, p: int) -> float:
    """ψ̃ = (ln n/ln 2) max{1, 8 ln(ψ̃1 n⁶ p)/ψ2}，ψ̃1 = max(1/p, ψ1)"""
    if n < 2:
        raise DomainError(f"psi_tilde needs n >= 2, got {n}")
    if not (psi1 > 0 and psi2 > 0):
        raise DomainError(f"psi1 and psi2 must be positive, got {psi1}, {psi2}")
    if p < 1:
        raise InputError(f"dimension must be >= 1, got {p}")
    psi1_t = max(1.0 / p, psi1)
    return (math.log(n) / math.log(2.0)) * max(1.0, 8.0 * math.log(psi1_t * float(n) ** 6 * p) / psi2)


def bernstein_tail(x: float, mp: MixingParams, n: int, p: int) -> float:
    """p exp{-x²/(8(15² n ν² + 60² M²/ψ2) + 2xMψ̃)}"""
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    pt = psi_tilde(mp.psi1, mp.psi2, n, p)
    denom = 8.0 * (225.0 * n * mp.nu_sq + 3600.0 * mp.bound_m ** 2 / mp.psi2) + 2.0 * x * mp.bound_m * pt
    return p * math.exp(-x ** 2 / denom)


def clip_probability(value: float, upper: float = 1.0) -> float:
    return min(max(value, 0.0), upper)


# ---------------------------------------------------------------------------
# variance proxy and coupling coefficients


def nu_squared_analytic_bound(bp: BoundParams, m: int, z_form: Optional[bool] = None) -> float:
    """ν² 的解析上界；m > 0（或 z_form=True）时使用扩张形式"""
    if m < 0:
        raise InputError(f"lag must be nonnegative, got {m}")
    use_z = m > 0 if z_form is None else z_form
    k1, ks = bp.kappa1, bp.kappa_star
    if use_z:
        inner = (2 * m + 1) * k1 ** 2 + k1 * ks * bp.gamma1 + ks ** 2 * (bp.gamma3 + 2 * m + 2)
    else:
        inner = k1 ** 2 + k1 * ks * bp.gamma1 + ks ** 2 * (bp.gamma3 + 2.0)
    return bp.c_prime * k1 ** 2 * inner / _rate_denominator(bp)


def tau_analytic_bound(bp: BoundParams, k: int, m: int, truncation_level: float) -> float:
    """τ(k; {X_t^M}) 的上界；m > 0 时为扩张序列 {Z_t^M} 的形式"""
    if k < 1:
        raise InputError(f"lag k must be >= 1, got {k}")
    if m < 0:
        raise InputError(f"lag m must be nonnegative, got {m}")
    if not truncation_level > 0:
        raise DomainError(f"truncation level must be positive, got {truncation_level}")
    decay = math.exp(-bp.gamma2 * (k - 1))
    scale = bp.gamma1 * bp.kappa1 * bp.kappa_star
    if m == 0:
        return bp.c_universal * scale * decay
    return bp.c_prime * math.exp(bp.gamma2 * min(k, m)) * max(scale, bp.kappa_star ** 2) * decay


# ---------------------------------------------------------------------------
# model constants


def gelfand_constant(a_bar: MatrixLike, rho1: float) -> int:
    """最小的 t >= 1 使 ||Ā^t|| < ρ1^t"""
    arr = as_array(a_bar)
    rho = spectral_radius(arr)
    if not rho < rho1 < 1.0:
        raise DomainError(f"need rho(A) < rho1 < 1, got rho={rho:.6g}, rho1={rho1:.6g}")
    power = arr.copy()
    level = rho1
    for t in range(1, MAX_GELFAND_POWER + 1):
        if spectral_norm(power) < level:
            return t
        power = power @ arr
        level *= rho1
        if level == 0.0:
            break
    raise DomainError(f"no t <= {MAX_GELFAND_POWER} with ||A^t|| < rho1^t")


def model_kappa(spec: ModelSpec, mode: str = "gaussian-exact", n_reference: int = 1024, seed: int = 0) -> KappaPair:
    """由模型的总体 Σ0 计算 κ1、κ*"""
    sigma0, source = population_autocov(spec, 0, n_reference, seed)
    if source != "exact":
        logger.warning(f"kappa constants for {spec.variant} use a reference-path Sigma_0")
    try:
        return kappa_pair(sigma0, mode)
    except CapabilityError:
        logger.warning(f"p={spec.p} too large for {mode}, falling back to trace-proxy")
        return kappa_pair(sigma0, "trace-proxy")


def bound_params_for_model(
    spec: ModelSpec,
    kappa: Optional[KappaPair] = None,
    rho1: Optional[float] = None,
    epsilon: Optional[float] = None,
    c_universal: Optional[float] = None,
    c_prime: Optional[float] = None,
) -> BoundParams:
    """按三个模型的混合条件给出 γ1..γ4"""
    eps = settings.epsilon if epsilon is None else epsilon
    c = settings.c_universal if c_universal is None else c_universal
    c2 = settings.c_prime if c_prime is None else c_prime
    kappa = kappa or model_kappa(spec)
    k1, ks = kappa.kappa1, kappa.kappa_star

    if spec.variant == "VAR":
        caps = spec.var_norm_caps()
        a_bar = companion_matrix(caps).array
        rho = spectral_radius(a_bar)
        rho1 = (rho + 1.0) / 2.0 if rho1 is None else rho1
        big_k = gelfand_constant(a_bar, rho1)
        growth = (spectral_norm(a_bar) / rho1) ** big_k
        gamma1 = c * (ks / k1) * growth
        gamma3 = c2 * len(caps) * growth
        gamma2 = gamma4 = math.log(1.0 / rho1)
        logger.info(f"VAR constants: rho={rho:.4f}, rho1={rho1:.4f}, K={big_k}")
    elif spec.variant == "BANNA":
        a = max(spec.a_w, RATE_FLOOR)
        k1_e, ks_e = innovation_kappas(spec.innovations)
        gamma5 = 2.0 * a
        gamma6 = -math.log(a)
        shrink = gamma5 ** (1.0 / (1.0 + eps))
        gamma1 = c * ks_e * spec.kappa_w * shrink / k1
        gamma3 = c2 * k1_e * spec.kappa_w * shrink / k1
        gamma2 = gamma4 = gamma6 / (1.0 + eps)
    else:
        k1_e = innovation_kappas(spec.innovations)[0]
        ks_e = arch_kappa_star_prime(spec)
        contraction = max(spec.arch_a1() + spec.a2, RATE_FLOOR)
        gamma1 = c * ks / k1
        gamma3 = c2 * max(ks * k1_e / (k1 * ks_e), 1.0)
        gamma2 = gamma4 = -math.log(contraction)

    return BoundParams(
        kappa1=k1, kappa_star=ks, gamma1=gamma1, gamma2=gamma2, gamma3=gamma3, gamma4=gamma4,
        epsilon=eps, c_universal=c, c_prime=c2,
    )


def nu_squared_banna_bound(spec: ModelSpec, bound_m: float = 1.0) -> float:
    """X_i = M (W_i/κ_W) trunc(E_i E_i^T, 1) 的 ν² 上界 M² (Var W/κ_W²)(1+a)/(1-a)"""
    if spec.variant != "BANNA":
        raise InputError(f"expected a BANNA model, got {spec.variant}")
    a = spec.a_w
    var_ratio = stationary_w_variance(a, spec.kappa_w) / spec.kappa_w ** 2
    return bound_m ** 2 * var_ratio * (1.0 + a) / (1.0 - a)


def mixing_params_for_banna(spec: ModelSpec, bound_m: float = 1.0) -> MixingParams:
    """ψ1 = 2a_W, ψ2 = -ln a_W 及解析 ν² 上界"""
    a = max(spec.a_w, RATE_FLOOR)
    return MixingParams(
        psi1=2.0 * a, psi2=-math.log(a), bound_m=bound_m, nu_sq=nu_squared_banna_bound(spec, bound_m),
    )
