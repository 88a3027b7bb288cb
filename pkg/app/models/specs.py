from pydantic import BaseModel, Field, model_validator
from typing import List, Literal, Optional
import numpy as np

from config.settings import settings
from app.services.matrix_core import psd_factor

Matrix = List[List[float]]

NORM_SLACK = 1e-12
FACTOR_RTOL = 1e-8


def _spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


class InnovationSpec(BaseModel):
    dim: int = Field(..., ge=1, description="维度 p")
    kind: Literal["gaussian", "scaled-sign"] = Field("gaussian", description="新息分布")
    sigma_e: Optional[Matrix] = Field(None, description="新息协方差 Σ_E，缺省为单位阵")
    sigma0_factor: Optional[Matrix] = Field(None, description="因子 L，满足 L L^T = Σ_E")

    @model_validator(mode="after")
    def _check_shapes(self):
        for name in ("sigma_e", "sigma0_factor"):
            value = getattr(self, name)
            if value is not None:
                arr = np.asarray(value, dtype=float)
                if arr.shape != (self.dim, self.dim):
                    raise ValueError(f"{name} must be {self.dim}x{self.dim}, got {arr.shape}")
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"{name} has non-finite entries")
        if self.sigma_e is not None:
            cov = np.asarray(self.sigma_e, dtype=float)
            if np.max(np.abs(cov - cov.T)) > 1e-10 * max(1.0, float(np.max(np.abs(cov)))):
                raise ValueError("sigma_e must be symmetric")
            w = np.linalg.eigvalsh(cov)
            if w[0] < -1e-10 * max(abs(w[-1]), 1e-300):
                raise ValueError("sigma_e must be positive semidefinite")
            if self.sigma0_factor is not None:
                factor = np.asarray(self.sigma0_factor, dtype=float)
                if not np.allclose(factor @ factor.T, cov, rtol=FACTOR_RTOL, atol=FACTOR_RTOL * max(abs(w[-1]), 1.0)):
                    raise ValueError("sigma0_factor L must satisfy L L^T = sigma_e")
        return self

    def factor(self) -> np.ndarray:
        """返回 L（L L^T = Σ_E）"""
        if self.sigma0_factor is not None:
            return np.asarray(self.sigma0_factor, dtype=float)
        if self.sigma_e is None:
            return np.eye(self.dim)
        return psd_factor(np.asarray(self.sigma_e, dtype=float))

    def covariance(self) -> np.ndarray:
        """返回 Σ_E"""
        if self.sigma_e is not None:
            return np.asarray(self.sigma_e, dtype=float)
        factor = self.factor()
        return factor @ factor.T


class ModelSpec(BaseModel):
    variant: Literal["VAR", "BANNA", "ARCH"]
    innovations: InnovationSpec
    burn_in: Optional[int] = Field(None, ge=0, description="预热步数，缺省取配置值")

    # VAR(d): Y_t = A_1 Y_{t-1} + ... + A_d Y_{t-d} + E_t
    coefficients: Optional[List[Matrix]] = Field(None, description="系数矩阵 A_1..A_d")
    coefficient_scales: Optional[List[float]] = Field(None, description="A_k = s_k I 的标量形式")
    norm_caps: Optional[List[float]] = Field(None, description="范数上界 a_k，缺省为 ||A_k||")

    # BANNA: Y_t = W_t E_t
    a_w: float = Field(0.0, ge=0.0, lt=1.0, description="潜在链持续性 a_W")
    kappa_w: float = Field(1.0, gt=0.0, description="|W_t| 的上界 κ_W")

    # ARCH: Y_t = A Y_{t-1} + H(Y_{t-1}) E_t
    arch_matrix: Optional[Matrix] = Field(None, description="矩阵 A")
    arch_scale: float = Field(0.0, description="A = arch_scale I 的标量形式")
    a1: Optional[float] = Field(None, ge=0.0, description="||A|| 的上界，缺省为 ||A||")
    a2: float = Field(0.0, ge=0.0, description="H 的 Lipschitz 预算")
    sigma_base: float = Field(1.0, gt=0.0, description="基线尺度 σ0")
    kappa_star_prime: Optional[float] = Field(None, gt=0.0, description="新息的 κ*′，缺省由 Σ_E 计算")

    @model_validator(mode="after")
    def _check_variant(self):
        p = self.innovations.dim
        if self.variant == "VAR":
            if self.coefficients is not None and self.coefficient_scales is not None:
                raise ValueError("give either coefficients or coefficient_scales, not both")
            mats = self.var_coefficients()
            for k, mat in enumerate(mats):
                if mat.shape != (p, p):
                    raise ValueError(f"coefficients[{k}] must be {p}x{p}, got {mat.shape}")
            caps = self.var_norm_caps()
            if len(caps) != len(mats):
                raise ValueError("norm_caps must have one entry per coefficient matrix")
            for k, (mat, cap) in enumerate(zip(mats, caps)):
                if _spectral_norm(mat) > cap + NORM_SLACK:
                    raise ValueError(f"||A_{k + 1}|| exceeds its cap a_{k + 1} = {cap}")
            if sum(caps) >= 1.0:
                raise ValueError(f"VAR requires sum of a_k < 1, got {sum(caps)}")
        elif self.variant == "ARCH":
            a = self.arch_a()
            if a.shape != (p, p):
                raise ValueError(f"arch_matrix must be {p}x{p}, got {a.shape}")
            if _spectral_norm(a) > self.arch_a1() + NORM_SLACK:
                raise ValueError("||A|| exceeds a1")
            if self.arch_a1() + self.a2 >= 1.0:
                raise ValueError(f"ARCH requires a1 + a2 < 1, got {self.arch_a1() + self.a2}")
        return self

    @property
    def p(self) -> int:
        return self.innovations.dim

    @property
    def burn_in_steps(self) -> int:
        return settings.burn_in if self.burn_in is None else self.burn_in

    def var_coefficients(self) -> List[np.ndarray]:
        """VAR 系数矩阵列表（缺省为 A_1 = 0）"""
        p = self.innovations.dim
        if self.coefficients is not None:
            return [np.asarray(c, dtype=float) for c in self.coefficients]
        scales = self.coefficient_scales if self.coefficient_scales is not None else [0.0]
        return [s * np.eye(p) for s in scales]

    def var_norm_caps(self) -> List[float]:
        if self.norm_caps is not None:
            return list(self.norm_caps)
        return [_spectral_norm(m) for m in self.var_coefficients()]

    def arch_a(self) -> np.ndarray:
        if self.arch_matrix is not None:
            return np.asarray(self.arch_matrix, dtype=float)
        return self.arch_scale * np.eye(self.innovations.dim)

    def arch_a1(self) -> float:
        return _spectral_norm(self.arch_a()) if self.a1 is None else self.a1

    @property
    def order(self) -> int:
        return len(self.var_coefficients()) if self.variant == "VAR" else 1

    @property
    def is_gaussian_var1(self) -> bool:
        return self.variant == "VAR" and self.order == 1 and self.innovations.kind == "gaussian"

    @property
    def is_independent(self) -> bool:
        """VAR 且所有系数为零，即独立同分布"""
        return self.variant == "VAR" and all(not np.any(m) for m in self.var_coefficients())


class BoundParams(BaseModel):
    kappa1: float = Field(..., gt=0.0)
    kappa_star: float = Field(..., gt=0.0)
    gamma1: float = Field(..., ge=0.0)
    gamma2: float = Field(..., gt=0.0)
    gamma3: float = Field(..., ge=0.0)
    gamma4: float = Field(..., gt=0.0)
    epsilon: float = Field(default_factory=lambda: settings.epsilon, gt=0.0)
    c_universal: float = Field(default_factory=lambda: settings.c_universal, gt=0.0)
    c_prime: float = Field(default_factory=lambda: settings.c_prime, gt=0.0)

    @property
    def r_star(self) -> float:
        return (self.kappa_star / self.kappa1) ** 2

    @property
    def kappa_ratio(self) -> float:
        return self.kappa_star / self.kappa1

    def mixing_rate(self) -> float:
        """min((5+ε)/(6ε+10)·γ2, γ4)"""
        return min((5.0 + self.epsilon) / (6.0 * self.epsilon + 10.0) * self.gamma2, self.gamma4)


class MixingParams(BaseModel):
    psi1: float = Field(..., gt=0.0)
    psi2: float = Field(..., gt=0.0)
    bound_m: float = Field(..., gt=0.0, description="||X_t|| <= M")
    nu_sq: float = Field(..., ge=0.0)

    def psi1_tilde(self, p: int) -> float:
        """ψ̃1 = max(1/p, ψ1)"""
        return max(1.0 / p, self.psi1)
