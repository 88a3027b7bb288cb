from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Dict, List, Literal, Optional
import numpy as np

from app.models.specs import ModelSpec


class KappaPair(BaseModel):
    kappa1: float = Field(..., gt=0.0)
    kappa_star: float = Field(..., gt=0.0)
    mode: Literal["gaussian-exact", "enumerate", "trace-proxy"]

    @model_validator(mode="after")
    def _check_order(self):
        if self.kappa_star ** 2 < self.kappa1 ** 2 * (1.0 - 1e-12):
            raise ValueError("kappa_star must dominate kappa1")
        return self

    @property
    def r_star(self) -> float:
        """r* = κ*²/κ1²"""
        return (self.kappa_star / self.kappa1) ** 2


class TauEstimate(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    lags: List[int]
    values: List[float]
    epsilon: float = Field(..., ge=0.0)
    replications: int
    fit_rate: float = Field(..., description="log(value) 对 lag 的斜率；无法拟合时为 -inf")
    fit_r2: Optional[float] = None
    statistic: Literal["vector", "truncated-outer"] = "vector"

    @model_validator(mode="after")
    def _check(self):
        if any(v < 0 for v in self.values):
            raise ValueError("tau values must be nonnegative")
        if any(b <= a for a, b in zip(self.lags, self.lags[1:])):
            raise ValueError("lags must be strictly increasing")
        return self

    @property
    def fit_skipped(self) -> bool:
        return self.fit_rate == float("-inf")


class DeviationStats(BaseModel):
    mean: float
    std_error: float = Field(..., ge=0.0)
    quantiles: Dict[float, float]
    raw: List[float]
    population_source: Literal["exact", "reference-path"] = "exact"
    metadata: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_quantiles(self):
        keys = sorted(self.quantiles)
        values = [self.quantiles[k] for k in keys]
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("quantiles must be monotone in probability")
        return self


class SeriesPath(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p: int
    n: int = Field(..., ge=1)
    data: np.ndarray = Field(..., description="p x n，第 t 列为 Y_t")
    seed: int
    model: ModelSpec
    latent: Optional[np.ndarray] = Field(None, description="BANNA 模型的 W_t 链")

    @model_validator(mode="after")
    def _check_data(self):
        if self.data.shape != (self.p, self.n):
            raise ValueError(f"data must be {self.p}x{self.n}, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("path has non-finite entries")
        return self


class CoupledPair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    original: SeriesPath
    coupled: SeriesPath
    split_index: int = Field(..., ge=0)

    def distances(self) -> np.ndarray:
        """||Y_t - Ỹ_t||_2，t = 1..n"""
        return np.linalg.norm(self.original.data - self.coupled.data, axis=0)
