from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import Any, Dict, List, Literal, Optional, Tuple

from app.models.specs import ModelSpec

ExperimentKind = Literal["rate-scan", "bound-check", "tau-scan", "bernstein-tail", "cantor-check"]
MONTE_CARLO_KINDS = ("rate-scan", "bound-check", "tau-scan", "bernstein-tail")


class ExperimentGrids(BaseModel):
    n: List[int] = Field(default_factory=list, description="样本量网格")
    p: List[int] = Field(default_factory=list, description="维度网格，缺省取模型维度")
    m: List[int] = Field(default_factory=lambda: [0], description="滞后网格")
    spectrum: List[str] = Field(default_factory=lambda: ["model"], description="Σ_E 谱：identity、geometric:q、effective-rank:r、model")
    lags: List[int] = Field(default_factory=list, description="tau-scan 的滞后 k")
    x: List[float] = Field(default_factory=list, description="bernstein-tail 的阈值网格")
    B: List[int] = Field(default_factory=list, description="cantor-check 的 B 值")
    B_range: Optional[Tuple[int, int]] = Field(None, description="cantor-check 的闭区间 [lo, hi]")

    def b_values(self) -> List[int]:
        values = list(self.B)
        if self.B_range is not None:
            lo, hi = self.B_range
            values.extend(range(lo, hi + 1))
        return sorted(set(values))


class ConstantOverrides(BaseModel):
    epsilon: Optional[float] = Field(None, gt=0.0)
    c_universal: Optional[float] = Field(None, gt=0.0)
    c_prime: Optional[float] = Field(None, gt=0.0)
    kappa1: Optional[float] = Field(None, gt=0.0)
    kappa_star: Optional[float] = Field(None, gt=0.0)
    gamma1: Optional[float] = Field(None, ge=0.0)
    gamma2: Optional[float] = Field(None, gt=0.0)
    gamma3: Optional[float] = Field(None, ge=0.0)
    gamma4: Optional[float] = Field(None, gt=0.0)


class ExperimentConfig(BaseModel):
    kind: ExperimentKind
    model: Optional[ModelSpec] = Field(None, description="模型模板，缺省为独立高斯 VAR")
    grids: ExperimentGrids = Field(default_factory=ExperimentGrids)
    reps: int = Field(0, ge=0, validate_default=True, description="每个单元的蒙特卡洛重复次数")
    master_seed: int = Field(0, ge=0, lt=1 << 64)
    constants: ConstantOverrides = Field(default_factory=ConstantOverrides)
    output_dir: Optional[str] = Field(None, description="结果目录")

    # tau-scan
    split_index: int = Field(0, ge=0, description="耦合位置 j")
    statistic: Literal["vector", "truncated-outer"] = "vector"
    truncation_level: Optional[float] = Field(None, gt=0.0)
    rate_tolerance: float = Field(0.1, gt=0.0)

    # rate-scan
    slope_window: Tuple[float, float] = (-0.6, -0.4)
    rank_ratio_tolerance: float = Field(2.0, ge=1.0)

    # bernstein-tail
    bound_m: float = Field(1.0, gt=0.0)

    @field_validator("reps")
    @classmethod
    def _check_reps(cls, v, info):
        if info.data.get("kind") in MONTE_CARLO_KINDS and v < 30:
            raise ValueError(f"Monte Carlo experiments need reps >= 30, got {v}")
        return v


class FitResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    target: str = Field(..., description="拟合对象，如 log-mean-vs-log-n")
    group: Dict[str, Any] = Field(default_factory=dict)
    points: int
    slope: float
    intercept: Optional[float] = None
    r2: Optional[float] = None
    stderr: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    expected: Optional[float] = None
    passed: Optional[bool] = None


class Provenance(BaseModel):
    master_seed: int
    software_version: str
    numpy_version: str
    scipy_version: str
    workers: int
    started_at: str
    wall_time: float


class ExperimentReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    config: ExperimentConfig
    columns: List[str]
    cells: List[Dict[str, Any]] = Field(default_factory=list, description="每个网格单元一行，键为 columns")
    fits: List[FitResult] = Field(default_factory=list)
    checks: Dict[str, bool] = Field(default_factory=dict)
    passed: bool = True
    constants: Dict[str, float] = Field(default_factory=dict, description="实际使用的 C、C′、ε")
    provenance: Provenance
