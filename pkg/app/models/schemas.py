from pydantic import BaseModel, Field
from typing import Dict, List, Optional
from datetime import datetime

from app.models.cantor import CantorReport, CantorStructure
from app.models.specs import BoundParams, Matrix, MixingParams


class BoundParamsRequest(BaseModel):
    params: BoundParams
    n: int = Field(..., ge=2, description="样本量")
    m: int = Field(0, ge=0, description="滞后")
    p: int = Field(1, ge=1, description="维度")


class SigmaBoundRequest(BaseModel):
    sigma0: Matrix = Field(..., description="Σ0")
    n: int = Field(..., ge=1)
    m: int = Field(0, ge=0)
    c: Optional[float] = Field(None, gt=0.0, description="常数，缺省取配置值")


class GaussianBoundRequest(BaseModel):
    sigma_sequence: List[Matrix] = Field(..., min_length=1, description="Σ_0, Σ_1, ...")
    n: int = Field(..., ge=1)
    m: int = Field(0, ge=0)


class MDeltaRequest(BoundParamsRequest):
    delta: float = Field(..., description="尾概率 δ ∈ (0, 1]")


class TailBoundRequest(MDeltaRequest):
    x: float = Field(..., ge=0.0)
    clip: bool = False


class PsiTildeRequest(BaseModel):
    psi1: float
    psi2: float
    n: int
    p: int = Field(1, ge=1)


class BernsteinRequest(BaseModel):
    mixing: MixingParams
    x: float = Field(..., ge=0.0)
    n: int
    p: int = Field(1, ge=1)
    clip: bool = False


class NuSquaredRequest(BaseModel):
    params: BoundParams
    m: int = Field(0, ge=0)
    z_form: Optional[bool] = None


class TauBoundRequest(BaseModel):
    params: BoundParams
    k: int
    m: int = Field(0, ge=0)
    truncation_level: float = Field(1.0, gt=0.0)


class BoundResponse(BaseModel):
    bound: str
    value: float
    constants: Dict[str, float] = Field(default_factory=dict, description="实际使用的常数")


class CantorResponse(BaseModel):
    structure: CantorStructure
    report: CantorReport
    all_pass: bool


class HealthResponse(BaseModel):
    status: str
    version: str
    numpy_version: str
    scipy_version: str
    workers: int
    timestamp: datetime


class ErrorResponse(BaseModel):
    error: str
    detail: Optional[str] = None
    field_path: Optional[str] = None
    timestamp: datetime
