from fastapi import APIRouter
import logging

from config.settings import settings
from app.models.schemas import (
    BernsteinRequest,
    BoundParamsRequest,
    BoundResponse,
    GaussianBoundRequest,
    MDeltaRequest,
    NuSquaredRequest,
    PsiTildeRequest,
    SigmaBoundRequest,
    TailBoundRequest,
    TauBoundRequest,
)
from app.models.specs import BoundParams
from app.services import bounds

router = APIRouter(prefix="/bounds", tags=["bounds"])
logger = logging.getLogger(__name__)


def _constants(bp: BoundParams) -> dict:
    return {"c_universal": bp.c_universal, "c_prime": bp.c_prime, "epsilon": bp.epsilon}


@router.post("/main-moment", response_model=BoundResponse)
def main_moment(req: BoundParamsRequest):
    """一般 τ 混合序列的矩界"""
    value = bounds.main_moment_bound(req.params, req.n, req.m, req.p)
    return BoundResponse(bound="main-moment", value=value, constants=_constants(req.params))


@router.post("/stationary-moment", response_model=BoundResponse)
def stationary_moment(req: SigmaBoundRequest):
    c = settings.c_prime if req.c is None else req.c
    value = bounds.stationary_moment_bound(req.sigma0, req.n, req.m, c)
    return BoundResponse(bound="stationary-moment", value=value, constants={"c_prime": c})


@router.post("/gaussian-moment", response_model=BoundResponse)
def gaussian_moment(req: GaussianBoundRequest):
    """显式高斯矩界（无隐藏常数）"""
    value = bounds.gaussian_moment_bound_lagged(req.sigma_sequence, req.n, req.m)
    return BoundResponse(bound="gaussian-moment", value=value)


@router.post("/effective-rank", response_model=BoundResponse)
def effective_rank(req: SigmaBoundRequest):
    c = settings.c_universal if req.c is None else req.c
    value = bounds.effective_rank_bound(req.sigma0, req.n, req.m, c)
    return BoundResponse(bound="effective-rank", value=value, constants={"c_universal": c})


@router.post("/m-delta", response_model=BoundResponse)
def m_delta(req: MDeltaRequest):
    value = bounds.m_delta(req.params, req.n, req.m, req.delta)
    return BoundResponse(bound="m-delta", value=value, constants=_constants(req.params))


@router.post("/tail", response_model=BoundResponse)
def tail(req: TailBoundRequest):
    value = bounds.tail_bound(req.x, req.delta, req.params, req.n, req.m, req.p, clip=req.clip)
    return BoundResponse(bound="tail", value=value, constants=_constants(req.params))


@router.post("/psi-tilde", response_model=BoundResponse)
def psi_tilde(req: PsiTildeRequest):
    value = bounds.psi_tilde(req.psi1, req.psi2, req.n, req.p)
    return BoundResponse(bound="psi-tilde", value=value)


@router.post("/bernstein-tail", response_model=BoundResponse)
def bernstein_tail(req: BernsteinRequest):
    """矩阵 Bernstein 尾界；clip=true 时截到 [0, 1]"""
    value = bounds.bernstein_tail(req.x, req.mixing, req.n, req.p)
    if req.clip:
        value = bounds.clip_probability(value)
    return BoundResponse(
        bound="bernstein-tail", value=value,
        constants={"psi1": req.mixing.psi1, "psi2": req.mixing.psi2, "bound_m": req.mixing.bound_m, "nu_sq": req.mixing.nu_sq},
    )


@router.post("/nu-squared", response_model=BoundResponse)
def nu_squared(req: NuSquaredRequest):
    value = bounds.nu_squared_analytic_bound(req.params, req.m, req.z_form)
    return BoundResponse(bound="nu-squared", value=value, constants=_constants(req.params))


@router.post("/tau", response_model=BoundResponse)
def tau(req: TauBoundRequest):
    value = bounds.tau_analytic_bound(req.params, req.k, req.m, req.truncation_level)
    return BoundResponse(bound="tau", value=value, constants=_constants(req.params))
