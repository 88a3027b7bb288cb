from fastapi import APIRouter, Query, Response
from typing import Optional
import logging

from app.models.experiments import ExperimentConfig, ExperimentReport
from app.models.schemas import CantorResponse
from app.services.cantor import build_cantor, verify_cantor_properties
from app.services.errors import InputError
from app.services.harness import run_experiment

router = APIRouter(tags=["experiments"])
logger = logging.getLogger(__name__)

MAX_CANTOR_B = 1_000_000


@router.get("/cantor/{B}", response_model=CantorResponse)
def cantor(B: int):
    """{1..B} 上的类 Cantor 集及其性质检查"""
    if B > MAX_CANTOR_B:
        raise InputError(f"B must be <= {MAX_CANTOR_B}, got {B}")
    structure = build_cantor(B)
    report = verify_cantor_properties(structure)
    return CantorResponse(structure=structure, report=report, all_pass=report.all_pass)


@router.post("/experiments/", response_model=ExperimentReport)
def experiments(
    cfg: ExperimentConfig,
    workers: Optional[int] = Query(1, ge=1, description="并行进程数"),
    persist: bool = Query(False, description="是否写出到 output_dir"),
):
    """运行实验配置并返回报告"""
    logger.info(f"Experiment request: kind={cfg.kind}, reps={cfg.reps}, persist={persist}")
    if not persist:
        cfg = cfg.model_copy(update={"output_dir": None})
    report = run_experiment(cfg, workers=workers)
    # fit slopes may be -inf
    return Response(content=report.model_dump_json(), media_type="application/json")
