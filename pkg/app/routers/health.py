from fastapi import APIRouter
from datetime import datetime
import numpy as np
import scipy

from config.settings import settings
from app.models.schemas import HealthResponse
from app.services.estimators import resolve_workers

router = APIRouter(prefix="/health", tags=["health"])


@router.get("/", response_model=HealthResponse)
async def health_check():
    """健康检查端点"""
    return HealthResponse(
        status="healthy",
        version=settings.app_version,
        numpy_version=np.__version__,
        scipy_version=scipy.__version__,
        workers=resolve_workers(),
        timestamp=datetime.now()
    )
