from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import logging
from contextlib import asynccontextmanager
import time
from datetime import datetime

from config.settings import settings
from app.routers import bounds, experiments, health
from app.models.schemas import ErrorResponse
from app.services.errors import ConfigValidationError, ToolkitError

# 配置日志
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# 创建FastAPI应用
app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="样本自协方差矩阵偏差界的数值计算、模拟与验证服务",
    debug=settings.debug
)

# 添加CORS中间件
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _error_response(status_code: int, error: str, exc: Exception, field_path: str = None) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content=ErrorResponse(
            error=error,
            detail=str(exc),
            field_path=field_path,
            timestamp=datetime.now()
        ).model_dump(mode="json")
    )


# 工具包异常：输入、定义域、能力与配置错误
@app.exception_handler(ToolkitError)
async def toolkit_exception_handler(request: Request, exc: ToolkitError):
    logger.warning(f"{type(exc).__name__} on {request.url.path}: {exc}")
    if isinstance(exc, ConfigValidationError):
        return _error_response(422, "Invalid experiment configuration", exc, exc.field_path)
    return _error_response(400, f"{exc.kind} error", exc)


# 全局异常处理器
@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error(f"Global exception: {exc}")
    return JSONResponse(
        status_code=500,
        content=ErrorResponse(
            error="Internal server error",
            detail=str(exc) if settings.debug else None,
            timestamp=datetime.now()
        ).model_dump(mode="json")
    )


# 请求处理时间中间件
@app.middleware("http")
async def add_process_time_header(request: Request, call_next):
    start_time = time.time()
    response = await call_next(request)
    process_time = time.time() - start_time
    response.headers["X-Process-Time"] = str(process_time)
    return response


# 启动事件
async def startup_event():
    logger.info(f"Starting {settings.app_name} {settings.app_version}...")
    logger.info(f"Bound constants: C={settings.c_universal}, C'={settings.c_prime}, epsilon={settings.epsilon}")


# 关闭事件
async def shutdown_event():
    logger.info("Shutting down...")


# 注册事件处理器
@asynccontextmanager
async def _lifespan(_app: FastAPI):
    await startup_event()
    yield
    await shutdown_event()


app.router.lifespan_context = _lifespan


# 根路径
@app.get("/")
async def root():
    return {
        "message": settings.app_name,
        "version": settings.app_version,
        "docs": "/docs",
        "health": "/health"
    }


# 包含路由
app.include_router(bounds.router)
app.include_router(experiments.router)
app.include_router(health.router)
