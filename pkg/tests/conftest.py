import numpy as np
import pytest
from fastapi.testclient import TestClient

from config.settings import settings
from app.models.specs import InnovationSpec, ModelSpec


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    """测试默认单进程执行"""
    monkeypatch.setattr(settings, "workers", 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def client():
    from app.main import app

    with TestClient(app) as c:
        yield c


def var1(scale: float, p: int = 4, **kwargs) -> ModelSpec:
    return ModelSpec(
        variant="VAR", innovations=InnovationSpec(dim=p), coefficient_scales=[scale], **kwargs
    )


def banna(a_w: float = 0.5, p: int = 2, burn_in: int = 64, **kwargs) -> ModelSpec:
    return ModelSpec(
        variant="BANNA", innovations=InnovationSpec(dim=p), a_w=a_w, kappa_w=1.0, burn_in=burn_in, **kwargs
    )


def arch(scale: float = 0.4, a2: float = 0.3, p: int = 2, burn_in: int = 64, **kwargs) -> ModelSpec:
    return ModelSpec(
        variant="ARCH", innovations=InnovationSpec(dim=p), arch_scale=scale, a2=a2, burn_in=burn_in, **kwargs
    )
