from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    # Application Configuration
    app_name: str = "Autocovariance Deviation Toolkit"
    app_version: str = "1.0.0"
    debug: bool = True
    log_level: str = "INFO"

    # API Configuration
    api_host: str = "0.0.0.0"
    api_port: int = 8000

    # Execution Configuration
    workers: Optional[int] = None  # None -> os.cpu_count()
    output_dir: str = "results"

    # Simulation Configuration
    burn_in: int = 1024
    reference_path_factor: int = 50  # n_ref = factor * n

    # Bound Constants (all "constants depending only on epsilon")
    epsilon: float = 1.0
    c_universal: float = 1.0
    c_prime: float = 1.0

    # Numerical Tolerances
    enumerate_max_dim: int = 20
    lyapunov_rel_tol: float = 1e-14
    instability_margin: float = 1e-6

    class Config:
        env_file = ".env"


settings = Settings()
