"""
Process configuration for the ST-LGSL toolkit
Environment-driven settings, compatible with pydantic v2
"""

from typing import Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings with environment variable support"""

    # Application
    APP_NAME: str = "ST-LGSL Traffic Forecaster"
    VERSION: str = "1.0.0"
    DEBUG: bool = False

    # Reproducibility; STLGSL_SEED is the fallback when a run gives no seed
    SEED: Optional[int] = None

    # Numerics: float32 for training, float64 for gradient checks
    PRECISION: str = "float32"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "console"

    # Directories
    LOGS_DIR: Optional[str] = None
    DATA_DIR: str = "data"
    RUNS_DIR: str = "runs"

    model_config = {
        "env_prefix": "STLGSL_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": True,
        "extra": "ignore",
    }


# Global settings instance
settings = Settings()
