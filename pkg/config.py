"""
Application configuration settings.
Values come from environment variables (prefix COULOMBGAP_) or a .env file.
"""
from pathlib import Path
from typing import Optional
import logging

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Numerical defaults and filesystem locations"""

    model_config = SettingsConfigDict(
        env_prefix="COULOMBGAP_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Inverse-CDF table cache (COULOMBGAP_CACHE)
    CACHE: Path = Path.home() / ".cache" / "coulombgap"
    CACHE_ENABLED: bool = True

    LOG_LEVEL: str = "WARNING"

    # Window constant of the truncated gap kernel; None means calibrate per potential
    WINDOW_C: Optional[float] = None

    # Quadrature and scanning
    QUAD_EPSREL: float = 1e-12
    QUAD_LIMIT: int = 10_000
    SCAN_POINTS: int = 2048
    CDF_NODES: int = 4096

    THREADS: int = 1

    @property
    def log_level(self) -> int:
        """Numeric logging level, WARNING when the name is unknown"""
        level = logging.getLevelName(self.LOG_LEVEL.upper())
        return level if isinstance(level, int) else logging.WARNING


# Global settings instance
settings = Settings()
