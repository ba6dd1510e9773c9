"""
Application Configuration

Centralizes process-level settings and logging for the laboratory.
Loads settings from environment variables (and a local .env file).
"""

import os
import logging

from dotenv import load_dotenv

# =============================================================================
# Environment Variables
# =============================================================================

load_dotenv()

# =============================================================================
# Logging Configuration
# =============================================================================

logging.basicConfig(
    level=os.getenv("BSQ_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Settings:
    """Laboratory settings loaded from environment variables.

    All process-level configuration is centralized here. Per-run numerical
    parameters live in run configuration files (see app.services.lab.engine).
    """

    # Worker cap for scipy.fft and the harness thread pools (0 = library default)
    THREADS = int(os.getenv("BSQ_THREADS", "0"))

    LOG_LEVEL = os.getenv("BSQ_LOG_LEVEL", "INFO").upper()

    # Default destination for run artifacts when a config omits output.dir
    OUTPUT_DIR = os.getenv("BSQ_OUTPUT_DIR", "runs")

    # Hermitian-symmetry validation of spectral fields after every operator
    CHECK_HERMITIAN = _env_flag("BSQ_CHECK_HERMITIAN", "1")
    HERMITIAN_TOL = float(os.getenv("BSQ_HERMITIAN_TOL", "1e-9"))

    @property
    def fft_workers(self):
        """Worker count handed to scipy.fft (None lets scipy decide)."""
        return self.THREADS if self.THREADS > 0 else None

    @property
    def pool_workers(self) -> int:
        """Thread count for independent harness samples."""
        return self.THREADS if self.THREADS > 0 else min(8, os.cpu_count() or 1)


# Global settings instance
settings = Settings()

logger.debug(
    f"Settings loaded: threads={settings.THREADS}, "
    f"check_hermitian={settings.CHECK_HERMITIAN}"
)
