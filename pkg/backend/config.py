import os
from dataclasses import dataclass, field
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env(name: str, default: str) -> str:
    return os.getenv(name, default)


@dataclass
class Config:
    """Configuration settings for the sampling simulator and experiment runner"""
    # Reproducibility
    DEFAULT_SEED: int = field(default_factory=lambda: int(_env("SAMPLER_SEED", "20110920")))

    # Artifacts
    OUT_DIR: str = field(default_factory=lambda: _env("SAMPLER_OUT_DIR", "./results"))
    MAX_RUNS: int = 10**6            # Cap on sweep points x trials per scenario
    MAX_STORED_RUNS: int = 20        # Scenario summaries kept by the HTTP service

    # Simulation
    ORACLE_EVERY_ROUND_MAX_N: int = 10**4  # Above this, oracle checks run on the final round only
    SCAN_BLOCK: int = 4096           # Arrivals examined per vectorised skip-ahead step
    WORKERS: int = field(default_factory=lambda: int(_env("SAMPLER_WORKERS", "1")))

    # Statistical checks
    ALPHA: float = 0.01              # Significance level for uniformity tests
    SE_SLACK: float = 3.0            # Standard errors allowed above an expectation bound
    TREND_BAND: float = 3.0          # Max/min ratio allowed across a trend grid

    # Heavy hitters
    HH_CONFIDENCE: float = 16.0      # Constant c in s = c * eps^-2 * log2(n)

    LOG_LEVEL: str = field(default_factory=lambda: _env("SAMPLER_LOG_LEVEL", "WARNING"))


config = Config()
