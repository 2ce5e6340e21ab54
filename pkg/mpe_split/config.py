"""Configuration for mpe-split."""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Concurrency
MPE_THREADS = int(os.getenv("MPE_THREADS", str(os.cpu_count() or 1)))

# Reference oracle (adaptive embedded 5(4) pair)
REFERENCE_TOL = float(os.getenv("MPE_REFERENCE_TOL", "1e-10"))
REFERENCE_METHOD = os.getenv("MPE_REFERENCE_METHOD", "RK45")

# Courant number for the explicit convection sub-flow of the Burgers problem
BURGERS_CFL = float(os.getenv("MPE_BURGERS_CFL", "1.0"))

# Logging
LOG_LEVEL = os.getenv("MPE_LOG_LEVEL", "INFO")

# Paths
PROJECT_ROOT = Path(__file__).parent.parent
REPORTS_DIR = PROJECT_ROOT / "reports"

SUPPORTED_REFERENCE_METHODS = ("RK45", "DOP853", "RK23")
SUPPORTED_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

# Published Burgers errors (mu = 0.05, two iterations per step): (dx, dt, err_l1, err_max)
TABLE1_REFERENCE = (
    (1 / 10, 1 / 10, 0.0549, 0.1867),
    (1 / 20, 1 / 10, 0.0468, 0.1599),
    (1 / 40, 1 / 10, 0.0418, 0.1431),
    (1 / 10, 1 / 20, 0.0447, 0.1626),
    (1 / 20, 1 / 20, 0.0331, 0.1215),
    (1 / 40, 1 / 20, 0.0262, 0.0943),
    (1 / 10, 1 / 40, 0.0405, 0.1551),
    (1 / 20, 1 / 40, 0.0265, 0.1040),
    (1 / 40, 1 / 40, 0.0181, 0.0695),
)


def validate_config():
    """Validate settings loaded from the environment."""
    problems = []
    if MPE_THREADS < 1:
        problems.append(f"MPE_THREADS must be >= 1 (got {MPE_THREADS})")
    if not 0.0 < REFERENCE_TOL < 1.0:
        problems.append(f"MPE_REFERENCE_TOL must lie in (0, 1) (got {REFERENCE_TOL})")
    if REFERENCE_METHOD not in SUPPORTED_REFERENCE_METHODS:
        problems.append(
            f"MPE_REFERENCE_METHOD must be one of {', '.join(SUPPORTED_REFERENCE_METHODS)} "
            f"(got {REFERENCE_METHOD})"
        )
    if BURGERS_CFL <= 0.0:
        problems.append(f"MPE_BURGERS_CFL must be positive (got {BURGERS_CFL})")
    if LOG_LEVEL.upper() not in SUPPORTED_LOG_LEVELS:
        problems.append(f"MPE_LOG_LEVEL must be one of {', '.join(SUPPORTED_LOG_LEVELS)} (got {LOG_LEVEL})")

    if problems:
        raise ValueError(f"Invalid configuration: {'; '.join(problems)}")

    return True
