# app/config.py
import os
import logging
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables from a .env file at the project root
# project_root/
#  ├── .env
#  ├── app/
#  │   ├── config.py
#  │   └── ...
#  ├── scenarios/
#  └── output/

PROJECT_ROOT = Path(__file__).resolve().parent.parent
load_dotenv(PROJECT_ROOT / ".env")

class Settings:
    """
    Application settings.
    Values are loaded from environment variables or .env file.
    """
    # --- Output Paths ---
    # Base directory for simulation bundles and figure reproductions
    OUTPUT_DIR: Path = PROJECT_ROOT / os.getenv("OUTPUT_DIR", "output")
    # Relative scenario names not found as given are looked up here
    SCENARIO_DIR: Path = PROJECT_ROOT / os.getenv("SCENARIO_DIR", "scenarios")

    # --- Monte Carlo ---
    DEFAULT_SEED: int = int(os.getenv("DEFAULT_SEED", "20170101"))
    DEFAULT_THREADS: int = int(os.getenv("DEFAULT_THREADS", "1"))
    # Trials per RNG block; fixed so output does not depend on the thread count
    TRIAL_BLOCK_SIZE: int = int(os.getenv("TRIAL_BLOCK_SIZE", "65536"))

    # --- Fitting ---
    FIT_FTOL: float = float(os.getenv("FIT_FTOL", "1e-10"))
    FIT_XTOL: float = float(os.getenv("FIT_XTOL", "1e-12"))
    FIT_MAX_NFEV: int = int(os.getenv("FIT_MAX_NFEV", "20000"))

    # --- Output Formatting ---
    CSV_FLOAT_FORMAT: str = os.getenv("CSV_FLOAT_FORMAT", "%.12g")

    # --- Logging Configuration ---
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_FORMAT: str = '%(asctime)s - %(name)s - %(levelname)s - %(module)s:%(lineno)d - %(message)s'

settings = Settings()

# --- Logging Setup ---
logging.basicConfig(
    level=settings.LOG_LEVEL,
    format=settings.LOG_FORMAT,
    datefmt='%Y-%m-%d %H:%M:%S'
)
logger = logging.getLogger("RydbergDlcz") # Shared logger for the whole package

logger.debug("Configuration loaded.")
logger.debug(f"Output directory: {settings.OUTPUT_DIR}")
logger.debug(f"Trial block size: {settings.TRIAL_BLOCK_SIZE}, default threads: {settings.DEFAULT_THREADS}")

if settings.TRIAL_BLOCK_SIZE < 1:
    logger.warning(
        f"TRIAL_BLOCK_SIZE={settings.TRIAL_BLOCK_SIZE} is not positive; falling back to 65536. "
        "Set it via environment variables or the .env file."
    )
    settings.TRIAL_BLOCK_SIZE = 65536
