"""
Application configuration.
All settings loaded from environment variables with sensible defaults.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

# === PATHS ===
BASE_DIR = Path(__file__).resolve().parent.parent
CONFIGS_DIR = BASE_DIR / "configs"
OUTPUT_DIR = Path(os.getenv("DDS_OUTPUT_DIR", str(BASE_DIR / "runs")))

# === VERSIONS ===
ARTIFACT_VERSION = "1.0.0"
SCHEMA_VERSION = os.getenv("SCHEMA_VERSION", "1.0")

# === NUMERICS ===
LSQ_COND_LIMIT = float(os.getenv("LSQ_COND_LIMIT", "1e12"))
LYAPUNOV_RESIDUAL_RTOL = 1e-10
MAX_EIG_DIM = 8

# === PLANT INTEGRATION ===
SUBSTEP_MAX_DT = float(os.getenv("SUBSTEP_MAX_DT", "1e-3"))
MIN_SUBSTEPS = int(os.getenv("MIN_SUBSTEPS", "4"))
BLOWUP_INFLATION = float(os.getenv("BLOWUP_INFLATION", "10"))
SINGULAR_GAIN_EPS = 1e-12

# === ANALYSIS ===
SETTLING_BAND = float(os.getenv("SETTLING_BAND", "0.02"))
STEADY_TAIL_FRACTION = float(os.getenv("STEADY_TAIL_FRACTION", "0.2"))
LYAPUNOV_TOL = 1e-12
INPUT_GAP_TOL = 0.01
# W may rise while u catches up with v after the start or a setpoint step
ADAPTATION_WINDOW_S = float(os.getenv("ADAPTATION_WINDOW_S", "1.0"))

# === SWEEPS ===
SWEEP_WORKERS = int(os.getenv("SWEEP_WORKERS", str(os.cpu_count() or 1)))

# === OUTPUT ===
CSV_SIGNIFICANT_DIGITS = int(os.getenv("CSV_SIGNIFICANT_DIGITS", "17"))

# === Logging ===
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
