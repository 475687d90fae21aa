"""
Configuration settings for the Ratchet PGD toolkit.
"""

import os
from pathlib import Path

# Base directories
BASE_DIR = Path(__file__).parent.parent
APP_DIR = Path(__file__).parent

# Application settings
APP_NAME = "Ratchet PGD"
APP_VERSION = "1.0.0"
APP_DESCRIPTION = "Incremental FEM and multi-temporal PGD solvers for cyclic elastoplasticity"

# File paths
DATA_DIR = Path(os.getenv("RATCHET_DATA_DIR", str(BASE_DIR / "data")))
OUTPUT_DIR = Path(os.getenv("RATCHET_OUTPUT_DIR", str(BASE_DIR / "outputs")))
LOG_DIR = Path(os.getenv("RATCHET_LOG_DIR", str(BASE_DIR / "logs")))

# Create directories if they don't exist
for dir_path in [DATA_DIR, OUTPUT_DIR, LOG_DIR]:
    if not dir_path.exists():
        dir_path.mkdir(parents=True, exist_ok=True)

# Run catalog
DEFAULT_DB_PATH = str(DATA_DIR / "runs.db")
DATABASE_URL = os.getenv("DATABASE_URL", f"sqlite:///{DEFAULT_DB_PATH}")

# Logging configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_FILE = LOG_DIR / "ratchet.log"

# Output bundle format
SCHEMA_VERSION = 1
CHUNK_STEPS = 4096

# Constitutive integration
LOCAL_TOL = 1e-10  # relative to sigma_p
MAX_LOCAL_ITERS = 50

# Incremental solver
NEWTON_TOL = 1e-8
NEWTON_ABS_TOL = 1e-10
MAX_NEWTON_ITERS = 25
MAX_BISECTIONS = 6
STATE_RING = 4

# PGD solver
FIXED_POINT_TOL = 1e-6
MAX_SWEEPS = 60
STAGNATION_WINDOW = 10
OUTER_TOL = 1e-4
MAX_OUTER_ITERS = 50
MODE_ACCEPT_RATIO = 1e-4
WARMUP_CYCLES = 2
