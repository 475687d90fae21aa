"""
Ratchet PGD - Main entry point
Run this script to solve scenarios, compare histories or start the results service:

    python run.py run --scenario plate-paper --solver pgd --modes 3
    python run.py serve
"""

import os
import sys
from pathlib import Path


def _early_threads(argv):
    """Apply --threads before numpy is imported anywhere."""
    for i, arg in enumerate(argv):
        value = None
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
        if value and value.isdigit():
            for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[name] = value


def main():
    # Add the directory to Python path
    sys.path.insert(0, str(Path(__file__).parent))
    _early_threads(sys.argv[1:])

    from app.cli import main as cli_main

    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
