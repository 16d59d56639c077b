"""
CUPID runner.

Usage:
    python runner.py generate --users 1000 --horizon-hours 24
    python runner.py train --mode two-phase
    python runner.py --help
"""
import sys

from lib.cli import main

if __name__ == "__main__":
    sys.exit(main())
