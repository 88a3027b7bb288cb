#!/usr/bin/env python3
"""
Autocovariance Deviation Toolkit

    python run.py serve
    python run.py bound-check --config configs/bound_check.json --out results/bound_check
"""

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
