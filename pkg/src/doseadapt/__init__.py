"""Adaptive contrast test for dose-response studies."""

import os

# TBB in common base images is too old for numba; OpenMP is always present.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
