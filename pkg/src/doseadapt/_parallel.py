"""Worker-count control for the numba kernels.

``DOSEADAPT_THREADS`` caps the number of threads. Results never depend on
it: every permutation and replicate draws from its own counter-based stream
and reductions are integer sums.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numba

ENV_VAR = "DOSEADAPT_THREADS"


def max_threads() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def configure_threads(n: int | None = None) -> int:
    """Set the active thread count (``None`` reads ``DOSEADAPT_THREADS``)."""
    if n is None:
        env = os.environ.get(ENV_VAR)
        n = int(env) if env else max_threads()
    n = max(1, min(int(n), max_threads()))
    numba.set_num_threads(n)
    return n


@contextmanager
def threads(n: int):
    prev = numba.get_num_threads()
    configure_threads(n)
    try:
        yield
    finally:
        numba.set_num_threads(prev)
