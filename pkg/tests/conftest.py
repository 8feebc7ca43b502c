import os
import subprocess
import sys

import pytest

from doseadapt import datasets
from doseadapt.data import StudySummaries

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def evocalcet():
    return StudySummaries.from_arms(datasets.evocalcet_arms())


@pytest.fixture(scope="session")
def biom_records():
    return datasets.biom_records()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def run_with_threads(code: str, n_threads: int) -> str:
    """Run ``code`` in a fresh interpreter with ``n_threads`` numba workers.

    numba fixes its pool size at import, so varying it needs a new process.
    """
    env = dict(os.environ, NUMBA_NUM_THREADS="4", DOSEADAPT_THREADS=str(n_threads))
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return res.stdout.strip()
