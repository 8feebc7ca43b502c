"""Bundled example data.

``biom_reconstructed.csv``: 100 subjects, 20 per arm, rescaled so each arm
matches the published means and SDs of the classic ``biom`` example (the raw
data are not bundled; see ``scripts/make_biom_reconstruction.py``).

``evocalcet_summary.csv``: published arm summaries of the evocalcet phase 2b
study (percent change from baseline in intact PTH).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..data import ArmSummary, SubjectRecord, load_csv, load_summary_csv

# pooled variance printed alongside the evocalcet summaries
EVOCALCET_REPORTED_S2 = 773.17


def path(name: str) -> Path:
    return Path(str(resources.files(__package__) / name))


def biom_records() -> list[SubjectRecord]:
    return load_csv(path("biom_reconstructed.csv"))


def evocalcet_arms() -> list[ArmSummary]:
    return load_summary_csv(path("evocalcet_summary.csv"))
