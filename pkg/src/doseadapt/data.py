"""Study data: subject records, per-arm summaries and pooled variance."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent study data."""


@dataclass(frozen=True)
class SubjectRecord:
    arm_index: int
    dose: float
    response: float


@dataclass(frozen=True)
class ArmSummary:
    dose: float
    n: int
    mean: float
    sd: float


@dataclass(frozen=True)
class StudySummaries:
    arms: tuple[ArmSummary, ...]
    pooled_variance: float

    @property
    def k(self) -> int:
        return len(self.arms)

    @property
    def doses(self) -> np.ndarray:
        return np.array([a.dose for a in self.arms], dtype=float)

    @property
    def means(self) -> np.ndarray:
        return np.array([a.mean for a in self.arms], dtype=float)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([a.n for a in self.arms], dtype=np.int64)

    @property
    def sds(self) -> np.ndarray:
        return np.array([a.sd for a in self.arms], dtype=float)

    @classmethod
    def from_arms(
        cls, arms: Iterable[ArmSummary], s2: float | None = None
    ) -> "StudySummaries":
        """Order arms by dose and attach the pooled variance.

        ``s2`` overrides the computed value, for published
        summaries that report S² directly.
        """
        arms = tuple(sorted(arms, key=lambda a: a.dose))
        _check_arm_layout([a.dose for a in arms])
        s2 = pooled_variance(arms) if s2 is None else float(s2)
        if not s2 >= 0:
            raise DataError("pooled variance must be non-negative")
        return cls(arms=arms, pooled_variance=s2)


@dataclass(frozen=True)
class CsvSchema:
    """Column names for subject-level CSV input.

    ``response=None`` picks the first of ``response``, ``resp``, ``res``.
    """

    dose: str = "dose"
    response: str | None = None
    arm: str | None = None


_RESPONSE_ALIASES = ("response", "resp", "res")


def _check_arm_layout(doses: Sequence[float]) -> None:
    if len(doses) < 3:
        raise DataError(f"need at least 3 arms, got {len(doses)}")
    if any(d < 0 for d in doses):
        raise DataError("doses must be non-negative")
    if doses[0] != 0:
        raise DataError("missing placebo arm (dose 0)")
    if any(b <= a for a, b in zip(doses, doses[1:])):
        raise DataError("arms must have distinct doses")


def pooled_variance(arms: Sequence[ArmSummary]) -> float:
    """Pooled within-arm variance ``sum((n_i - 1) s_i^2) / (sum(n_i) - k)``."""
    if any(a.n < 1 for a in arms):
        raise DataError("every arm needs n >= 1")
    dof = sum(a.n for a in arms) - len(arms)
    if dof <= 0:
        raise DataError("pooled variance needs sum(n) > k")
    return math.fsum((a.n - 1) * a.sd * a.sd for a in arms) / dof


def group_responses(records: Sequence[SubjectRecord]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Group responses by arm, ordered by dose.

    Returns the arm doses and one response array per arm. Within an arm,
    responses keep their input order.
    """
    by_arm: dict[int, list[float]] = defaultdict(list)
    arm_dose: dict[int, float] = {}
    for rec in records:
        if not math.isfinite(rec.response):
            raise DataError(f"non-finite response in arm {rec.arm_index}")
        d = arm_dose.setdefault(rec.arm_index, rec.dose)
        if d != rec.dose:
            raise DataError(f"arm {rec.arm_index} has inconsistent doses {d} and {rec.dose}")
        by_arm[rec.arm_index].append(rec.response)
    order = sorted(by_arm, key=lambda a: arm_dose[a])
    doses = np.array([arm_dose[a] for a in order], dtype=float)
    _check_arm_layout(list(doses))
    return doses, [np.asarray(by_arm[a], dtype=float) for a in order]


def summarize(records: Sequence[SubjectRecord]) -> StudySummaries:
    """Per-arm means, SDs (n - 1 denominator) and pooled variance."""
    doses, groups = group_responses(records)
    arms = []
    for d, y in zip(doses, groups):
        if y.size < 2:
            raise DataError(f"arm with dose {d} has {y.size} subject(s); need >= 2")
        arms.append(ArmSummary(dose=float(d), n=int(y.size), mean=float(y.mean()), sd=float(y.std(ddof=1))))
    return StudySummaries.from_arms(arms)


def _resolve(header: list[str], name: str | None, aliases: Sequence[str], what: str) -> int:
    candidates = [name] if name else list(aliases)
    lowered = [h.strip().lower() for h in header]
    for c in candidates:
        if c.lower() in lowered:
            return lowered.index(c.lower())
    raise DataError(f"no {what} column (looked for {', '.join(candidates)})")


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}: {column} value {text!r} is not a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: {column} value {text!r} is not finite")
    return value


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> list[SubjectRecord]:
    """Read subject-level data.

    Rows are numbered from 1 for the header. Arms are indexed 1..k in
    ascending dose order; when an arm column is given, each arm label must
    map to a single dose.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    i_dose = _resolve(header, schema.dose, ("dose",), "dose")
    i_resp = _resolve(header, schema.response, _RESPONSE_ALIASES, "response")
    i_arm = _resolve(header, schema.arm, (), "arm") if schema.arm else None

    parsed: list[tuple[int, str, float, float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise DataError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        dose = _parse_float(row[i_dose], lineno, "dose")
        resp = _parse_float(row[i_resp], lineno, "response")
        label = row[i_arm].strip() if i_arm is not None else repr(dose)
        parsed.append((lineno, label, dose, resp))

    label_dose: dict[str, float] = {}
    for lineno, label, dose, _ in parsed:
        prev = label_dose.setdefault(label, dose)
        if prev != dose:
            raise DataError(f"row {lineno}: arm {label!r} has inconsistent doses {prev} and {dose}")
    ranked = sorted(set(label_dose.values()))
    if len(ranked) != len(label_dose):
        raise DataError("two arm labels share one dose")
    index = {label: ranked.index(d) + 1 for label, d in label_dose.items()}
    return [SubjectRecord(arm_index=index[lab], dose=d, response=r) for _, lab, d, r in parsed]


def load_summary_csv(path: str | Path) -> list[ArmSummary]:
    """Read summary-level data with columns ``dose,n,mean,sd``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = {f.strip().lower(): f for f in (reader.fieldnames or [])}
        missing = [c for c in ("dose", "n", "mean", "sd") if c not in fields]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        arms = []
        for lineno, row in enumerate(reader, start=2):
            n = _parse_float(row[fields["n"]], lineno, "n")
            if n != int(n) or n < 1:
                raise DataError(f"row {lineno}: n must be a positive integer")
            sd = _parse_float(row[fields["sd"]], lineno, "sd")
            if sd < 0:
                raise DataError(f"row {lineno}: sd must be non-negative")
            arms.append(
                ArmSummary(
                    dose=_parse_float(row[fields["dose"]], lineno, "dose"),
                    n=int(n),
                    mean=_parse_float(row[fields["mean"]], lineno, "mean"),
                    sd=sd,
                )
            )
    return arms


def write_records_csv(records: Sequence[SubjectRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "dose", "response"])
        for r in records:
            w.writerow([r.arm_index, repr(r.dose), repr(r.response)])
