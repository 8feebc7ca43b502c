"""Adaptive contrast coefficients and the contrast t statistic.

Coefficients are built from running extremes of the observed arm means so
that they respect a pre-specified ordering (non-decreasing for an
increasing dose-response, non-increasing for a decreasing one). With the
umbrella option the highest dose is left out of the ordering and uses its
own mean.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .data import StudySummaries

ROUNDING_GRAIN = 1e-5
DEGENERATE_TOL = 1e-8
# decimal halves such as 0.123455 are stored just below the half; nudge them up
ROUND_FUZZ = 1e-9


class Direction(str, enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.INCREASING else -1.0


@dataclass(frozen=True)
class ConstraintSpec:
    direction: Direction = Direction.INCREASING
    umbrella: bool = False

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def label(self) -> str:
        return "umbrella" if self.umbrella else "full"


@dataclass(frozen=True)
class ContrastVector:
    coefficients: tuple[float, ...]
    constraint: ConstraintSpec
    degenerate: bool

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coefficients, dtype=dtype)

    def __len__(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class ContrastTestResult:
    t_value: float
    contrast: ContrastVector
    pooled_variance: float
    numerator: float
    variance_term: float


def round_half_away(x, grain: float = ROUNDING_GRAIN) -> np.ndarray:
    """Round to a multiple of ``grain``, halves away from zero (SAS ``round``)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) / grain + 0.5 + ROUND_FUZZ) * grain


def running_extremes(means: Sequence[float], direction: Direction = Direction.INCREASING) -> np.ndarray:
    """Running maximum (increasing) or minimum (decreasing) of the means."""
    m = np.asarray(means, dtype=float)
    if m.size == 0:
        raise ValueError("running_extremes needs at least one mean")
    if Direction(direction) is Direction.INCREASING:
        return np.maximum.accumulate(m)
    return np.minimum.accumulate(m)


def compute_coefficients(
    means: Sequence[float],
    constraint: ConstraintSpec = ConstraintSpec(),
    rounding: bool = True,
) -> ContrastVector:
    """Adaptive ordinal-constraint contrast coefficients.

    Parameters
    ----------
    means : sequence of float
        Arm means ordered by dose, placebo first.
    constraint : ConstraintSpec
        Ordering direction and whether the top dose is left unconstrained.
    rounding : bool
        Round the means to 1e-5 first.

    Returns
    -------
    ContrastVector
        ``c_1 = ((k-1) Y_1 - sum_{i>=2} M_i) / k`` and
        ``c_i = M_i - M_{i-1} + c_{i-1}``, with ``M`` the running extremes
        (``M_k = Y_k`` under the umbrella option).
    """
    y = np.asarray(means, dtype=float)
    k = y.size
    if k < 3:
        raise ValueError(f"need at least 3 arms, got {k}")
    if not np.all(np.isfinite(y)):
        raise ValueError("means must be finite")
    if rounding:
        y = round_half_away(y)

    if constraint.umbrella:
        m = np.append(running_extremes(y[:-1], constraint.direction), y[-1])
    else:
        m = running_extremes(y, constraint.direction)

    c = np.empty(k)
    c[0] = ((k - 1) * y[0] - math.fsum(m[1:])) / k
    for i in range(1, k):
        c[i] = m[i] - m[i - 1] + c[i - 1]

    degenerate = bool(np.max(np.abs(c)) < DEGENERATE_TOL)
    if degenerate:
        c[:] = 0.0
    return ContrastVector(tuple(float(v) for v in c), constraint, degenerate)


def contrast_statistic(contrast: ContrastVector, summaries: StudySummaries) -> ContrastTestResult:
    """``T = sum(c_i Y_i) / sqrt(sum(c_i^2 / n_i) S^2)``; zero for a degenerate contrast."""
    c = np.asarray(contrast.coefficients, dtype=float)
    if c.size != summaries.k:
        raise ValueError(f"contrast has {c.size} coefficients for {summaries.k} arms")
    numerator = float(c @ summaries.means)
    variance_term = float(np.sum(c * c / summaries.sizes))
    s2 = summaries.pooled_variance
    if contrast.degenerate:
        t = 0.0
    elif s2 <= 0:
        raise ValueError("pooled variance is zero for a non-degenerate contrast (constant data within arms)")
    else:
        t = numerator / math.sqrt(variance_term * s2)
    return ContrastTestResult(
        t_value=t,
        contrast=contrast,
        pooled_variance=s2,
        numerator=numerator,
        variance_term=variance_term,
    )


def t_reference_quantiles(df: int, upper: Sequence[float] = (0.025, 0.0025, 0.0005)) -> dict[float, float]:
    """Upper quantiles of Student's t, reported as a diagnostic only."""
    return {float(a): float(stats.t.isf(a, df)) for a in upper}
