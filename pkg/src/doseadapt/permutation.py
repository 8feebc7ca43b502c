"""Permutation p-values for contrast tests.

By default the adaptive coefficients are re-derived from every permuted
data set, so the reference distribution accounts for the data-driven choice
of contrast. ``recompute_coefficients=False`` instead holds the observed
coefficients fixed; that variant is
anti-conservative for the adaptive test and is kept for comparison only.
Each permuted data set gets the full contrast t statistic, pooled variance
included.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from . import _rng
from .contrast import DEGENERATE_TOL, ROUND_FUZZ, ROUNDING_GRAIN, ConstraintSpec, ContrastVector, Direction, compute_coefficients
from .data import StudySummaries, SubjectRecord, group_responses

_CHUNKS = 64
_TIE_RTOL = 1e-10
_ZERO_VAR_RTOL = 1e-13


class Alternative(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class PermutationConfig:
    n_permutations: int = 5000
    seed: int = 2021
    alternative: Alternative = Alternative.UPPER
    add_one_correction: bool = False
    recompute_coefficients: bool = True

    def __post_init__(self):
        object.__setattr__(self, "alternative", Alternative(self.alternative))
        if self.n_permutations < 100:
            raise ValueError("n_permutations must be >= 100")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class PermutationOutcome:
    p_value: float
    observed_t: float
    exceed_count: int
    n_permutations: int
    contrast: ContrastVector | None = None


@dataclass(frozen=True)
class MaxTOutcome:
    observed_t: tuple[float, ...]
    raw_p: tuple[float, ...]
    adjusted_p: tuple[float, ...]
    global_p: float
    best_index: int
    n_permutations: int


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _statistics(y, bounds, coef, ss_total, out):
    """Contrast t statistics of arm-ordered responses ``y`` (grand-mean centred)."""
    k = bounds.size - 1
    n_total = y.size
    means = np.empty(k)
    between = 0.0
    for i in range(k):
        s = 0.0
        for j in range(bounds[i], bounds[i + 1]):
            s += y[j]
        n_i = bounds[i + 1] - bounds[i]
        means[i] = s / n_i
        between += s * means[i]
    s2 = (ss_total - between) / (n_total - k)
    zero_var = s2 <= _ZERO_VAR_RTOL * ss_total / n_total
    for r in range(coef.shape[0]):
        num = 0.0
        var = 0.0
        for i in range(k):
            num += coef[r, i] * means[i]
            var += coef[r, i] * coef[r, i] / (bounds[i + 1] - bounds[i])
        if var == 0.0:
            out[r] = 0.0
        elif zero_var:
            out[r] = math.copysign(math.inf, num) if num != 0.0 else 0.0
        else:
            out[r] = num / math.sqrt(var * s2)


@nb.njit(parallel=True, cache=True)
def _permuted_statistics(y, bounds, coef, key, n_perm):
    """Statistics for permutations ``0..n_perm-1``; permutation b uses stream (key, b)."""
    n = y.size
    m = coef.shape[0]
    ss_total = 0.0
    for j in range(n):
        ss_total += y[j] * y[j]
    out = np.empty((n_perm, m))
    step = (n_perm + _CHUNKS - 1) // _CHUNKS
    for chunk in nb.prange(_CHUNKS):
        work = np.empty(n)
        row = np.empty(m)
        for b in range(chunk * step, min(n_perm, (chunk + 1) * step)):
            seed = _rng.stream_seed(key, np.uint64(b))
            for j in range(n):
                work[j] = y[j]
            counter = np.uint64(0)
            for i in range(n - 1, 0, -1):
                u = _rng.uniform(seed, counter)
                counter += np.uint64(1)
                j = int(u * (i + 1))
                tmp = work[i]
                work[i] = work[j]
                work[j] = tmp
            _statistics(work, bounds, coef, ss_total, row)
            for r in range(m):
                out[b, r] = row[r]
    return out


@nb.njit(cache=True)
def _adaptive_coefficients(means, offset, umbrella, decreasing, rounding, c):
    """Numba twin of :func:`contrast.compute_coefficients` on ``means + offset``.

    Returns False (and zero coefficients) when degenerate.
    """
    k = means.size
    y = np.empty(k)
    for i in range(k):
        v = means[i] + offset
        if rounding:
            v = math.copysign(math.floor(abs(v) / ROUNDING_GRAIN + 0.5 + ROUND_FUZZ) * ROUNDING_GRAIN, v)
        y[i] = v
    m = np.empty(k)
    m[0] = y[0]
    last = k - 1 if umbrella else k
    for i in range(1, last):
        m[i] = min(m[i - 1], y[i]) if decreasing else max(m[i - 1], y[i])
    if umbrella:
        m[k - 1] = y[k - 1]
    tail = 0.0
    for i in range(1, k):
        tail += m[i]
    c[0] = ((k - 1) * y[0] - tail) / k
    largest = abs(c[0])
    for i in range(1, k):
        c[i] = m[i] - m[i - 1] + c[i - 1]
        largest = max(largest, abs(c[i]))
    if largest < DEGENERATE_TOL:
        c[:] = 0.0
        return False
    return True


@nb.njit(cache=True)
def _adaptive_statistic(y, bounds, ss_total, offset, umbrella, decreasing, rounding):
    k = bounds.size - 1
    n_total = y.size
    means = np.empty(k)
    between = 0.0
    for i in range(k):
        s = 0.0
        for j in range(bounds[i], bounds[i + 1]):
            s += y[j]
        means[i] = s / (bounds[i + 1] - bounds[i])
        between += s * means[i]
    c = np.empty(k)
    if not _adaptive_coefficients(means, offset, umbrella, decreasing, rounding, c):
        return 0.0
    num = 0.0
    var = 0.0
    for i in range(k):
        num += c[i] * means[i]
        var += c[i] * c[i] / (bounds[i + 1] - bounds[i])
    s2 = (ss_total - between) / (n_total - k)
    if s2 <= _ZERO_VAR_RTOL * ss_total / n_total:
        return math.copysign(math.inf, num) if num != 0.0 else 0.0
    return num / math.sqrt(var * s2)


@nb.njit(parallel=True, cache=True)
def _readapted_statistics(y, bounds, key, n_perm, offset, umbrella, decreasing, rounding):
    """Adaptive statistics with coefficients re-derived for each permutation."""
    n = y.size
    ss_total = 0.0
    for j in range(n):
        ss_total += y[j] * y[j]
    out = np.empty(n_perm)
    step = (n_perm + _CHUNKS - 1) // _CHUNKS
    for chunk in nb.prange(_CHUNKS):
        work = np.empty(n)
        for b in range(chunk * step, min(n_perm, (chunk + 1) * step)):
            seed = _rng.stream_seed(key, np.uint64(b))
            for j in range(n):
                work[j] = y[j]
            counter = np.uint64(0)
            for i in range(n - 1, 0, -1):
                u = _rng.uniform(seed, counter)
                counter += np.uint64(1)
                j = int(u * (i + 1))
                tmp = work[i]
                work[i] = work[j]
                work[j] = tmp
            out[b] = _adaptive_statistic(work, bounds, ss_total, offset, umbrella, decreasing, rounding)
    return out


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _arrays(groups: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray, float]:
    """Pooled responses centred on the grand mean, arm offsets, and that mean."""
    y = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    bounds = np.zeros(len(groups) + 1, dtype=np.int64)
    bounds[1:] = np.cumsum([len(g) for g in groups])
    offset = float(y.mean())
    return y - offset, bounds, offset


def _observed(y: np.ndarray, bounds: np.ndarray, coef: np.ndarray) -> np.ndarray:
    out = np.empty(coef.shape[0])
    _statistics(y, bounds, coef, float(y @ y), out)
    return out


def _exceeds(t_perm: np.ndarray, t_obs, sign: float) -> np.ndarray:
    """``sign * T_b >= sign * T_obs`` with a relative tie tolerance for rounding noise."""
    a = sign * np.asarray(t_perm)
    b = sign * np.asarray(t_obs)
    tol = _TIE_RTOL * np.maximum(1.0, np.abs(np.where(np.isfinite(b), b, 0.0)))
    return a >= b - tol


def _p_value(count: int, n_perm: int, add_one: bool) -> float:
    if add_one:
        return (count + 1) / (n_perm + 1)
    return count / n_perm


def _subject_groups(records) -> list[np.ndarray]:
    if isinstance(records, StudySummaries):
        raise ValueError("permutation requires subject-level data, got summaries only")
    records = list(records)
    if records and not isinstance(records[0], SubjectRecord):
        raise ValueError("permutation requires subject-level data")
    _, groups = group_responses(records)
    if min(g.size for g in groups) < 2:
        raise ValueError("permutation test needs at least 2 subjects per arm")
    return groups


def adaptive_test_groups(
    groups: Sequence[np.ndarray],
    constraint: ConstraintSpec,
    config: PermutationConfig,
    rounding: bool = True,
) -> PermutationOutcome:
    """Adaptive permutation test on responses already grouped by arm (dose order)."""
    means = [float(np.mean(g)) for g in groups]
    contrast = compute_coefficients(means, constraint, rounding=rounding)
    if contrast.degenerate:
        return PermutationOutcome(1.0, 0.0, config.n_permutations, config.n_permutations, contrast)
    y, bounds, offset = _arrays(groups)
    key = _rng.as_key(config.seed)
    if config.recompute_coefficients:
        flags = (bool(constraint.umbrella), constraint.direction is Direction.DECREASING, bool(rounding))
        t_obs = _adaptive_statistic(y, bounds, float(y @ y), offset, *flags)
        t_perm = _readapted_statistics(y, bounds, key, config.n_permutations, offset, *flags)
    else:
        coef = np.asarray(contrast.coefficients, dtype=float)[None, :]
        t_obs = _observed(y, bounds, coef)[0]
        t_perm = _permuted_statistics(y, bounds, coef, key, config.n_permutations)[:, 0]
    sign = 1.0 if config.alternative is Alternative.UPPER else -1.0
    count = int(np.count_nonzero(_exceeds(t_perm, t_obs, sign)))
    return PermutationOutcome(
        p_value=_p_value(count, config.n_permutations, config.add_one_correction),
        observed_t=float(t_obs),
        exceed_count=count,
        n_permutations=config.n_permutations,
        contrast=contrast,
    )


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def permutation_pvalue(
    records: Sequence[SubjectRecord],
    constraint: ConstraintSpec = ConstraintSpec(),
    config: PermutationConfig = PermutationConfig(),
    rounding: bool = True,
) -> PermutationOutcome:
    """One-sided permutation p-value of the adaptive contrast test.

    Group labels are permuted uniformly with arm sizes preserved;
    permutation ``b`` uses the counter-based stream ``(seed, b)``. Ties
    with the observed statistic count as exceedances. A degenerate observed
    contrast short-circuits to ``p = 1`` and ``T = 0``.
    """
    return adaptive_test_groups(_subject_groups(records), constraint, config, rounding)


def permuted_statistics(
    records: Sequence[SubjectRecord], contrasts, config: PermutationConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Observed and permuted statistics for fixed contrasts.

    Returns ``(t_obs, t_perm)`` with shapes ``(m,)`` and ``(B, m)``.
    """
    groups = _subject_groups(records) if not _is_grouped(records) else list(records)
    coef = _contrast_matrix(contrasts, len(groups))
    y, bounds, _ = _arrays(groups)
    t_perm = _permuted_statistics(y, bounds, coef, _rng.as_key(config.seed), config.n_permutations)
    return _observed(y, bounds, coef), t_perm


def fixed_contrast_pvalue(groups: Sequence[np.ndarray], contrast, config: PermutationConfig) -> tuple[float, float]:
    """p-value and T for one fixed contrast on grouped responses; degenerate gives (1, 0)."""
    if isinstance(contrast, ContrastVector) and contrast.degenerate:
        return 1.0, 0.0
    t_obs, t_perm = permuted_statistics(list(groups), [np.asarray(contrast, dtype=float)], config)
    sign = 1.0 if config.alternative is Alternative.UPPER else -1.0
    count = int(np.count_nonzero(_exceeds(t_perm[:, 0], t_obs[0], sign)))
    return _p_value(count, config.n_permutations, config.add_one_correction), float(t_obs[0])


def _is_grouped(data) -> bool:
    return isinstance(data, (list, tuple)) and len(data) > 0 and isinstance(data[0], np.ndarray)


def _contrast_matrix(contrasts, k: int) -> np.ndarray:
    coef = np.atleast_2d(np.array([np.asarray(c, dtype=float) for c in contrasts]))
    if coef.shape[1] != k:
        raise ValueError(f"contrasts have {coef.shape[1]} coefficients for {k} arms")
    bad = np.flatnonzero(np.abs(coef.sum(axis=1)) > 1e-9)
    if bad.size:
        raise ValueError(f"contrast {int(bad[0])} does not sum to zero")
    return coef


def multi_contrast_max_t(
    records,
    contrasts: Sequence[Sequence[float]],
    config: PermutationConfig = PermutationConfig(),
) -> MaxTOutcome:
    """Single-step max-T permutation test over fixed contrasts.

    ``records`` is a list of :class:`SubjectRecord` or a list of per-arm
    response arrays in dose order (the latter allows two-arm designs).
    The adjusted p-value of contrast j is the share of permutations whose
    largest statistic reaches ``T_obs,j``; the global p-value is the
    adjusted p-value of the best observed contrast.
    """
    t_obs, t_perm = permuted_statistics(records, contrasts, config)
    sign = 1.0 if config.alternative is Alternative.UPPER else -1.0
    b = config.n_permutations
    raw = _exceeds(t_perm, t_obs[None, :], sign).sum(axis=0)
    max_perm = np.max(sign * t_perm, axis=1)
    adj = _exceeds(max_perm[:, None], sign * t_obs[None, :], 1.0).sum(axis=0)
    add_one = config.add_one_correction
    adjusted = tuple(_p_value(int(c), b, add_one) for c in adj)
    best = int(np.argmax(sign * t_obs))
    return MaxTOutcome(
        observed_t=tuple(float(t) for t in t_obs),
        raw_p=tuple(_p_value(int(c), b, add_one) for c in raw),
        adjusted_p=adjusted,
        global_p=adjusted[best],
        best_index=best,
        n_permutations=b,
    )
