import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doseadapt.contrast import (
    ConstraintSpec,
    Direction,
    compute_coefficients,
    contrast_statistic,
    round_half_away,
    running_extremes,
    t_reference_quantiles,
)
from doseadapt.data import ArmSummary, StudySummaries

INC = ConstraintSpec(Direction.INCREASING, umbrella=False)
INC_U = ConstraintSpec(Direction.INCREASING, umbrella=True)
DEC = ConstraintSpec(Direction.DECREASING, umbrella=False)

means_st = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=8)


def centered_extremes(means, constraint):
    """Oracle: the recursion telescopes to c_i = M_i - mean(M)."""
    m = list(means)
    pick = max if constraint.direction is Direction.INCREASING else min
    chain = m[:-1] if constraint.umbrella else m
    ext = [chain[0]]
    for v in chain[1:]:
        ext.append(pick(ext[-1], v))
    if constraint.umbrella:
        ext.append(m[-1])
    mu = math.fsum(ext) / len(ext)
    return [e - mu for e in ext]


def test_running_extremes_examples():
    assert running_extremes([0.2, 0.4, 0.2, 0.6]).tolist() == [0.2, 0.4, 0.4, 0.6]
    assert running_extremes([1, 2, 3]).tolist() == [1, 2, 3]
    dec = [5.44, -8.40, -10.56, -20.16]
    assert running_extremes(dec, Direction.DECREASING).tolist() == dec
    with pytest.raises(ValueError):
        running_extremes([])


@pytest.mark.parametrize(
    "means,constraint,expected",
    [
        ((0.2, 0.4, 0.6, 0.8), INC_U, (-0.3, -0.1, 0.1, 0.3)),
        ((0.2, 0.4, 0.2, 0.6), INC_U, (-0.2, 0.0, 0.0, 0.2)),
        ((0.345, 0.457, 0.810, 0.934, 0.949), INC, (-0.354, -0.242, 0.111, 0.235, 0.250)),
        ((5.44, -8.40, -10.56, -20.16), DEC, (13.86, 0.02, -2.14, -11.74)),
    ],
)
def test_coefficient_goldens(means, constraint, expected):
    c = compute_coefficients(means, constraint)
    assert np.allclose(c.coefficients, expected, atol=1e-5)
    assert not c.degenerate


def test_evocalcet_fourth_coefficient_balances_sum():
    c = compute_coefficients((5.44, -8.40, -10.56, -20.16), DEC).coefficients
    assert c[3] == pytest.approx(-11.74, abs=1e-9)
    assert sum(c[:3]) + (-7.56) != pytest.approx(0, abs=1)


@pytest.mark.parametrize("constraint", [INC, DEC, INC_U])
def test_constant_means_degenerate(constraint):
    c = compute_coefficients([3.3] * 5, constraint)
    assert c.degenerate and c.coefficients == (0.0,) * 5


def test_drug_arms_below_placebo_gives_zero():
    c = compute_coefficients([1.0, 0.5, 0.2, 0.9], INC)
    assert c.degenerate


def test_rounding_policy():
    assert round_half_away([0.123455, -0.123455, 1.000004]).tolist() == pytest.approx([0.12346, -0.12346, 1.0])
    raw = compute_coefficients([0.1234567, 0.2, 0.3], INC, rounding=False)
    rnd = compute_coefficients([0.1234567, 0.2, 0.3], INC, rounding=True)
    assert raw.coefficients[0] != rnd.coefficients[0]


def test_needs_three_arms():
    with pytest.raises(ValueError):
        compute_coefficients([1, 2], INC)


@settings(max_examples=300, deadline=None)
@given(means_st, st.sampled_from([INC, DEC, INC_U, ConstraintSpec(Direction.DECREASING, True)]))
def test_matches_centered_extremes_oracle(means, constraint):
    c = compute_coefficients(means, constraint, rounding=False)
    oracle = centered_extremes(means, constraint)
    if c.degenerate:
        assert max(abs(v) for v in oracle) < 1e-8
    else:
        assert np.allclose(c.coefficients, oracle, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(means_st, st.booleans(), st.booleans())
def test_sum_zero_and_chain(means, umbrella, decreasing):
    spec = ConstraintSpec(Direction.DECREASING if decreasing else Direction.INCREASING, umbrella)
    c = np.array(compute_coefficients(means, spec).coefficients)
    assert abs(c.sum()) < 1e-9
    chain = c[:-1] if umbrella else c
    diffs = np.diff(chain) * (-1 if decreasing else 1)
    assert np.all(diffs >= -1e-12)


@settings(max_examples=200, deadline=None)
@given(means_st, st.floats(-50, 50), st.floats(0.01, 100))
def test_translation_and_scale(means, delta, lam):
    base = np.array(compute_coefficients(means, INC_U, rounding=False).coefficients)
    shifted = np.array(compute_coefficients(np.add(means, delta), INC_U, rounding=False).coefficients)
    scaled = np.array(compute_coefficients(np.multiply(means, lam), INC_U, rounding=False).coefficients)
    assert np.allclose(shifted, base, atol=1e-9)
    assert np.allclose(scaled, lam * base, atol=1e-9 * max(1, lam))


@settings(max_examples=200, deadline=None)
@given(means_st)
def test_direction_mirror(means):
    inc = np.array(compute_coefficients(means, INC, rounding=False).coefficients)
    dec = np.array(compute_coefficients(np.negative(means), DEC, rounding=False).coefficients)
    assert np.allclose(inc, -dec, atol=1e-9)


def test_monotone_means_give_centered_means():
    m = np.array([0.1, 0.5, 0.9, 1.7, 2.0])
    c = compute_coefficients(m, INC, rounding=False).coefficients
    assert np.allclose(c, m - m.mean(), atol=1e-12)


def _summaries(means, sizes, sds):
    arms = [ArmSummary(float(d), int(n), float(m), float(s)) for d, n, m, s in zip(range(len(means)), sizes, means, sds)]
    return StudySummaries.from_arms(arms)


def t_oracle(c, means, sizes, s2):
    num = sum(ci * yi for ci, yi in zip(c, means))
    den = math.sqrt(sum(ci * ci / ni for ci, ni in zip(c, sizes)) * s2)
    return num / den


def test_statistic_against_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = rng.integers(3, 7)
        s = _summaries(rng.normal(size=k), rng.integers(2, 50, size=k), rng.uniform(0.1, 3, size=k))
        c = compute_coefficients(s.means, INC)
        r = contrast_statistic(c, s)
        if c.degenerate:
            assert r.t_value == 0.0
        else:
            assert r.t_value == pytest.approx(t_oracle(c.coefficients, s.means, s.sizes, s.pooled_variance), rel=1e-9)


def test_evocalcet_statistic(evocalcet):
    c = compute_coefficients(evocalcet.means, DEC)
    reported_s2 = StudySummaries.from_arms(evocalcet.arms, s2=773.17)
    assert contrast_statistic(c, reported_s2).t_value == pytest.approx(3.4821, abs=1e-3)
    # S^2 from the pooled formula instead
    assert contrast_statistic(c, evocalcet).t_value == pytest.approx(3.544, abs=1e-3)


def test_biom_statistic_from_summaries():
    s = _summaries([0.345, 0.457, 0.810, 0.934, 0.949], [20] * 5, [0.517, 0.490, 0.740, 0.765, 0.947])
    c = compute_coefficients(s.means, INC)
    assert contrast_statistic(c, s).t_value == pytest.approx(3.518, abs=5e-3)


def test_degenerate_statistic_zero():
    s = _summaries([1, 1, 1], [3, 3, 3], [1, 1, 1])
    r = contrast_statistic(compute_coefficients(s.means, INC), s)
    assert r.t_value == 0.0 and r.numerator == 0.0


def test_zero_variance_raises():
    s = _summaries([1, 2, 3], [3, 3, 3], [0, 0, 0])
    with pytest.raises(ValueError, match="pooled variance"):
        contrast_statistic(compute_coefficients(s.means, INC), s)


def test_scale_invariance_of_t():
    s = _summaries([0.1, 0.4, 0.3, 0.9], [10, 12, 9, 11], [1, 1.2, 0.8, 1.1])
    c = compute_coefficients(s.means, INC)
    from doseadapt.contrast import ContrastVector

    scaled = ContrastVector(tuple(3.7 * v for v in c.coefficients), c.constraint, False)
    assert contrast_statistic(scaled, s).t_value == pytest.approx(contrast_statistic(c, s).t_value, rel=1e-12)


def test_t_quantiles_match_reported():
    q = t_reference_quantiles(112)
    assert round(q[0.025], 2) == 1.98
    assert round(q[0.0025], 2) == 2.86
    assert round(q[0.0005], 2) == 3.38
