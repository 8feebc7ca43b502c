"""Candidate dose-response models, AIC selection and dose recommendation.

Models are fitted to the arm means with the placebo mean ``e0`` held fixed
(and, for Emax and Logistic, the maximal effect held fixed). The residual
SD is profiled out: for given curve parameters the normal likelihood is
maximized at ``sigma^2 = RSS / k``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .contrast import Direction

SIGMA_FLOOR = 1e-6
MAX_ITER = 2000
STARTS_PER_PARAM = 8


class ModelKind(str, enum.Enum):
    EMAX = "emax"
    LINEAR_LOG = "linlog"
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAMS[self]

    @property
    def n_params(self) -> int:
        """Free curve parameters plus the residual SD."""
        return len(_PARAMS[self]) + 1


_PARAMS = {
    ModelKind.EMAX: ("ed50",),
    ModelKind.LINEAR_LOG: ("theta",),
    ModelKind.LINEAR: ("theta",),
    ModelKind.EXPONENTIAL: ("theta1", "theta2"),
    ModelKind.QUADRATIC: ("theta1", "theta2"),
    ModelKind.LOGISTIC: ("theta1", "theta2"),
}
_ORDER = {kind: i for i, kind in enumerate(ModelKind)}
# parameters optimized on the log scale
_POSITIVE = {ModelKind.EMAX: (0,), ModelKind.LOGISTIC: (1,)}


class AnchorConvention(str, enum.Enum):
    """How the fixed maximal effect of Emax/Logistic is taken from the data.

    ``difference``: extreme arm mean minus placebo mean.
    ``raw``: the extreme arm mean itself.
    """

    DIFFERENCE = "difference"
    RAW = "raw"


class Criterion(str, enum.Enum):
    DIFF_FROM_PLACEBO = "placebo"
    CHANGE_FROM_BASELINE = "baseline"


@dataclass(frozen=True)
class ModelAnchors:
    e0: float
    emax_effect: float

    @classmethod
    def from_means(
        cls,
        means: Sequence[float],
        direction: Direction | None = None,
        convention: AnchorConvention = AnchorConvention.DIFFERENCE,
    ) -> "ModelAnchors":
        """Anchor on the placebo mean and the most extreme arm.

        Without a direction the arm farthest from placebo is used.
        """
        m = np.asarray(means, dtype=float)
        e0 = float(m[0])
        if direction is None:
            extreme = float(m[np.argmax(np.abs(m - e0))])
        elif Direction(direction) is Direction.INCREASING:
            extreme = float(m.max())
        else:
            extreme = float(m.min())
        if AnchorConvention(convention) is AnchorConvention.RAW:
            return cls(e0, extreme)
        return cls(e0, extreme - e0)


@dataclass(frozen=True)
class FitResult:
    kind: ModelKind
    params: dict[str, float]
    sigma: float
    log_likelihood: float
    aic: float
    converged: bool
    anchors: ModelAnchors
    rss: float
    n_points: int
    aic_reliable: bool = True
    weighted: bool = False

    @property
    def n_params(self) -> int:
        return self.kind.n_params

    def predict(self, dose):
        return predict(self.kind, self.anchors, self.params, dose)

    def to_dict(self, dose_max: float | None = None, grid_points: int = 101) -> dict:
        out = {
            "kind": self.kind.value,
            "params": dict(self.params),
            "anchors": {"e0": self.anchors.e0, "emax_effect": self.anchors.emax_effect},
            "sigma": self.sigma,
            "logL": self.log_likelihood,
            "aic": self.aic,
            "aic_reliable": self.aic_reliable,
            "rss": self.rss,
            "n_params": self.n_params,
            "converged": self.converged,
        }
        if dose_max is not None:
            grid = np.linspace(0.0, dose_max, grid_points)
            out["curve"] = {
                "dose": [float(d) for d in grid],
                "mean": [float(v) for v in np.atleast_1d(self.predict(grid))],
            }
        return out


def _param_vector(kind: ModelKind, params) -> tuple[float, ...]:
    if isinstance(params, dict):
        return tuple(float(params[n]) for n in kind.param_names)
    return tuple(float(v) for v in np.atleast_1d(params))


def _curve(kind: ModelKind, anchors: ModelAnchors, p: Sequence[float], d: np.ndarray) -> np.ndarray:
    e0, em = anchors.e0, anchors.emax_effect
    if kind is ModelKind.EMAX:
        return e0 + em * d / (p[0] + d)
    if kind is ModelKind.LINEAR_LOG:
        return e0 + p[0] * np.log(d + 1.0)
    if kind is ModelKind.LINEAR:
        return e0 + p[0] * d
    if kind is ModelKind.EXPONENTIAL:
        with np.errstate(over="ignore"):
            return e0 + p[0] * np.exp(d / p[1])
    if kind is ModelKind.QUADRATIC:
        return e0 + p[0] * d + p[1] * d * d
    with np.errstate(over="ignore"):
        return e0 + em / (1.0 + np.exp((p[0] - d) / p[1]))


def predict(kind: ModelKind, anchors: ModelAnchors, params, dose):
    """Model mean at ``dose`` (scalar or array). Logs are natural."""
    kind = ModelKind(kind)
    p = _param_vector(kind, params)
    d = np.asarray(dose, dtype=float)
    if np.any(d < 0):
        raise ValueError("dose must be non-negative")
    if kind is ModelKind.EMAX and not p[0] > 0:
        raise ValueError("Emax model needs ED50 > 0")
    if kind is ModelKind.EXPONENTIAL and p[1] == 0:
        raise ValueError("Exponential model needs theta2 != 0")
    if kind is ModelKind.LOGISTIC and not p[1] > 0:
        raise ValueError("Logistic model needs theta2 > 0")
    out = _curve(kind, anchors, p, d)
    return float(out) if out.ndim == 0 else out


def _start_grid(kind: ModelKind, doses: np.ndarray, means: np.ndarray, anchors: ModelAnchors) -> list[np.ndarray]:
    """Multistart points on the optimizer's (log-transformed) scale."""
    d_max = float(doses.max())
    span = float(np.ptp(means)) or 1.0
    signed = np.linspace(-2.0, 2.0, STARTS_PER_PARAM)
    positive = np.geomspace(1e-3, 10.0, STARTS_PER_PARAM) * d_max
    if kind is ModelKind.EMAX:
        grids = [np.log(positive)]
    elif kind is ModelKind.LINEAR_LOG:
        grids = [signed * span / math.log(d_max + 1.0)]
    elif kind is ModelKind.LINEAR:
        grids = [signed * span / d_max]
    elif kind is ModelKind.EXPONENTIAL:
        scales = d_max * np.array([0.2, 1.0, 5.0, 25.0])
        grids = [signed * span, np.concatenate([-scales[::-1], scales])]
    elif kind is ModelKind.QUADRATIC:
        grids = [signed * 4 * span / d_max, signed * 4 * span / d_max**2]
    else:
        grids = [np.linspace(0.0, d_max, STARTS_PER_PARAM), np.log(np.geomspace(1e-2, 1.0, STARTS_PER_PARAM) * d_max)]
    starts = [np.array(s, dtype=float) for s in itertools.product(*grids)]
    # plus the naive all-ones start
    ones = np.ones(len(grids))
    for i in _POSITIVE.get(kind, ()):
        ones[i] = 0.0
    starts.append(ones)
    return starts


def _to_natural(kind: ModelKind, z: np.ndarray) -> np.ndarray:
    p = np.array(z, dtype=float)
    for i in _POSITIVE.get(kind, ()):
        p[i] = math.exp(min(p[i], 700.0))
    return p


def fit_model(
    kind: ModelKind,
    doses: Sequence[float],
    means: Sequence[float],
    anchors: ModelAnchors | None = None,
    weights: Sequence[float] | None = None,
) -> FitResult:
    """Normal maximum-likelihood fit of one model to the arm means.

    Parameters
    ----------
    kind : ModelKind
    doses, means : sequence of float
        One point per arm; doses must include 0.
    anchors : ModelAnchors, optional
        Defaults to :meth:`ModelAnchors.from_means` on ``means``.
    weights : sequence of float, optional
        Per-point weights (e.g. arm sizes); normalized to mean 1.

    Returns
    -------
    FitResult
        ``converged`` is False when no start reached the tolerance; the
        best values found are still returned.
    """
    kind = ModelKind(kind)
    d = np.asarray(doses, dtype=float)
    y = np.asarray(means, dtype=float)
    if d.shape != y.shape or d.ndim != 1:
        raise ValueError("doses and means must be 1-D and of equal length")
    if not np.any(d == 0):
        raise ValueError("doses must include placebo (0)")
    k = y.size
    if k < kind.n_params:
        raise ValueError(f"{kind.value} has {kind.n_params} parameters but only {k} points")
    anchors = anchors or ModelAnchors.from_means(y)
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=float) / np.mean(weights)

    def rss(z: np.ndarray) -> float:
        p = _to_natural(kind, z)
        if kind is ModelKind.EXPONENTIAL and abs(p[1]) < 1e-8:
            return math.inf
        r = y - _curve(kind, anchors, p, d)
        val = float(np.sum(w * r * r))
        return val if math.isfinite(val) else math.inf

    best = None
    for start in _start_grid(kind, d, y, anchors):
        res = minimize(
            rss,
            start,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": MAX_ITER, "maxfev": 4 * MAX_ITER},
        )
        if not math.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res

    if best is None:
        nan_params = {n: math.nan for n in kind.param_names}
        return FitResult(kind, nan_params, math.nan, -math.inf, math.inf, False, anchors, math.inf, k, False, weights is not None)

    p = _to_natural(kind, best.x)
    rss_val = float(best.fun)
    sigma2 = rss_val / k
    reliable = math.sqrt(sigma2) > SIGMA_FLOOR
    sigma = max(math.sqrt(sigma2), SIGMA_FLOOR)
    loglik = -0.5 * k * math.log(2 * math.pi * sigma * sigma) - rss_val / (2 * sigma * sigma)
    aic = -2.0 * loglik + 2.0 * kind.n_params
    return FitResult(
        kind=kind,
        params={n: float(v) for n, v in zip(kind.param_names, p)},
        sigma=sigma,
        log_likelihood=loglik,
        aic=aic,
        converged=bool(best.success),
        anchors=anchors,
        rss=rss_val,
        n_points=k,
        aic_reliable=reliable,
        weighted=weights is not None,
    )


def fit_all(
    doses: Sequence[float],
    means: Sequence[float],
    anchors: ModelAnchors | None = None,
    kinds: Sequence[ModelKind] = tuple(ModelKind),
    weights: Sequence[float] | None = None,
) -> list[FitResult]:
    anchors = anchors or ModelAnchors.from_means(means)
    return [fit_model(kind, doses, means, anchors, weights) for kind in kinds]


def select_best(fits: Sequence[FitResult]) -> FitResult:
    """Minimum-AIC converged fit; ties go to fewer parameters, then model order."""
    ok = [f for f in fits if f.converged]
    if not ok:
        raise ValueError("no converged fits to choose from")
    return min(ok, key=lambda f: (f.aic, f.n_params, _ORDER[f.kind]))


def recommend_dose(
    fit: FitResult,
    criterion: Criterion,
    delta: float,
    dose_range: tuple[float, float],
    direction: Direction = Direction.INCREASING,
    resolution: float = 1e-4,
) -> float | None:
    """Smallest dose whose predicted response meets the clinical threshold.

    ``placebo``: the predicted difference from placebo reaches ``|delta|``
    in the improvement direction. ``baseline``: the predicted response
    itself crosses ``delta``. The dose range is scanned on a grid of
    ``resolution * d_max`` and the first crossing refined by bisection.
    Returns None when the threshold is never reached.
    """
    criterion = Criterion(criterion)
    sign = Direction(direction).sign
    lo, hi = map(float, dose_range)
    placebo = fit.predict(0.0)

    if criterion is Criterion.DIFF_FROM_PLACEBO:
        target = abs(delta)

        def score(x):
            return sign * (fit.predict(x) - placebo) - target
    else:

        def score(x):
            return sign * (fit.predict(x) - delta)

    n_steps = max(1, int(round(1.0 / resolution)))
    grid = np.linspace(lo, hi, n_steps + 1)
    met = np.asarray(score(grid)) >= 0
    if not met.any():
        return None
    i = int(np.argmax(met))
    if i == 0:
        return float(grid[0])
    a, b = float(grid[i - 1]), float(grid[i])
    for _ in range(100):
        mid = 0.5 * (a + b)
        if score(mid) >= 0:
            b = mid
        else:
            a = mid
        if b - a < 1e-12 * max(1.0, hi):
            break
    return b
