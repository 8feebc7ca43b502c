"""Monte-Carlo power and type-I error of the adaptive contrast test.

Sample sizes are per arm: ``N = 100`` means 100 subjects in each of the
five arms.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _rng
from .contrast import ConstraintSpec, Direction
from .contrast import compute_coefficients
from .permutation import PermutationConfig, adaptive_test_groups, fixed_contrast_pvalue

DEFAULT_DOSES = (0.0, 0.05, 0.2, 0.6, 1.0)
DEFAULT_SD = 1.5

# Table of true arm means for the eleven reference scenarios.
_TRUE_MEANS = {
    "Scenario1": (0.2, 0.2, 0.2, 0.2, 0.2),
    "Scenario2": (0.2, 0.23, 0.32, 0.56, 0.8),
    "Scenario3": (0.2, 0.275, 0.432, 0.664, 0.8),
    "Scenario4": (0.2, 0.34, 0.55, 0.725, 0.783),
    "Scenario5": (0.2, 0.201, 0.206, 0.226, 0.264),
    "Scenario6": (0.2, 0.298, 0.54, 0.8, 0.5),
    "Scenario7": (0.271, 0.289, 0.362, 0.631, 0.767),
    "Scenario8": (0.2, 0.4, 0.6, 0.6, 0.8),
    "Scenario9": (0.2, 0.4, 0.6, 0.6, 0.6),
    "Scenario10": (0.2, 0.6, 0.6, 0.6, 0.6),
    "Scenario11": (0.2, 0.6, 0.6, 0.8, 0.8),
}

_GENERATING_MODEL = {
    "Scenario1": "constant",
    "Scenario2": "linear",
    "Scenario3": "linlog",
    "Scenario4": "emax",
    "Scenario5": "exponential",
    "Scenario6": "quadratic",
    "Scenario7": "logistic",
}

VARIANTS = {
    "umbrella": ConstraintSpec(Direction.INCREASING, umbrella=True),
    "full": ConstraintSpec(Direction.INCREASING, umbrella=False),
}


@dataclass(frozen=True)
class Scenario:
    name: str
    true_means: tuple[float, ...]
    sd: float = DEFAULT_SD
    doses: tuple[float, ...] = DEFAULT_DOSES

    def __post_init__(self):
        object.__setattr__(self, "true_means", tuple(float(m) for m in self.true_means))
        object.__setattr__(self, "doses", tuple(float(d) for d in self.doses))
        if len(self.true_means) != len(self.doses):
            raise ValueError(f"{self.name}: {len(self.true_means)} means for {len(self.doses)} doses")
        if self.doses[0] != 0 or any(b <= a for a, b in zip(self.doses, self.doses[1:])):
            raise ValueError(f"{self.name}: doses must start at 0 and increase strictly")
        if not self.sd > 0:
            raise ValueError(f"{self.name}: sd must be positive")


@dataclass(frozen=True)
class SimConfig:
    n_per_arm: int = 100
    n_sim: int = 2000
    n_perm: int = 5000
    alpha: float = 0.025
    constraint: ConstraintSpec = field(default_factory=lambda: VARIANTS["umbrella"])
    seed: int = 100
    coefficients: str = "readapt"

    def __post_init__(self):
        if self.coefficients not in COEFFICIENT_MODES:
            raise ValueError(f"coefficients must be one of {COEFFICIENT_MODES}")


# readapt: coefficients re-derived in every permutation (valid permutation test)
# frozen:  observed coefficients held fixed within each data set
# shared:  one contrast, taken from the last replicate, used for every replicate
COEFFICIENT_MODES = ("readapt", "frozen", "shared")


@dataclass(frozen=True)
class PowerResult:
    scenario: str
    rejections: int
    n_sim: int
    power: float
    mc_se: float
    constraint_variant: str = ""
    n_per_arm: int = 0
    n_perm: int = 0
    alpha: float = 0.0
    seed: int = 0

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "constraint_variant": self.constraint_variant,
            "N": self.n_per_arm,
            "n_sim": self.n_sim,
            "n_perm": self.n_perm,
            "alpha": self.alpha,
            "power": self.power,
            "mc_se": self.mc_se,
            "seed": self.seed,
        }


REPORT_COLUMNS = ("scenario", "constraint_variant", "N", "n_sim", "n_perm", "alpha", "power", "mc_se", "seed")


def builtin_scenarios() -> list[Scenario]:
    return [Scenario(name, means) for name, means in _TRUE_MEANS.items()]


def scenario_by_name(name: str) -> Scenario:
    key = name.replace(" ", "").lower()
    for s in builtin_scenarios():
        if s.name.lower() == key:
            return s
    raise KeyError(f"unknown scenario {name!r}")


def model_means(model: str, doses: Sequence[float] = DEFAULT_DOSES) -> np.ndarray:
    """Evaluate the scenario-generating dose-response formulas.

    The exponential and logistic rows use base-10 logarithms; only that
    reading reproduces the tabulated true means.
    """
    d = np.asarray(doses, dtype=float)
    log10 = math.log10
    if model == "constant":
        return np.full_like(d, 0.2)
    if model == "linear":
        return 0.2 + 0.6 * d
    if model == "linlog":
        return 0.2 + 0.6 * np.log(5 * d + 1) / math.log(6)
    if model == "emax":
        return 0.2 + 0.7 * d / (0.2 + d)
    if model == "exponential":
        return 0.183 + 0.017 * np.exp(2 * d * log10(6))
    if model == "quadratic":
        return 0.2 + 2.049 * d - 1.749 * d**2
    if model == "logistic":
        return 0.193 + 0.607 / (1 + np.exp(10 * log10(3) * (0.4 - d)))
    raise KeyError(f"unknown model {model!r}")


def generating_model(name: str) -> str | None:
    return _GENERATING_MODEL.get(name)


def simulate_data(scenario: Scenario, config: SimConfig, replicate: int) -> tuple[list[np.ndarray], int]:
    """Responses per arm for one replicate, plus its permutation seed."""
    gen = _rng.replicate_generator(config.seed, replicate)
    z = gen.standard_normal((len(scenario.true_means), config.n_per_arm))
    groups = [m + scenario.sd * z[i] for i, m in enumerate(scenario.true_means)]
    return groups, int(gen.integers(0, 2**63, dtype=np.int64))


def simulate_replicate(
    scenario: Scenario, config: SimConfig, replicate: int, shared=None
) -> tuple[float, float]:
    """Run one simulated trial; returns ``(p_value, T)``."""
    groups, perm_seed = simulate_data(scenario, config, replicate)
    perm = PermutationConfig(config.n_perm, perm_seed, recompute_coefficients=config.coefficients == "readapt")
    if config.coefficients == "shared":
        if shared is None:
            shared = _shared_contrast(scenario, config)
        return fixed_contrast_pvalue(groups, shared, perm)
    out = adaptive_test_groups(groups, config.constraint, perm)
    return out.p_value, out.observed_t


def _shared_contrast(scenario: Scenario, config: SimConfig):
    groups, _ = simulate_data(scenario, config, config.n_sim - 1)
    return compute_coefficients([g.mean() for g in groups], config.constraint)


def simulate_power(scenario: Scenario, config: SimConfig) -> PowerResult:
    """Rejection rate ``#{p < alpha} / n_sim``.

    Replicate ``s`` draws its data and its permutation key from a Philox
    stream keyed by ``(seed, s)``, so counts do not depend on scheduling.
    """
    if config.n_per_arm < 2:
        raise ValueError("need at least 2 subjects per arm")
    shared = _shared_contrast(scenario, config) if config.coefficients == "shared" else None
    rejections = 0
    for s in range(config.n_sim):
        p, _ = simulate_replicate(scenario, config, s, shared)
        rejections += p < config.alpha
    power = rejections / config.n_sim
    return PowerResult(
        scenario=scenario.name,
        rejections=int(rejections),
        n_sim=config.n_sim,
        power=power,
        mc_se=math.sqrt(power * (1 - power) / config.n_sim),
        constraint_variant=_variant_name(config.constraint),
        n_per_arm=config.n_per_arm,
        n_perm=config.n_perm,
        alpha=config.alpha,
        seed=config.seed,
    )


def _variant_name(constraint: ConstraintSpec) -> str:
    for name, spec in VARIANTS.items():
        if spec == constraint:
            return name
    return f"{constraint.direction.value}-{constraint.label}"


def power_table(
    scenarios: Iterable[Scenario],
    sample_sizes: Sequence[int] = (50, 75, 100),
    variants: Sequence[str] = ("umbrella", "full"),
    n_sim: int = 2000,
    n_perm: int = 5000,
    alpha: float = 0.025,
    seed: int = 100,
    coefficients: str = "readapt",
    progress=None,
) -> list[PowerResult]:
    """Power over scenarios x per-arm sample sizes x constraint variants.

    Every cell uses the same base seed (common random numbers across cells).
    """
    results = []
    for scenario in scenarios:
        for variant in variants:
            for n in sample_sizes:
                cfg = SimConfig(n, n_sim, n_perm, alpha, VARIANTS[variant], seed, coefficients)
                res = simulate_power(scenario, cfg)
                results.append(res)
                if progress is not None:
                    progress(res)
    return results


def report_csv(results: Sequence[PowerResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


def report_json(results: Sequence[PowerResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=2, sort_keys=True) + "\n"


def read_report_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def load_scenarios(path: str | Path) -> list[Scenario]:
    """Custom scenarios from JSON (list of objects) or CSV.

    CSV columns: ``name``, optional ``sd``, optional ``doses``
    (``;``-separated), then one ``mean1..meanK`` column per arm; doses
    default to the reference design.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        items = json.loads(text)
        return [
            Scenario(
                it["name"],
                tuple(it["true_means"]),
                float(it.get("sd", DEFAULT_SD)),
                tuple(it.get("doses", DEFAULT_DOSES)),
            )
            for it in items
        ]
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        mean_cols = sorted((c for c in row if c.startswith("mean")), key=lambda c: int(c[4:]))
        means = tuple(float(row[c]) for c in mean_cols)
        sd = float(row["sd"]) if row.get("sd") else DEFAULT_SD
        doses = tuple(float(v) for v in row["doses"].split(";")) if row.get("doses") else DEFAULT_DOSES
        out.append(Scenario(row["name"], means, sd, doses))
    return out
