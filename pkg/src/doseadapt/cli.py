"""Command line interface: ``doseadapt analyze | power | plot-data``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import configure_threads
from .contrast import ConstraintSpec, Direction, compute_coefficients, contrast_statistic, t_reference_quantiles
from .data import DataError, StudySummaries, load_csv, load_summary_csv, summarize
from .models import AnchorConvention, Criterion, ModelAnchors, fit_all, recommend_dose, select_best
from .permutation import Alternative, PermutationConfig, permutation_pvalue
from .simulation import (
    COEFFICIENT_MODES,
    builtin_scenarios,
    load_scenarios,
    power_table,
    read_report_csv,
    report_csv,
    report_json,
    scenario_by_name,
)

EXIT_INPUT = 2
EXIT_NO_FIT = 3
GRID_POINTS = 101


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _clean(obj):
    """Replace non-finite floats by None so the report is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def build_report(args) -> tuple[dict, int]:
    constraint = ConstraintSpec(Direction(args.direction), umbrella=args.umbrella)
    records = None
    try:
        if args.summary:
            summaries = StudySummaries.from_arms(load_summary_csv(args.input), s2=args.pooled_variance)
        else:
            records = load_csv(args.input)
            summaries = summarize(records)
            if args.pooled_variance is not None:
                summaries = StudySummaries.from_arms(summaries.arms, s2=args.pooled_variance)
    except (OSError, DataError) as exc:
        raise CliError(str(exc)) from exc

    contrast = compute_coefficients(summaries.means, constraint, rounding=args.round)
    try:
        stat = contrast_statistic(contrast, summaries)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    dof = int(summaries.sizes.sum()) - summaries.k
    report: dict = {
        "tool": {"name": "doseadapt", "version": __version__},
        "input": {"path": str(args.input), "level": "summary" if args.summary else "subject"},
        "constraint": {"direction": constraint.direction.value, "umbrella": constraint.umbrella},
        "rounding": args.round,
        "alpha": args.alpha,
        "seed": args.seed,
        "summaries": {
            "arms": [{"dose": a.dose, "n": a.n, "mean": a.mean, "sd": a.sd} for a in summaries.arms],
            "pooled_variance": summaries.pooled_variance,
        },
        "contrast": {"coefficients": list(contrast.coefficients), "degenerate": contrast.degenerate},
        "t_value": stat.t_value,
        "numerator": stat.numerator,
        "variance_term": stat.variance_term,
        "t_reference": {"df": dof, "upper_quantiles": {str(k): v for k, v in t_reference_quantiles(dof).items()}},
    }

    perm_cfg = PermutationConfig(
        n_permutations=args.permutations,
        seed=args.seed,
        alternative=Alternative.UPPER,
        add_one_correction=args.add_one,
        recompute_coefficients=not args.frozen_coefficients,
    )
    p_value = None
    if records is None:
        report["permutation"] = None
        report["notes"] = ["permutation requires subject-level data; p-value omitted"]
    else:
        outcome = permutation_pvalue(records, constraint, perm_cfg, rounding=args.round)
        p_value = outcome.p_value
        report["permutation"] = {
            "n_permutations": outcome.n_permutations,
            "seed": perm_cfg.seed,
            "alternative": perm_cfg.alternative.value,
            "add_one_correction": perm_cfg.add_one_correction,
            "recompute_coefficients": perm_cfg.recompute_coefficients,
            "exceed_count": outcome.exceed_count,
            "p_value": outcome.p_value,
        }
    report["p_value"] = p_value
    report["significant"] = None if p_value is None else p_value < args.alpha

    code = 0
    fit_wanted = args.always_fit or (p_value is not None and p_value < args.alpha)
    if fit_wanted:
        code = _add_models(report, summaries, constraint, args)
    else:
        report["models"] = None
    return report, code


def _add_models(report: dict, summaries: StudySummaries, constraint: ConstraintSpec, args) -> int:
    doses, means = summaries.doses, summaries.means
    anchors = ModelAnchors.from_means(means, constraint.direction, AnchorConvention(args.anchoring))
    weights = summaries.sizes if args.weighted else None
    fits = fit_all(doses, means, anchors, weights=weights)
    d_max = float(doses.max())
    section = {
        "anchoring": args.anchoring,
        "weighted": args.weighted,
        "dose_max": d_max,
        "fits": [f.to_dict(d_max, GRID_POINTS) for f in fits],
        "best": None,
    }
    report["models"] = section
    report["recommended_doses"] = {}
    try:
        best = select_best(fits)
    except ValueError:
        return EXIT_NO_FIT
    section["best"] = best.kind.value
    for crit, delta in ((Criterion.DIFF_FROM_PLACEBO, args.delta_placebo), (Criterion.CHANGE_FROM_BASELINE, args.delta_baseline)):
        if delta is None:
            continue
        dose = recommend_dose(best, crit, delta, (0.0, d_max), constraint.direction)
        report["recommended_doses"][crit.value] = {"delta": delta, "dose": dose}
    return 0


def cmd_analyze(args) -> int:
    report, code = build_report(args)
    _emit(dump_json(report), args.out)
    return code


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------


def _scenarios(spec: str):
    if spec.lower() == "all":
        return builtin_scenarios()
    if Path(spec).is_file():
        try:
            return load_scenarios(spec)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise CliError(f"{spec}: {exc}") from exc
    try:
        return [scenario_by_name(s) for s in spec.split(",")]
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from exc


def cmd_power(args) -> int:
    scenarios = _scenarios(args.scenario)
    try:
        sizes = [int(v) for v in args.n.split(",")]
    except ValueError as exc:
        raise CliError(f"--n: {exc}") from exc
    variants = ["umbrella", "full"] if args.constraint == "both" else [args.constraint]

    def progress(r):
        if args.verbose:
            print(f"{r.scenario} {r.constraint_variant} N={r.n_per_arm}: {r.power:.4f}", file=sys.stderr)

    results = power_table(
        scenarios,
        sizes,
        variants,
        n_sim=args.nsim,
        n_perm=args.nperm,
        alpha=args.alpha,
        seed=args.seed,
        coefficients=args.coefficients,
        progress=progress,
    )
    text = report_json(results) if args.format == "json" else report_csv(results)
    _emit(text, args.out)
    return 0


# ---------------------------------------------------------------------------
# plot-data
# ---------------------------------------------------------------------------


def curves_csv(report: dict) -> str:
    models = report.get("models")
    if not models or not models.get("fits"):
        raise CliError("report has no model fit section (rerun analyze with --always-fit)")
    fits = models["fits"]
    kinds = [f["kind"] for f in fits]
    grid = fits[0]["curve"]["dose"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dose", "row", "observed", *kinds])
    for i, d in enumerate(grid):
        w.writerow([d, "grid", "", *[f["curve"]["mean"][i] for f in fits]])
    for arm in report["summaries"]["arms"]:
        w.writerow([arm["dose"], "observed", arm["mean"], *[""] * len(kinds)])
    return buf.getvalue()


def power_matrix_csv(rows: list[dict]) -> str:
    sizes = sorted({int(r["N"]) for r in rows})
    cells: dict[tuple[str, str], dict[int, str]] = {}
    for r in rows:
        cells.setdefault((r["scenario"], r["constraint_variant"]), {})[int(r["N"])] = r["power"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "constraint_variant", *sizes])
    for (scenario, variant), by_n in cells.items():
        w.writerow([scenario, variant, *[by_n.get(n, "") for n in sizes]])
    return buf.getvalue()


def cmd_plot_data(args) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise CliError(f"{path}: no such file")
    if args.what == "curves":
        try:
            report = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: not a JSON report ({exc})") from exc
        text = curves_csv(report)
    else:
        if path.suffix.lower() == ".json":
            rows = [
                {"scenario": r["scenario"], "constraint_variant": r["constraint_variant"], "N": r["n_per_arm"], "power": r["power"]}
                for r in json.loads(path.read_text(encoding="utf-8"))
            ]
        else:
            rows = read_report_csv(path)
        if not rows or "power" not in rows[0]:
            raise CliError(f"{path}: not a power report")
        text = power_matrix_csv(rows)
    _emit(text, args.out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doseadapt", description="Adaptive contrast test for dose-response studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $DOSEADAPT_THREADS or all)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    a = sub.add_parser("analyze", help="contrast test, permutation p-value, model fit, recommended dose")
    a.add_argument("input", help="CSV with dose,response (or dose,n,mean,sd with --summary)")
    a.add_argument("--summary", action="store_true", help="input holds per-arm summaries")
    a.add_argument("--direction", choices=[d.value for d in Direction], default="increasing")
    a.add_argument("--umbrella", action="store_true", help="leave the top-dose coefficient unconstrained")
    a.add_argument("--permutations", "-B", type=int, default=10000)
    a.add_argument("--seed", type=int, default=2021)
    a.add_argument("--alpha", type=float, default=0.025)
    a.add_argument("--round", dest="round", action="store_true", default=True, help="round means to 1e-5 for coefficients (default)")
    a.add_argument("--no-round", dest="round", action="store_false")
    a.add_argument("--add-one", action="store_true", help="use (count+1)/(B+1)")
    a.add_argument("--frozen-coefficients", action="store_true", help="hold observed coefficients fixed across permutations")
    a.add_argument("--pooled-variance", type=float, default=None, help="override S^2 (e.g. a published value)")
    a.add_argument("--always-fit", action="store_true", help="fit models even without a significant test")
    a.add_argument("--anchoring", choices=[c.value for c in AnchorConvention], default="difference")
    a.add_argument("--weighted", action="store_true", help="weight model fits by arm size")
    a.add_argument("--delta-placebo", type=float, default=None, help="clinically meaningful difference from placebo")
    a.add_argument("--delta-baseline", type=float, default=None, help="clinically meaningful change from baseline")
    a.add_argument("--out", "-o", default=None)
    a.set_defaults(func=cmd_analyze)

    p = sub.add_parser("power", help="Monte-Carlo power / type-I error table")
    p.add_argument("--scenario", default="all", help="'all', comma-separated names, or a CSV/JSON file")
    p.add_argument("--n", default="50,75,100", help="comma-separated per-arm sample sizes")
    p.add_argument("--nsim", type=int, default=2000)
    p.add_argument("--nperm", type=int, default=5000)
    p.add_argument("--seed", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.025)
    p.add_argument("--constraint", choices=["umbrella", "full", "both"], default="both")
    p.add_argument("--coefficients", choices=COEFFICIENT_MODES, default="readapt")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", "-o", default=None)
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_power)

    d = sub.add_parser("plot-data", help="emit CSV for dose-response or power plots")
    d.add_argument("input", help="analyze JSON report or power report")
    d.add_argument("--what", choices=["curves", "power"], default="curves")
    d.add_argument("--out", "-o", default=None)
    d.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_threads(args.threads)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"doseadapt: error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"doseadapt: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
