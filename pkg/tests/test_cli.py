import csv
import io
import json

import pytest

from doseadapt import cli, datasets
from doseadapt.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def biom_report(tmp_path_factory):
    path = tmp_path_factory.mktemp("biom") / "report.json"
    code = main([
        "analyze", str(datasets.path("biom_reconstructed.csv")),
        "--direction", "increasing", "-B", "50000", "--anchoring", "raw", "-o", str(path),
    ])
    assert code == 0
    return path


def test_analyze_biom(biom_report):
    rep = json.loads(biom_report.read_text())
    assert rep["contrast"]["coefficients"] == pytest.approx([-0.354, -0.242, 0.111, 0.235, 0.250], abs=6e-4)
    assert rep["p_value"] <= 0.002 and rep["significant"]
    assert rep["models"]["best"] == "emax"
    assert rep["permutation"]["n_permutations"] == 50000
    # every number needed to redo T by hand is present
    c = rep["contrast"]["coefficients"]
    arms = rep["summaries"]["arms"]
    num = sum(ci * a["mean"] for ci, a in zip(c, arms))
    var = sum(ci * ci / a["n"] for ci, a in zip(c, arms)) * rep["summaries"]["pooled_variance"]
    assert rep["t_value"] == pytest.approx(num / var**0.5, rel=1e-9)


def test_report_round_trip_is_byte_identical(biom_report):
    text = biom_report.read_text()
    assert cli.dump_json(json.loads(text)) == text


def test_same_flags_same_file(tmp_path):
    src = str(datasets.path("biom_reconstructed.csv"))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["analyze", src, "-B", "500", "--seed", "9", "-o", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_constant_response(tmp_path, capsys):
    f = tmp_path / "flat.csv"
    f.write_text("dose,response\n" + "".join(f"{d},1.0\n" for d in (0, 0, 1, 1, 2, 2)))
    code, out, _ = run(capsys, "analyze", str(f), "-B", "200")
    rep = json.loads(out)
    assert code == 0 and rep["p_value"] == 1.0 and rep["models"] is None
    assert rep["t_value"] == 0.0


def test_evocalcet_summary(capsys):
    code, out, _ = run(
        capsys, "analyze", str(datasets.path("evocalcet_summary.csv")), "--summary",
        "--direction", "decreasing", "--pooled-variance", "773.17", "--always-fit",
        "--delta-placebo", "-10", "--delta-baseline", "-10",
    )
    rep = json.loads(out)
    assert code == 0
    assert rep["contrast"]["coefficients"] == pytest.approx([13.86, 0.02, -2.14, -11.74], abs=1e-9)
    assert rep["t_value"] == pytest.approx(3.482, abs=1e-3)
    assert rep["p_value"] is None and "subject-level" in rep["notes"][0]
    assert rep["models"]["best"] == "linlog"
    assert rep["recommended_doses"]["baseline"]["dose"] == pytest.approx(0.893, abs=2e-3)
    assert rep["recommended_doses"]["placebo"]["dose"] == pytest.approx(0.511, abs=2e-3)


def test_evocalcet_curves(tmp_path, capsys):
    rep = tmp_path / "evo.json"
    assert main(["analyze", str(datasets.path("evocalcet_summary.csv")), "--summary", "--direction", "decreasing", "--always-fit", "-o", str(rep)]) == 0
    code, out, _ = run(capsys, "plot-data", str(rep), "--what", "curves")
    rows = list(csv.DictReader(io.StringIO(out)))
    grid = [r for r in rows if r["row"] == "grid"]
    assert code == 0 and len(grid) == 101 and len(rows) == 105
    at_one = next(r for r in grid if float(r["dose"]) == 1.0)
    assert float(at_one["linlog"]) == pytest.approx(-11.34, abs=0.01)


def test_biom_curves_shape(biom_report, capsys):
    code, out, _ = run(capsys, "plot-data", str(biom_report))
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 1 + 101 + 5


def test_plot_data_without_fits(tmp_path, capsys):
    f = tmp_path / "flat.csv"
    f.write_text("dose,response\n" + "".join(f"{d},1.0\n" for d in (0, 0, 1, 1, 2, 2)))
    rep = tmp_path / "r.json"
    main(["analyze", str(f), "-B", "200", "-o", str(rep)])
    code, _, err = run(capsys, "plot-data", str(rep))
    assert code == 2 and "model fit" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "/nonexistent.csv"],
        ["power", "--scenario", "Scenario99", "--n", "5", "--nsim", "2", "--nperm", "100"],
        ["power", "--n", "five"],
        ["plot-data", "/nonexistent.json"],
    ],
)
def test_input_errors_exit_2(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("doseadapt: error:")


def test_bad_csv_exit_2(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("dose,response\n0,1\n1,x\n")
    code, _, err = run(capsys, "analyze", str(f))
    assert code == 2 and "x" in err


def test_no_converged_model_exit_3(monkeypatch, capsys):
    from doseadapt import models

    real = models.fit_all

    def broken(*a, **k):
        from dataclasses import replace
        return [replace(f, converged=False) for f in real(*a, **k)]

    monkeypatch.setattr(cli, "fit_all", broken)
    code, out, _ = run(capsys, "analyze", str(datasets.path("evocalcet_summary.csv")), "--summary", "--direction", "decreasing", "--always-fit")
    assert code == 3 and json.loads(out)["models"]["best"] is None


def test_power_rows_and_matrix(tmp_path, capsys):
    out = tmp_path / "p.csv"
    code = main(["power", "--scenario", "all", "--n", "5,6,7", "--nsim", "3", "--nperm", "100", "--constraint", "umbrella", "-o", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 33
    code, text, _ = run(capsys, "plot-data", str(out), "--what", "power")
    matrix = list(csv.reader(io.StringIO(text)))
    assert matrix[0] == ["scenario", "constraint_variant", "5", "6", "7"] and len(matrix) == 12


def test_power_from_scenario_file(tmp_path, capsys):
    f = tmp_path / "s.json"
    f.write_text(json.dumps([{"name": "a", "true_means": [0, 0, 0, 0, 1]}, {"name": "b", "true_means": [0, 1, 1, 1, 1]}]))
    code, out, _ = run(capsys, "power", "--scenario", str(f), "--n", "5,8", "--nsim", "3", "--nperm", "100", "--constraint", "full", "--format", "json")
    data = json.loads(out)
    assert code == 0 and len(data) == 4 and {d["scenario"] for d in data} == {"a", "b"}
