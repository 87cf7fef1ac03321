from __future__ import annotations

import json
import subprocess
import sys

import pytest

from gwlife.cli import main
from models import SPECS


@pytest.fixture
def spec_file(tmp_path):
    def write(name: str):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(SPECS[name]))
        return str(path)

    return write


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_supercritical(spec_file, capsys):
    code, out, _ = run(["analyze", "--spec", spec_file("geometric_m2")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["spectral"]["rho"] == pytest.approx(1.5, abs=1e-12)
    assert doc["recurrence"]["class"] == "PositiveRecurrent"
    assert doc["extinction"]["q"] == pytest.approx(0.6180339887, abs=1e-10)
    assert doc["growth_constant"] == pytest.approx(1.0, abs=1e-10)
    assert doc["manifest"]["command"] == "analyze"


def test_analyze_one_season_subcritical(spec_file, capsys):
    code, out, _ = run(["analyze", "--spec", spec_file("one_season_half")], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["spectral"]["rho"] == pytest.approx(0.5, abs=1e-12)
    assert doc["extinction"]["q"] == 1 and doc["extinction"]["certain"] is True


def test_analyze_transient_reports_absent_invariants(spec_file, capsys):
    code, out, _ = run(["analyze", "--spec", spec_file("tilt_transient")], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["recurrence"]["class"] == "Transient"
    assert "absent" in doc["invariant_system"]
    assert "undefined" in doc["growth_constant"]


def test_output_is_byte_identical(spec_file, tmp_path, capsys):
    spec = spec_file("geometric_m2")
    texts = []
    for i in range(2):
        out = tmp_path / f"sim{i}.json"
        code, _, _ = run(["simulate", "--spec", spec, "--replicates", "200", "--horizon", "30",
                          "--seed", "5", "--generations", "0,10", "--out", str(out)], capsys)
        assert code == 0
        texts.append(out.read_text())
    # reports differ only in the recorded output path
    assert texts[0].replace("sim0", "simX") == texts[1].replace("sim1", "simX")
    manifest = json.loads((tmp_path / "sim0.json.manifest.json").read_text())
    assert "wall_clock_seconds" in manifest
    assert manifest["parameters"]["seed"] == 5


def test_single_replicate_reproducible(spec_file, capsys):
    argv = ["simulate", "--spec", spec_file("geometric_m2"), "--replicates", "1", "--seed", "3"]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_trajectory_csv(spec_file, tmp_path, capsys):
    csv_path = tmp_path / "traj.csv"
    code, _, _ = run(["simulate", "--spec", spec_file("geometric_m2"), "--replicates", "3",
                      "--horizon", "10", "--trajectory-csv", str(csv_path)], capsys)
    assert code == 0
    assert csv_path.read_text().startswith("generation,age,count\n0,0,1\n")


def test_truncate_csv(spec_file, capsys):
    code, out, _ = run(["truncate", "--spec", spec_file("geometric_m2"), "--k-max", "20"], capsys)
    rows = [line.split(",") for line in out.strip().split("\n")]
    assert code == 0
    assert rows[0] == ["k", "rho_k", "method"]
    scalar = [r for r in rows if r[2] == "scalar_root"]
    assert len(scalar) == 20
    assert abs(float(scalar[-1][1]) - 1.5) < 2e-3
    assert rows[-1][0] == "inf" and rows[-1][2] == "analytic"


def test_truncate_single_row_and_one_season(spec_file, capsys):
    _, out, _ = run(["truncate", "--spec", spec_file("geometric_m2"), "--k-max", "1"], capsys)
    assert "1,1,scalar_root" in out
    _, out, _ = run(["truncate", "--spec", spec_file("one_season_half"), "--k-max", "4"], capsys)
    values = {line.split(",")[1] for line in out.strip().split("\n")[1:]}
    assert values == {"0.5"}


def test_extinction_command(spec_file, capsys):
    code, out, _ = run(["extinction", "--spec", spec_file("geometric_m2")], capsys)
    doc = json.loads(out)
    assert code == 0
    assert set(doc) >= {"q", "certain", "residual", "iterations", "componentwise"}


def test_validate_passes_and_fails(spec_file, capsys):
    code, out, _ = run(["validate", "--spec", spec_file("geometric_m2")], capsys)
    assert code == 0 and json.loads(out)["passed"] is True
    # the slope bound at an interior subcritical root does not hold on this model
    code, out, _ = run(["validate", "--spec", spec_file("geometric_half")], capsys)
    failed = [c["name"] for c in json.loads(out)["checks"] if c["status"] == "fail"]
    assert code == 1 and failed == ["m_gprime_at_gamma_le_1"]


def test_missing_spec_exit_2(tmp_path, capsys):
    code, _, err = run(["analyze", "--spec", str(tmp_path / "nope.json")], capsys)
    assert code == 2 and "cannot read" in err


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        json.dumps({"offspring": {"kind": "poisson", "mean": 1}}),
        json.dumps({"offspring": {"kind": "poisson", "mean": -1}, "lifetime": {"kind": "geometric", "mean": 1}}),
        json.dumps({"offspring": {"kind": "poisson", "mean": 1}, "lifetime": {"kind": "geometric", "mean": 1},
                    "extra": 1}),
    ],
)
def test_invalid_spec_exit_2(tmp_path, capsys, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    code, _, err = run(["analyze", "--spec", str(path)], capsys)
    assert code == 2 and err


def test_bad_flags_exit_2(spec_file, capsys):
    spec = spec_file("geometric_m2")
    assert run(["truncate", "--spec", spec, "--k-max", "0"], capsys)[0] == 2
    assert run(["simulate", "--spec", spec, "--replicates", "0"], capsys)[0] == 2
    assert run(["simulate", "--spec", spec, "--generations", "500", "--horizon", "10"], capsys)[0] == 2
    assert run(["analyze", "--spec", spec, "--tol", "-1"], capsys)[0] == 2
    assert run(["bogus"], capsys)[0] == 2


def test_indeterminate_exit_3(tmp_path, capsys):
    path = tmp_path / "near.json"
    # m l exceeds 1 by less than the B(s) = s bracket can resolve
    path.write_text(json.dumps({"offspring": {"kind": "poisson", "mean": 1 + 1e-11},
                                "lifetime": {"kind": "geometric", "mean": 1}}))
    code, _, err = run(["analyze", "--spec", str(path)], capsys)
    assert code == 3 and "indeterminate" in err


def test_cap_exit_4(spec_file, capsys):
    code, _, err = run(["simulate", "--spec", spec_file("one_season_doubling"), "--replicates", "10",
                        "--horizon", "40", "--cap", "100"], capsys)
    assert code == 4 and "cap" in err


def test_console_entry_point(spec_file):
    proc = subprocess.run([sys.executable, "-m", "gwlife.cli", "analyze", "--spec", spec_file("geometric_m1")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["spectral"]["case"] == "Critical"
