import csv
import json
from pathlib import Path

import numpy as np
import pytest

from nhvi import cli
from nhvi.core import ExtendedPair, ExtendedPoint
from nhvi.errors import NHVIError
from nhvi.reference import builtin_systems
from nhvi.stepper import pair_diagnostics

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_simulate_particle_rows(tmp_path):
    out = tmp_path / "p.csv"
    assert run("simulate", "--config", CONFIGS / "nonholonomic_particle.json", "--out", out) == 0
    header, rows = read_csv(out)
    assert len(rows) == 102
    assert header[:5] == ["k", "t", "q_1", "q_2", "q_3"]
    assert header[5] == "lambda_1"
    assert header[-2:] == ["newton_iters", "residual"]
    assert [int(r[0]) for r in rows] == list(range(102))


def test_simulate_backwards_pair_is_config_error(tmp_path, capsys):
    out = tmp_path / "bad.csv"
    assert run("simulate", "--config", CONFIGS / "bad_initial_pair.json", "--out", out) == 1
    assert "initial.t1" in capsys.readouterr().err


def test_malformed_config_names_field(tmp_path, capsys):
    cfg = write_config(tmp_path, {"system": {"name": "harmonic_oscillator"}, "run": {}})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x.csv") == 1
    assert "run.steps" in capsys.readouterr().err


def test_time_collapse_truncates_csv(tmp_path, capsys):
    out = tmp_path / "collapse.csv"
    assert run("simulate", "--config", CONFIGS / "forced_time_collapse.json", "--out", out) == 2
    assert "error" in capsys.readouterr().err
    _, rows = read_csv(out)
    assert 2 <= len(rows) < 102


def test_check_disk_all_pass(capsys):
    assert run("check", "--config", CONFIGS / "rolling_disk.json", "--properties", "all") == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text
    assert "chaplygin-projection" in text


def test_check_forced_energy_fails(tmp_path, capsys):
    doc = json.loads((CONFIGS / "forced_oscillator.json").read_text())
    doc["run"]["steps"] = 100
    cfg = write_config(tmp_path, doc)
    assert run("check", "--config", cfg, "--properties", "energy") != 0
    text = capsys.readouterr().out
    assert "FAIL" in text and "nonautonomous" in text


def test_check_particle_chaplygin_skipped(capsys):
    assert run("check", "--config", CONFIGS / "nonholonomic_particle.json", "--properties", "chaplygin-projection") == 0
    assert "SKIP" in capsys.readouterr().out


def test_check_unknown_property():
    assert run("check", "--config", CONFIGS / "rolling_disk.json", "--properties", "entropy") == 1


@pytest.mark.parametrize("name", ["harmonic_oscillator", "nonholonomic_particle"])
def test_compare_slope(tmp_path, capsys, name):
    out = tmp_path / "conv.csv"
    assert run("compare", "--config", CONFIGS / f"{name}.json", "--out", out) == 0
    slope = float(capsys.readouterr().out.split("slope=")[1].split()[0])
    assert 1.8 <= slope <= 2.2
    header, rows = read_csv(out)
    assert header == ["h", "error"] and len(rows) == 4


def test_compare_single_rung(tmp_path):
    doc = json.loads((CONFIGS / "harmonic_oscillator.json").read_text())
    doc["compare"]["ladder"] = [0.1]
    assert run("compare", "--config", write_config(tmp_path, doc), "--out", tmp_path / "c.csv") == 1


def test_compare_oracle_failure(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise NHVIError("step size underflow")

    monkeypatch.setattr(cli, "solve_reference", broken)
    out = tmp_path / "c.csv"
    assert run("compare", "--config", CONFIGS / "harmonic_oscillator.json", "--out", out) == 3


def test_simulate_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("NHVI_SEED", "7")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("simulate", "--config", CONFIGS / "rolling_disk.json", "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_csv_diagnostics_round_trip(tmp_path):
    out = tmp_path / "p.csv"
    assert run("simulate", "--config", CONFIGS / "nonholonomic_particle.json", "--out", out) == 0
    header, rows = read_csv(out)
    entry = builtin_systems()["nonholonomic_particle"]
    col = {h: i for i, h in enumerate(header)}
    pts = [ExtendedPoint(float(r[1]), [float(r[col[f"q_{i}"]]) for i in (1, 2, 3)]) for r in rows]
    worst = 0.0
    for k in range(len(pts) - 1):
        d = pair_diagnostics(entry.system, ExtendedPair(pts[k], pts[k + 1]), entry.sections)
        stored = [float(rows[k][col[c]]) for c in ("E_plus", "E_minus", "constraint_res", "momentum_1")]
        worst = max(worst, np.max(np.abs(np.array(stored) - [d.e_plus, d.e_minus, d.constraint_residual, d.momentum[0]])))
    assert worst <= 1e-14
