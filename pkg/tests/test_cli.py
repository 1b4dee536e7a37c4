from __future__ import annotations

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from spdc_lab import io
from spdc_lab.cli import EXIT_OK, EXIT_USAGE, main


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_phasematch_table(tmp_path, cfg, t_cal):
    code, out = run(tmp_path, "phasematch", "--temp-range", f"{t_cal - 10},{t_cal + 10}", "--step", "0.5")
    assert code == EXIT_OK
    cols, meta = io.read_csv(out / "phasematch.csv")
    assert len(cols["temperature"]) == 41
    assert meta["config_hash"] == cfg.hash and meta["seed"] == str(cfg.seed)
    lam = np.array(cols["lambda_cpm"])
    assert np.all(np.diff(lam) < 0)  # signal shortens as the crystal heats
    k = cols["temperature"].index(t_cal)
    assert abs(cols["tuning_slope"][k]) == pytest.approx(150.0, rel=0.3)
    assert np.all(np.abs(np.array(cols["pm_bandwidth"]) - 150.0) <= 45.0)
    assert set(cols["error"]) == {""}
    assert "# units: temperature[C],lambda_cpm[nm]" in (out / "phasematch.csv").read_text()


def test_phasematch_out_of_range_rows_are_flagged(tmp_path):
    code, out = run(tmp_path, "phasematch", "--temp-range", "240,260", "--step", "5")
    assert code == 3
    cols, _ = io.read_csv(out / "phasematch.csv")
    assert any(e for e in cols["error"])


def test_rings_empty_list(tmp_path, capsys):
    code, out = run(tmp_path, "rings", "--temps", "")
    assert code == EXIT_OK
    assert list(out.iterdir()) == []
    assert "nothing written" in capsys.readouterr().err


def test_rings_progression(tmp_path, t_cal):
    temps = [t_cal - 6, t_cal - 3, t_cal]
    code, out = run(tmp_path, "rings", "--temps", ",".join(map(str, temps)))
    assert code == EXIT_OK
    cols, _ = io.read_csv(out / "rings.csv")
    r = cols["ring_radius_y"]
    assert r[0] > r[1] > r[2] == 0.0
    assert r[0] == pytest.approx(cols["emission_angle"][0], rel=0.02)
    mat, header = io.read_matrix(out / f"ring_{temps[0]:.2f}C.txt")
    assert mat.shape == (201, 201) and header["seed"] is not None


def test_artifacts_are_byte_identical(tmp_path):
    args = ["budget", "--duration", "0.2"]
    _, a = run(tmp_path, *args, "--seed", "5", name="a")
    _, b = run(tmp_path, *args, "--seed", "5", name="b")
    files = sorted(p.name for p in a.iterdir())
    assert "timetags_narrowband.bin" in files and "budget.json" in files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    _, c = run(tmp_path, *args, "--seed", "6", name="c")
    assert (a / "timetags_narrowband.bin").read_bytes() != (c / "timetags_narrowband.bin").read_bytes()


def test_fringe_artifacts_repeat(tmp_path):
    args = ["fringe", "--sweep", "0,12.566,41", "--bin-ms", "20"]
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    for f in ("fringe.csv", "fringe.json", "fringe_summary.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("SPDC_LAB_SEED", "77")
    _, out = run(tmp_path, "budget", "--duration", "0.1", name="env")
    assert json.loads((out / "budget.json").read_text())["seed"] == 77
    _, out = run(tmp_path, "budget", "--duration", "0.1", "--seed", "3", name="flag")
    assert json.loads((out / "budget.json").read_text())["seed"] == 3
    monkeypatch.setenv("SPDC_LAB_SEED", "x")
    assert run(tmp_path, "budget", name="bad")[0] == EXIT_USAGE


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 1}))
    assert run(tmp_path, "phasematch", "--config", str(bad))[0] == EXIT_USAGE
    assert run(tmp_path, "chsh", "--angles", "0,1")[0] == EXIT_USAGE


def test_chsh_ideal(tmp_path):
    code, out = run(tmp_path, "chsh", "--ideal")
    assert code == EXIT_OK
    res = json.loads((out / "chsh_ideal.json").read_text())
    assert res["S"] == pytest.approx(2 * math.sqrt(2), abs=0.01)


def test_chsh_default_config(tmp_path, cfg):
    code, out = run(tmp_path, "chsh")
    assert code == EXIT_OK
    res = json.loads((out / "chsh.json").read_text())
    assert res["S"] == pytest.approx(2.606, abs=0.03)
    assert res["sigma_S"] == pytest.approx(0.010, rel=0.1)
    assert res["config_hash"] == cfg.hash


def test_bandwidth_default_config(tmp_path):
    code, out = run(tmp_path, "bandwidth")
    assert code == EXIT_OK
    fit = json.loads((out / "bandwidth_fit.json").read_text())
    assert fit["bandwidth_ghz"] == pytest.approx(50.0, rel=0.05)
    assert fit["fwhm_mm"] == pytest.approx(3.4, rel=0.05)
    assert (out / "bandwidth.csv").exists()


def test_polscan_analytic(tmp_path):
    code, out = run(tmp_path, "polscan", "--analytic", "--theta-s", "0,-pi/4")
    assert code == EXIT_OK
    scans = json.loads((out / "polscan_summary.json").read_text())["scans"]
    assert len(scans) == 4
    assert scans[0]["visibility"] == pytest.approx(0.94, abs=0.01)


def test_budget_report_contents(tmp_path):
    code, out = run(tmp_path, "budget", "--duration", "0.5")
    assert code == EXIT_OK
    rep = json.loads((out / "budget.json").read_text())["reports"]
    assert rep["narrowband"]["per_mw"]["coincidences"] == pytest.approx(450.0, rel=1e-3)
    assert rep["no_filter"]["per_mw"]["inferred_pair_flux"] == pytest.approx(16000.0, rel=1e-3)
    (s, i), header = io.read_timetags(out / "timetags_narrowband.bin")
    assert header["duration_s"] == 0.5 and len(s) > 0


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "spdc_lab.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "phasematch" in r.stdout
