import csv
import subprocess
import sys

import numpy as np
import pytest

from lindblad_adiabatic.cli import find_windows, local_maxima, main, read_config
from lindblad_adiabatic.errors import ConfigError


def run(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out.read_text() if out.exists() else ""


def table(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(body))
    return rows, [ln[2:] for ln in text.splitlines() if ln.startswith("#")]


def test_spectrum_deutsch_fixture(tmp_path):
    code, text = run(tmp_path, "spectrum", "--model", "deutsch", "--gamma", "5", "--omega-d", "3",
                     "--tau", "1", "--samples", "5")
    assert code == 0
    rows, comments = table(text)
    assert comments[0].startswith("spectrum model=deutsch")
    for r in rows:
        vals = [float(r[f"re_l{k}"]) for k in range(4)]
        assert np.allclose(vals, [0, -10, -9, -1], atol=1e-9)
        assert float(r["min_gap"]) == pytest.approx(1.0)


def test_spectrum_lz_closed_system_is_imaginary(tmp_path):
    code, text = run(tmp_path, "spectrum", "--gamma", "0", "--samples", "4", "--tmax", "1e-4")
    assert code == 0
    rows, _ = table(text)
    for r in rows[1:]:
        assert max(abs(float(r[f"re_l{k}"])) for k in range(4)) < 1e-6
        assert abs(float(r["im_l2"])) > 6e6


def test_defective_point_exits_numeric(tmp_path):
    code, text = run(tmp_path, "spectrum", "--model", "deutsch", "--gamma", "3", "--omega-d", "3",
                     "--tau", "1", "--samples", "3")
    assert code == 3
    assert "# error: Defective" in text


@pytest.mark.parametrize("args", [
    ["evolve", "--model", "lz", "--omega-d", "5"],
    ["evolve", "--model", "deutsch", "--omega0", "5"],
    ["evolve", "--f0", "2", "--model", "deutsch"],
    ["evolve", "--samples", "ten"],
    ["evolve", "--model", "ising"],
    ["nonsense"],
    ["fig2", "--model", "deutsch"],
])
def test_configuration_errors_exit_2(tmp_path, args):
    assert main([*args, "--out", str(tmp_path / "x.csv")]) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# deutsch run\nmodel = deutsch\ngamma = 3141\nomega_d = 62831.853\n"
                   "tau=1e-3\nsamples = 3\n")
    code, from_file = run(tmp_path, "evolve", "--config", str(cfg), "--shots", "0", name="a.csv")
    code2, from_flags = run(tmp_path, "evolve", "--model", "deutsch", "--gamma", "3141",
                            "--omega-d", "62831.853", "--tau", "1e-3", "--samples", "3",
                            "--shots", "0", name="b.csv")
    assert code == code2 == 0
    assert from_file == from_flags
    code, over = run(tmp_path, "evolve", "--config", str(cfg), "--gamma", "0", "--shots", "0",
                     name="c.csv")
    assert "gamma=0 " in over.splitlines()[0]
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["evolve", "--config", str(bad)]) == 2
    bad.write_text("gamma = 1\ngamma = 2\n")
    with pytest.raises(ConfigError):
        read_config(bad)


def test_tomography_is_deterministic(tmp_path):
    args = ["tomo", "--model", "deutsch", "--samples", "3", "--repeats", "2", "--seed", "7"]
    _, a = run(tmp_path, *args, name="a.csv")
    _, b = run(tmp_path, *args, name="b.csv")
    _, c = run(tmp_path, *args[:-1], "8", name="c.csv")
    assert a == b and a != c
    rows, _ = table(a)
    assert len(rows) == 3 * 2 * 3
    assert all(int(r["up"]) + int(r["down"]) == 2000 for r in rows)


def test_evolve_with_tomography_columns(tmp_path):
    code, text = run(tmp_path, "evolve", "--model", "deutsch", "--samples", "3", "--shots", "500",
                     "--repeats", "3")
    rows, _ = table(text)
    assert {"fid_expt_mean", "fid_expt_std"} <= set(rows[0])
    assert float(rows[0]["fid_expt_mean"]) > 0.98


def test_evolve_fidelity_floor_and_closed_system(tmp_path):
    _, text = run(tmp_path, "evolve", "--model", "deutsch", "--gamma", "6283", "--tau", "2e-3",
                  "--samples", "3", "--shots", "0", name="a.csv")
    rows, _ = table(text)
    assert float(rows[-1]["fid_target"]) == pytest.approx(1 / np.sqrt(2), abs=1e-3)
    assert float(rows[-1]["purity"]) == pytest.approx(0.5, abs=1e-6)
    _, text = run(tmp_path, "evolve", "--model", "deutsch", "--gamma", "0", "--tau", "2e-3",
                  "--samples", "3", "--shots", "0", name="b.csv")
    rows, _ = table(text)
    assert float(rows[-1]["fid_target"]) >= 0.999


def test_xi_without_drive_is_zero(tmp_path):
    code, text = run(tmp_path, "xi", "--omegax", "0", "--samples", "5", "--tmax", "1e-4")
    rows, comments = table(text)
    assert code == 0
    assert all(float(r["xi_21"]) == 0 and float(r["xi_31"]) == 0 for r in rows)
    assert comments[-1].startswith("aqc_verdict=true")


def test_sweep_windows(tmp_path):
    code, text = run(tmp_path, "sweep", "--model", "deutsch", "--gammas", "0,6283",
                     "--taus", "5e-4,1e-3,2e-3", "--shots", "0")
    rows, comments = table(text)
    assert code == 0 and len(rows) == 6
    assert [int(r["window"]) for r in rows[:3]] == [1, 1, 1]
    assert [int(r["window"]) for r in rows[3:]] == [0, 0, 0]
    assert comments[-2] == "windows gamma=0 level=0.94999999999999996 count=1 [0.00050000000000000001,0.002]"
    assert "count=0 none" in comments[-1]


def test_window_helpers():
    wins, ids = find_windows([1, 2, 3, 4, 5], [0.96, 0.9, 0.97, 0.98, 0.5], 0.95)
    assert wins == [(1, 1), (3, 4)]
    assert list(ids) == [1, 0, 2, 2, 0]
    assert [int(x) for x in local_maxima([0.1, 0.5, 0.2, 0.3, 0.9])] == [0, 1, 0, 0, 0]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "lindblad_adiabatic", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "spectrum" in res.stdout
