import csv
import filecmp
import os

import numpy as np
import pytest

from kerrsim.cli import main
from kerrsim.config import DEFAULTS, Experiment, load, loads
from kerrsim.errors import ConfigError

FAST = """
[scurve]
n_curves = 4
n_pulses = 300
n_points = 15

[spectroscopy]
modes = [1, 2, 5]
n_pulses = 300
n_points = 31
bias_pulses = 2000

[noise_sweep]
flux_values = [0.0, 0.1, 0.2]
n_curves = 2
n_pulses = 200
n_points = 11

[noise]
sigma_flux_uPhi0 = 5.0
"""


def write_cfg(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_rows(path):
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_defaults_filled():
    cfg = loads("")
    assert cfg == DEFAULTS
    assert cfg is not DEFAULTS
    part = loads("[operating_point]\ntemperature_mK = 50.0\n")
    assert part["operating_point"]["temperature_mK"] == 50.0
    assert part["operating_point"]["mode"] == 3
    assert part["device"] == DEFAULTS["device"]


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[device]\nn_squidz = 7\n",
    "[device]\nn_squids = 'seven'\n",
    "[device]\nn_squids = 7.5\n",
    "[noise]\nresample_policy = 'sometimes'\n",
    "[run]\nengine = 'quantum'\n",
    "device = 3\n",
    "[device\n",
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_int_accepted_for_float():
    assert loads("[operating_point]\ntemperature_mK = 50\n")["operating_point"]["temperature_mK"] == 50


def test_missing_file():
    with pytest.raises(ConfigError):
        load("/nonexistent/kerrsim.toml")


def test_experiment_derivations(params):
    exp = Experiment(loads(""))
    assert exp.params.n_squids == params.n_squids
    assert exp.spectrum().nu(3) == pytest.approx(5.32e9, rel=1e-9)
    with pytest.raises(ConfigError):
        Experiment(loads("[device]\nz0_ohm = 50.0\n"))
    with pytest.raises(ConfigError):
        Experiment(loads("[run]\njobs = -1\n")).jobs


@pytest.mark.parametrize("cmd", ["tune", "scurve", "spectroscopy", "noise-sweep", "fit",
                                 "calibrate"])
def test_dry_run(tmp_path, cmd, capsys):
    out = tmp_path / "o"
    assert main([cmd, "--dry-run", "--out", str(out)]) == 0
    assert "configuration ok" in capsys.readouterr().out
    assert not out.exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["tune", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["tune", "--config", write_cfg(tmp_path, "[nope]\n")]) == 2
    assert main(["tune", "--jobs", "-3"]) == 2
    below = write_cfg(tmp_path, "[operating_point]\ndetuning_kHz = 50.0\n", "below.toml")
    assert main(["scurve", "--config", below, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "configuration error" in err and "numerical failure" in err
    with pytest.raises(SystemExit) as e:
        main(["nonsense"])
    assert e.value.code == 2


def test_tune_output(tmp_path):
    cfg = write_cfg(tmp_path, "[tune]\nn_flux = 10\nmodes = [2, 3, 4]\n")
    assert main(["tune", "--config", cfg, "--out", str(tmp_path), "--no-header-timestamp"]) == 0
    rows = read_rows(tmp_path / "tune.csv")
    assert list(rows[0]) == ["phi_reduced", "mode", "frequency_Hz"]
    assert len(rows) == 10 * 3
    for m in ("2", "4"):
        f = {r["frequency_Hz"] for r in rows if r["mode"] == m}
        assert len(f) == 1
    f3 = np.array([float(r["frequency_Hz"]) for r in rows if r["mode"] == "3"])
    assert f3[0] == pytest.approx(5.32e9, rel=1e-9)
    assert np.all(np.diff(f3) < 0)


def test_timestamp_header(tmp_path):
    assert main(["calibrate", "--out", str(tmp_path), "--seed", "7"]) == 0
    first = (tmp_path / "calibrate.csv").read_text().splitlines()[0]
    assert first.startswith("# kerrsim ") and "calibrate seed=7" in first
    assert main(["calibrate", "--out", str(tmp_path), "--no-header-timestamp"]) == 0
    assert (tmp_path / "calibrate.csv").read_text().startswith("quantity,value")


def test_calibrate_values(tmp_path):
    assert main(["calibrate", "--out", str(tmp_path), "--no-header-timestamp"]) == 0
    vals = {r["quantity"]: float(r["value"]) for r in read_rows(tmp_path / "calibrate.csv")}
    assert vals["beta"] == pytest.approx(0.0254, rel=1e-9)
    assert vals["nu3_Hz"] == pytest.approx(5.32e9, rel=1e-9)


@pytest.mark.parametrize("cmd", ["tune", "scurve", "spectroscopy", "noise-sweep", "calibrate"])
def test_byte_identical_across_jobs(tmp_path, cmd):
    cfg = write_cfg(tmp_path, FAST)
    dirs = []
    for jobs in (1, 2):
        d = tmp_path / f"j{jobs}"
        assert main([cmd, "--config", cfg, "--seed", "11", "--jobs", str(jobs), "--out", str(d),
                     "--no-header-timestamp"]) == 0
        dirs.append(d)
    names = sorted(os.listdir(dirs[0]))
    assert names and names == sorted(os.listdir(dirs[1]))
    match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
    assert not mismatch and not errors


def test_seed_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, FAST)
    for s in (1, 2):
        assert main(["scurve", "--config", cfg, "--seed", str(s), "--out", str(tmp_path / f"s{s}"),
                     "--no-header-timestamp"]) == 0
    a = (tmp_path / "s1" / "scurve.csv").read_bytes()
    b = (tmp_path / "s2" / "scurve.csv").read_bytes()
    assert a != b


def test_fit_command_roundtrip(tmp_path, capsys):
    cfg = write_cfg(tmp_path, FAST)
    out = tmp_path / "o"
    assert main(["scurve", "--config", cfg, "--out", str(out), "--no-header-timestamp"]) == 0
    assert main(["fit", "--config", cfg, "--kind", "scurve", "--input", str(out / "scurve.csv"),
                 "--out", str(out), "--no-header-timestamp"]) == 0
    assert " +- " in capsys.readouterr().out
    row = read_rows(out / "fit.csv")[0]
    assert row["kind"] == "scurve" and row["converged"] == "1"
    summary = {r["quantity"]: float(r["value"]) for r in read_rows(out / "scurve_summary.csv")}
    assert float(row["width_10_90"]) == pytest.approx(summary["width_averaged_Hz"], rel=0.2)


def test_fit_without_input_is_config_error(tmp_path):
    assert main(["fit", "--out", str(tmp_path)]) == 2
