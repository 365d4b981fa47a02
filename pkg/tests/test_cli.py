"""Command line: outputs, exit codes, determinism."""
import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from blochmass import csvio
from blochmass.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, compare_series, dominant_frequency, main

SHORT_CFG = """\
mass_amu = 86.909
lattice_nm = 390
s = 7
accel = 24.2
sigma = 0.2
duration_bloch = 0.1
"""


def read_csv(path):
    """Minimal reader independent of the package: returns (meta, columns)."""
    meta, rows, header = {}, [], None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0].startswith("#"):
                key, _, value = ",".join(row)[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif header is None:
                header = row
            else:
                rows.append([float(x) for x in row])
    data = np.array(rows)
    return meta, {name: data[:, i] for i, name in enumerate(header)}


def read_summary(path):
    out = {}
    for line in open(path):
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "short.cfg"
    cfg.write_text(SHORT_CFG)
    code = main([
        "run", "--config", str(cfg), "--engines", "firstorder,splitstep,baseline",
        "--populations", "--out", str(out), "--gnuplot", "--emit-bands",
    ])
    assert code == EXIT_OK
    return out


class TestRun:
    def test_files_written(self, short_run):
        names = sorted(p.name for p in short_run.iterdir())
        for expected in ("short_firstorder.csv", "short_splitstep.csv", "short_baseline.csv",
                         "short_summary.txt", "short.gp", "short_bands.csv"):
            assert expected in names

    def test_series_schema(self, short_run):
        meta, cols = read_csv(short_run / "short_splitstep.csv")
        for name in csvio.SERIES_COLUMNS:
            assert name in cols
        assert meta["provenance"] == "full-numeric"
        assert "pop_0" in cols
        assert cols["t_scaled"][0] == 0.0
        np.testing.assert_allclose(cols["t_SI"], cols["t_scaled"] * float(meta["time_unit_s"]), rtol=1e-15)

    def test_summary_recomputed_from_csv(self, short_run):
        summary = read_summary(short_run / "short_summary.txt")
        for engine in ("firstorder", "splitstep"):
            _, cols = read_csv(short_run / f"short_{engine}.csv")
            dev = np.max(np.abs(cols["v_scaled"] - cols["v_baseline"]))
            assert float(summary[f"{engine}.max_abs_v_minus_baseline"]) == pytest.approx(dev, rel=1e-12)
            leak = np.max(1.0 - cols["pop_0"])
            assert float(summary[f"{engine}.max_leakage"]) == pytest.approx(leak, rel=1e-12, abs=1e-300)
        ratio = float(summary["tau_osc_over_tau_B"])
        assert ratio == pytest.approx(float(summary["tau_osc_s"]) / float(summary["tau_B_s"]), rel=1e-12)

    def test_config_echo(self, short_run):
        meta, _ = read_csv(short_run / "short_firstorder.csv")
        assert "accel = 24.2" in meta["config"]
        assert meta["provenance"] == "first-order"

    def test_compare_engines(self, short_run, capsys):
        code = main(["compare", str(short_run / "short_firstorder.csv"),
                     str(short_run / "short_splitstep.csv"), "--resample"])
        assert code == EXIT_OK
        report = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
        assert float(report["max_abs_dv_over_vR"]) < 0.02

    def test_compare_identical(self, short_run):
        path = short_run / "short_splitstep.csv"
        report = compare_series(path, path)
        assert report["max_abs_dv_over_vR"] == 0.0 and report["rms_da_over_F"] == 0.0

    def test_compare_needs_resample_flag(self, short_run, capsys):
        code = main(["compare", str(short_run / "short_firstorder.csv"), str(short_run / "short_splitstep.csv")])
        assert code == EXIT_CONFIG
        assert "--resample" in capsys.readouterr().err


def test_deterministic_output(tmp_path):
    cfg = tmp_path / "d.cfg"
    cfg.write_text(SHORT_CFG.replace("duration_bloch = 0.1", "duration_bloch = 0.05"))
    outputs = []
    for run_dir in ("a", "b"):
        out = tmp_path / run_dir
        assert main(["run", "--config", str(cfg), "--engines", "splitstep,firstorder", "--out", str(out)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("BLOCHMASS_OUT", str(tmp_path))
    assert main(["bands", "--s", "3", "--points", "5"]) == EXIT_OK
    _, cols = read_csv(tmp_path / "bands_s3.csv")
    assert cols["E_0"].shape == (5,)


class TestBands:
    def test_stdout(self, capsys):
        assert main(["bands", "--s", "7", "--points", "3", "--out", "-"]) == EXIT_OK
        lines = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
        assert lines[0] == "k_scaled,E_0,E_1,E_2,E_3"
        e = [float(x) for x in lines[2].split(",")]
        assert e[2] - e[1] == pytest.approx(4.964034865962, abs=1e-9)

    def test_negative_depth(self, capsys):
        assert main(["bands", "--s", "-1"]) == EXIT_CONFIG


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG

    def test_unknown_preset(self, capsys):
        assert main(["run", "rb-s99"]) == EXIT_CONFIG
        assert "valid names" in capsys.readouterr().err

    def test_bad_engine(self):
        assert main(["run", "rb-s7", "--engines", "magic"]) == EXIT_CONFIG

    def test_bad_duration(self):
        assert main(["run", "rb-s7", "--duration", "3"]) == EXIT_CONFIG

    def test_grid_too_small(self):
        assert main(["run", "na-s14", "--engines", "splitstep", "--grid-cells", "128"]) == EXIT_CONFIG

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = main(["run", "rb-s7", "--engines", "baseline", "--duration", "0.05", "--out", str(blocker / "sub")])
        assert code == EXIT_IO

    def test_presets_listing(self, capsys):
        assert main(["presets"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("\n") == 8 and "Fig. 10" in out


def test_entry_point_module():
    proc = subprocess.run([sys.executable, "-m", "blochmass.cli", "presets"], capture_output=True, text=True)
    assert proc.returncode == 0 and "rb-s7" in proc.stdout


def test_dominant_frequency():
    t = np.linspace(0.0, 100.0, 4001)
    assert dominant_frequency(t, np.sin(3.0 * t)) == pytest.approx(3.0, rel=0.02)


def test_csv_float_round_trip(tmp_path):
    values = np.array([0.1, 1 / 3, math.pi, -2.5e-300, np.nan, np.inf])
    csvio.write_table(tmp_path / "x.csv", {"x": values}, {"note": "round trip"})
    meta, cols = csvio.read_table(tmp_path / "x.csv")
    assert meta["note"] == "round trip"
    np.testing.assert_array_equal(cols["x"], values)
