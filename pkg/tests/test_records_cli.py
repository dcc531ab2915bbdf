import filecmp
import json

import numpy as np
import pytest
import yaml

from attcal.cli import main
from attcal.config import ConfigError, SimulateConfig, config_hash, from_dict
from attcal.presets import device_scenario, rf_drive_axis
from attcal.records import (
    SchemaError, read_iq, read_psd, read_transient, write_iq, write_psd, write_transient,
)
from attcal.synth import RF, synth_iq, synth_psd_trace, synth_transient

SMALL = {
    "seed": 5,
    "psd": {"tones": [{"f_sig_hz": 5.5e9, "f_det_hz": 7.0e9}, {"f_sig_hz": 5.5e9, "f_det_hz": 4.0e9}]},
    "iq": {"tones_hz": [5.5e9], "n_samples": 2000},
    "transient": {"n_points": 601},
    "fit": {"bootstrap": {"n": 50}},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_psd_round_trip_bytes(tmp_path):
    sc = device_scenario(seed=2)
    traces = [synth_psd_trace(sc, RF, rf_drive_axis(), 7e9, 5.5e9)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_psd(a, traces)
    back = read_psd(a)
    assert np.array_equal(back[0].added_psd, traces[0].added_psd)
    write_psd(b, back)
    assert a.read_bytes() == b.read_bytes()


def test_transient_round_trip(tmp_path):
    sc = device_scenario()
    tr = synth_transient(sc, 3e-12, np.linspace(0, 15e-3, 301), (2e-3, 7e-3))
    write_transient(tmp_path / "t.csv", tr)
    back = read_transient(tmp_path / "t.csv")
    assert back.pulse_window == tr.pulse_window
    write_transient(tmp_path / "u.csv", back)
    assert filecmp.cmp(tmp_path / "t.csv", tmp_path / "u.csv", shallow=False)


def test_iq_round_trip(tmp_path):
    sc = device_scenario()
    recs = [synth_iq(sc, f, 1e-6, 300, 1e-6) for f in (4e9, 7e9)]
    write_iq(tmp_path / "iq.csv", tmp_path / "iq.json", recs)
    back = read_iq(tmp_path / "iq.csv", tmp_path / "iq.json")
    assert [r.f_sig for r in back] == [4e9, 7e9]
    assert np.array_equal(back[1].samples, recs[1].samples)
    assert back[0].p_sig == pytest.approx(1e-6, rel=1e-12)


def test_schema_error_names_row_and_column(tmp_path):
    path = tmp_path / "psd.csv"
    write_psd(path, [synth_psd_trace(device_scenario(), RF, rf_drive_axis(), 7e9, 5.5e9)])
    lines = path.read_text().splitlines()
    fields = lines[3].split(",")
    fields[4] = "oops"
    lines[3] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError) as exc:
        read_psd(path)
    assert exc.value.row == 4
    assert exc.value.column == "added_psd_w_per_hz"
    assert "psd.csv" in str(exc.value)


@pytest.mark.parametrize("text", ["", "a,b\n1,2\n"])
def test_bad_headers(tmp_path, text):
    path = tmp_path / "psd.csv"
    path.write_text(text)
    with pytest.raises(SchemaError):
        read_psd(path)


def test_unknown_config_key_is_error():
    with pytest.raises(ConfigError, match="bogus"):
        from_dict(SimulateConfig, {"scenario": {"bogus": 1}})
    with pytest.raises(ConfigError):
        from_dict(SimulateConfig, {"seed": "many"})


def test_config_hash():
    a = from_dict(SimulateConfig, {})
    b = from_dict(SimulateConfig, {"seed": 0})
    c = from_dict(SimulateConfig, {"seed": 1})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_cli_simulate_fit_report(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert run("simulate", "--config", small_config, "--out-dir", out) == 0
    assert run("fit", "--config", out / "manifest.json") == 0
    doc = json.loads((out / "report.json").read_text())
    truth = json.loads((out / "truth.json").read_text())
    row = doc["calibration"]["frequencies"][0]
    assert row["f_sig_hz"] == 5.5e9
    assert abs(row["a_line_db"]["value"] - truth["a_line_db"][0]["a_line_db"]) < 1.5
    assert abs(row["gain_db"]["value"] - truth["gain_db"]) < 1.5
    assert doc["provenance"]["seed"] == 5
    capsys.readouterr()
    assert run("report", out / "report.json") == 0
    assert "5.5" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, small_config):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario:\n  nonsense: 3\n")
    assert run("simulate", "--config", bad, "--out-dir", tmp_path / "x") == 2
    assert run("simulate", "--jobs", "0", "--out-dir", tmp_path / "x") == 2
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2

    out = tmp_path / "run"
    assert run("simulate", "--config", small_config, "--out-dir", out) == 0
    (out / "psd.csv").write_text("")
    assert run("fit", "--config", out / "manifest.json") == 3
    (tmp_path / "junk.json").write_text("{not json")
    assert run("report", tmp_path / "junk.json") == 3


def test_cli_fit_failure_exit(tmp_path, small_config):
    out = tmp_path / "run"
    assert run("simulate", "--config", small_config, "--out-dir", out) == 0
    # a window above the whole sweep leaves nothing to fit
    assert run("fit", "--config", out / "manifest.json", "--window-min-dbm", "10") == 4


def test_failed_stage_reported(tmp_path, small_config):
    out = tmp_path / "run"
    assert run("simulate", "--config", small_config, "--out-dir", out) == 0
    t = out / "thermometry.csv"
    lines = t.read_text().splitlines()
    t.write_text("\n".join(lines[:3]) + "\n")
    assert run("fit", "--config", out / "manifest.json") == 0
    doc = json.loads((out / "report.json").read_text())
    assert "power_law" in doc["errors"]
    assert doc["calibration"]["alpha_dimensionless"] is None


def test_simulate_is_deterministic(tmp_path, small_config):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run("simulate", "--config", small_config, "--out-dir", a) == 0
    assert run("simulate", "--config", small_config, "--out-dir", b) == 0
    assert run("simulate", "--config", small_config, "--out-dir", c, "--jobs", 2) == 0
    names = sorted(p.name for p in a.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors
    match, mismatch, errors = filecmp.cmpfiles(a, c, names, shallow=False)
    assert not mismatch and not errors
