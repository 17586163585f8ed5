import csv
import io
import json

import numpy as np
import pytest

from qbmnet.cli import PRESETS, SweepConfig, main
from qbmnet.covariance import thermal_covariance_late
from qbmnet.detectors import DetectorPair, asymptotic_pair_state, decay_rates
from qbmnet.entanglement import entanglement_report, to_modewise
from qbmnet.kernels import FieldPair, ThermalEnvironment
from qbmnet.propagator import OscillatorNetwork


def read_rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_preset_list(capsys):
    code, out, _ = run(["preset", "list"], capsys)
    assert code == 0
    assert [line.split("\t")[0] for line in out.splitlines()] == sorted(PRESETS)


def test_sweep_is_deterministic_and_round_trips(tmp_path, capsys):
    first, second, third = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    args = ["sweep", "--axis", "separation", "--min", "0.01", "--max", "1", "--count", "4",
            "--outputs", "gamma_plus,en_raw", "--workers", "1"]
    assert run(args + ["-o", str(first)], capsys)[0] == 0
    assert run(args + ["-o", str(second), "--workers", "2"], capsys)[0] == 0
    assert first.read_bytes() == second.read_bytes()
    assert run(["sweep", "--from-header", str(first), "-o", str(third)], capsys)[0] == 0
    assert first.read_bytes() == third.read_bytes()
    text = first.read_text()
    assert text.startswith("# qbmnet ")
    rows = read_rows(text)
    assert [float(r["separation"]) for r in rows] == sorted(float(r["separation"]) for r in rows)
    assert all(r["status"] == "ok" for r in rows)


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "axis": "detuning", "gamma0": 0.01,
        "grid": {"min": 0.0, "max": 0.02, "count": 3},
        "outputs": ["gamma_plus", "gamma_minus"],
    }))
    code, out, _ = run(["sweep", "-c", str(cfg), "--gamma0", "0.02"], capsys)
    assert code == 0
    header = json.loads(next(l for l in out.splitlines() if l.startswith("# config: "))[10:])
    assert header["gamma0"] == 0.02
    assert header["axis"] == "detuning"


def test_single_point_matches_library(capsys):
    code, out, _ = run(["sweep", "--axis", "separation", "--min", "0.3", "--max", "0.3", "--count", "2",
                        "--outputs", "gamma_plus,gamma_minus,en_raw,simon_raw"], capsys)
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 1
    pair = DetectorPair(1.0, 0.0, 0.1, 0.3, 0.01)
    rates = decay_rates(pair)
    rep = entanglement_report(to_modewise(asymptotic_pair_state(pair, ThermalEnvironment(0.0)).cov))
    assert float(rows[0]["gamma_plus"]) == pytest.approx(rates.plus.gamma, rel=1e-8)
    assert float(rows[0]["gamma_minus"]) == pytest.approx(rates.minus.gamma, rel=1e-8)
    assert float(rows[0]["en_raw"]) == pytest.approx(rep.en_raw, rel=1e-8)
    assert float(rows[0]["simon_raw"]) == pytest.approx(rep.simon_raw, rel=1e-8)


def test_json_output(capsys):
    code, out, _ = run(["sweep", "--format", "json", "--min", "0.01", "--max", "0.02", "--count", "2",
                        "--outputs", "gamma_minus"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rows"]) == 2
    assert doc["rows"][0]["gamma_minus"] == pytest.approx(0.0, abs=1e-12)


def test_partial_and_total_failure_codes(capsys):
    code, out, err = run(["sweep", "--min", "0.001", "--max", "0.1", "--count", "3", "--spacing", "log",
                          "--outputs", "gamma_plus"], capsys)
    assert code == 4
    rows = read_rows(out)
    assert rows[0]["status"] == "failed" and "ValidationError" in rows[0]["reason"]
    assert rows[0]["gamma_plus"] == "nan"
    assert rows[-1]["status"] == "ok"
    code, _, _ = run(["sweep", "--min", "0.001", "--max", "0.002", "--count", "2", "--outputs", "gamma_plus"], capsys)
    assert code == 3


def test_state_failure_keeps_rates(capsys):
    code, out, _ = run(["sweep", "--pade-order", "exact", "--min", "0.5", "--max", "0.5", "--count", "2",
                        "--outputs", "gamma_plus,en_raw"], capsys)
    assert code == 3
    row = read_rows(out)[0]
    assert row["en_raw"] == "nan"
    assert float(row["gamma_plus"]) > 0


@pytest.mark.parametrize(
    "args",
    [
        ["sweep", "--axis", "angle"],
        ["sweep", "--count", "1"],
        ["sweep", "--min", "2", "--max", "1"],
        ["sweep", "--outputs", "entropy"],
        ["sweep", "--gamma0", "-1"],
        ["preset", "run", "fig9"],
        ["probe", "volume"],
    ],
)
def test_config_errors(args, capsys):
    assert run(args, capsys)[0] == 2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"omega": 1.0}))
    code, _, err = run(["sweep", "-c", str(cfg)], capsys)
    assert code == 2
    assert "unknown config keys" in err


def test_probe_kernel(capsys):
    code, out, _ = run(["probe", "kernel", "--separation", "1.0", "--pade-order", "exact"], capsys)
    assert code == 0
    assert out.startswith("# tolerances:")
    entries = [float(x) for x in out.splitlines()[2].split()]
    assert entries[1] == pytest.approx(2 * 0.1 * np.sin(1.0), rel=1e-14)


def test_probe_roots_free_theory(capsys):
    code, out, _ = run(["probe", "roots", "--gamma0", "0", "--detuning", "0.1"], capsys)
    assert code == 0
    roots = [complex(line.strip()) for line in out.splitlines()[2:]]
    assert roots == [-1.1j, -0.9j, 0.9j, 1.1j]


def test_probe_roots_weak_coupling(capsys):
    code, out, _ = run(["probe", "roots", "--gamma0", "1e-6", "--detuning", "0.1", "--separation", "2"], capsys)
    assert code == 0
    bright = complex(out.splitlines()[-2].split(": ")[1])
    dark = complex(out.splitlines()[-1].split(": ")[1])
    assert sorted([bright.imag, dark.imag]) == pytest.approx([0.9, 1.1], abs=1e-5)


def test_probe_single_covariance_matches_library(capsys):
    code, out, _ = run(["probe", "covariance", "--single", "--temperature", "0.5"], capsys)
    assert code == 0
    printed = np.array([[float(x) for x in line.split()] for line in out.splitlines()[2:]])
    net = OscillatorNetwork([[1.0]], [[1.0]])
    lib = thermal_covariance_late(net, FieldPair(0.1, [0.0], 0.01, 0), ThermalEnvironment(0.5)).matrix
    assert np.array_equal(printed, lib)


def test_environment_tolerance_in_header(monkeypatch, capsys):
    monkeypatch.setenv("QBMNET_RTOL", "1e-8")
    code, out, _ = run(["sweep", "--min", "0.01", "--max", "0.01", "--count", "2", "--outputs", "gamma_plus"], capsys)
    assert code == 0
    assert '"rtol": 1e-08' in out


def test_fig3_and_fig5_presets(capsys):
    code, out, _ = run(["preset", "run", "fig3", "--count", "6"], capsys)
    assert code == 0
    rows = read_rows(out)
    assert float(rows[0]["en_raw"]) > 0
    near_one = min(rows, key=lambda r: abs(float(r["separation"]) - 1.0))
    assert float(near_one["en_raw"]) < 0
    code, out, _ = run(["preset", "run", "fig5", "--count", "3"], capsys)
    assert code == 0
    first = read_rows(out)[0]
    assert float(first["gamma_minus"]) == pytest.approx(0.0, abs=1e-12)
    assert float(first["gamma_plus"]) == pytest.approx(0.2, rel=0.01)


def test_config_defaults_validate():
    cfg = SweepConfig()
    assert cfg.columns()[0] == "separation"
    assert cfg.grid.values()[0] == 0.01
