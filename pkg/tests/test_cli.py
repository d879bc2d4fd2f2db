import csv
import json

import pytest

from sma_hybrid import config as cfgmod
from sma_hybrid.cli import main, stress_free_strain
from sma_hybrid.material import default_params, sigma_MW, stress


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def read_trajectory(path):
    with open(path) as fh:
        lines = fh.readlines()
    assert lines[0].startswith("# manifest: ")
    meta = json.loads(lines[0][len("# manifest: "):])
    rows = list(csv.DictReader(lines[1:]))
    return meta, rows


SHORT = {"horizon": {"t_end": 5.0}, "output": {"dt": 0.5},
         "input": {"type": "steps", "durations": [2.0, 3.0], "amplitudes": [1.0, -1.0]}}


def test_simulate_writes_trajectory_with_manifest(tmp_path):
    cfg = write_config(tmp_path, SHORT)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    meta, rows = read_trajectory(out / "trajectory.csv")
    assert meta["command"] == "simulate" and meta["config"]["model"] == "coupled-hybrid"
    assert "version" in meta and meta["material"]["E_A"] == 12.3e9
    assert float(rows[0]["t_s"]) == 0.0 and float(rows[-1]["t_s"]) == 5.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["result"]["termination"] == "time-horizon"
    assert (out / "jumps.csv").exists()


def test_simulate_jsonl_and_variant(tmp_path):
    cfg = write_config(tmp_path, {**SHORT, "output": {"dt": 0.5, "format": "jsonl"}})
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--variant", "mas"]) == 0
    lines = (out / "trajectory.jsonl").read_text().splitlines()
    records = [json.loads(line) for line in lines]
    assert records[0]["manifest"]["config"]["model"] == "coupled-mas"
    assert "alpha_rad" in records[1]


def test_same_seed_same_trajectory(tmp_path):
    cfg = write_config(tmp_path, {"horizon": {"t_end": 10.0}, "output": {"dt": 1.0}})
    a, b, c = (tmp_path / k for k in "abc")
    assert main(["simulate", "--config", str(cfg), "--out", str(a), "--seed", "5"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--seed", "5"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(c), "--seed", "6"]) == 0
    rows_a = read_trajectory(a / "trajectory.csv")[1]
    assert rows_a == read_trajectory(b / "trajectory.csv")[1]
    assert rows_a != read_trajectory(c / "trajectory.csv")[1]


def test_single_wire_simulation(tmp_path):
    cfg = write_config(tmp_path, {"model": "hybrid", "T_E": 300.0, "horizon": {"t_end": 20.0},
                                  "output": {"dt": 1.0}, "wire": {"x_M0": 1.0},
                                  "input": {"type": "constant", "value": 0.05}})
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    _, rows = read_trajectory(out / "trajectory.csv")
    assert float(rows[-1]["T_K"]) > 300.0


def test_stress_free_strain_hits_mid_hysteresis():
    p = default_params()
    eps = stress_free_strain(p, 300.0, 1.0)
    assert stress(p, eps, 1.0) == pytest.approx(sigma_MW(p, 300.0), rel=1e-12)


def test_isotherm_command(tmp_path):
    cfg = write_config(tmp_path, {"isotherm": {"T_E": 315.0, "n_samples": 201}})
    out = tmp_path / "out"
    assert main(["isotherm", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "isotherm_315K.csv").exists()


def test_benchmark_self_comparison_has_zero_discrepancy(tmp_path):
    cfg = write_config(tmp_path, {"horizon": {"t_end": 10.0}, "benchmark": {"scenarios": 2}})
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--variant", "hybrid",
                 "--repetitions", "1"]) == 0
    data = json.loads((out / "benchmark.json").read_text())
    assert data["summary"]["variants"] == ["hybrid", "hybrid#2"]
    assert data["summary"]["max_discrepancy"] == 0.0
    assert (out / "benchmark.csv").exists()


@pytest.mark.parametrize("data, field", [
    ({"model": "bogus"}, "model"),
    ({"T_E": -1}, "T_E"),
    ({"bogus": 1}, "bogus"),
    ({"output": {"format": "xml"}}, "output.format"),
    ({"schema_version": 2}, "schema_version"),
])
def test_config_errors_exit_two(tmp_path, capsys, data, field):
    cfg = write_config(tmp_path, data)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_malformed_json_reports_location(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"model": "hybrid",\n "T_E": }')
    assert main(["simulate", "--config", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 2


def test_simulation_failure_exit_three(tmp_path):
    # compressing a slack wire leaves the modeled domain
    cfg = write_config(tmp_path, {"model": "hybrid", "horizon": {"t_end": 50.0}, "output": {"dt": 1.0},
                                  "wire": {"eps0": 0.001, "v": -1e-5},
                                  "input": {"type": "constant", "value": 0.0}})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["result"]["termination"] == "escape"


def test_calibration_failure_exit_four(tmp_path):
    curve = tmp_path / "one.csv"
    curve.write_text("# T_E=300\neps,sigma_Pa,branch\n0.0,0.0,loading\n0.001,1.2e7,loading\n")
    cfg = write_config(tmp_path, {"calibration": {"curves": [str(curve)]}})
    assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_default_config_is_valid():
    cfg = cfgmod.load(None)
    assert cfg["model"] == "coupled-hybrid"
    assert cfgmod.parse('{"solver": {"max_step": 0.5}}')["solver"]["max_step"] == 0.5
