import json
import re

import numpy as np
import pytest

from orthocal import ParameterDeviation, solve_identification
from orthocal.cli import main
from orthocal.files import (
    calibration_report,
    load_measurement_file,
    measurement_payload,
    read_raw_log,
    report_results,
)
from orthocal.simulator import simulate_measurements_linear

L = 310.25

CONFIG = {
    "true_dev": {"joint_offsets": [0.3, -0.2, 0.1], "leg_length_deviations": [0.2, 0.1, -0.3]},
    "noise": {"std_dev": 0.01, "quantization_step": 0.01},
    "seed": 7,
    "plan": {"repeats": 3, "mode": "nonlinear"},
}


def numbers(text):
    return [float(v) for v in re.findall(r"-?\d+\.\d+", text)]


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CONFIG))
    return path


def test_fk_zero(capsys):
    assert main(["fk", str(L), str(L), str(L)]) == 0
    out = capsys.readouterr().out
    assert numbers(out.splitlines()[0]) == [0.0, 0.0, 0.0]


def test_ik_fk_roundtrip(capsys):
    assert main(["ik", "12.5", "-7.25", "30", "--dev-rho", "0.1", "0.2", "0.3"]) == 0
    rho = numbers(capsys.readouterr().out.splitlines()[0])
    assert main(["fk", *map(str, rho), "--dev-rho", "0.1", "0.2", "0.3"]) == 0
    p = numbers(capsys.readouterr().out.splitlines()[0])
    np.testing.assert_allclose(p, [12.5, -7.25, 30], atol=1e-5)


def test_out_of_limit_warning(capsys):
    assert main(["fk", str(L + 61), str(L), str(L)]) == 0
    assert "outside limits" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    assert main(["ik", "400", "0", "0"]) == 2
    assert main(["fk", "1000", "1000", "1000"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["ik", "1", "2"])
    assert info.value.code == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CONFIG, "surprise": 1}))
    assert main(["simulate", "--config", str(bad)]) == 1
    assert main(["calibrate", str(tmp_path / "missing.json")]) == 1
    assert "error" in capsys.readouterr().err


def test_jacobian_zero_and_fd(tmp_path, capsys):
    out = tmp_path / "jac.json"
    assert main(["jacobian", "--posture", "zero", "--check-fd", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    np.testing.assert_array_equal(data["jacobian"], np.hstack([np.eye(3), -np.eye(3)]))
    assert data["max_fd_discrepancy"] < 1e-6
    assert "finite difference" in capsys.readouterr().out


def test_jacobian_at_pose(tmp_path):
    out = tmp_path / "jac.json"
    assert main(["jacobian", "--pose", "60", "0", "0", "--out", str(out)]) == 0
    jac = np.array(json.loads(out.read_text())["jacobian"])
    t = np.tan(np.arcsin(60 / L))
    assert jac[1, 0] == pytest.approx(t, abs=1e-9)


def test_simulate_then_calibrate(tmp_path, config_file, capsys):
    meas = tmp_path / "m.json"
    log = tmp_path / "raw.csv"
    assert main(["simulate", "--config", str(config_file), "--out", str(meas), "--log", str(log)]) == 0
    mv, geom = load_measurement_file(meas)
    rows = read_raw_log(log)
    assert len(rows) == 3 * 3 * 4 * 2
    report = tmp_path / "report.json"
    assert main(["calibrate", str(meas), "--out", str(report)]) == 0
    text = capsys.readouterr().out
    assert "cond" in text and "r.m.s." in text
    data = json.loads(report.read_text())
    assert [r["mask"] for r in data["results"]] == ["full", "rho", "length"]
    assert report.with_suffix(".txt").exists()
    # report JSON re-parsed equals the in-memory results
    expected = calibration_report(mv, geom)
    assert data == json.loads(json.dumps(expected))
    for parsed, row in zip(report_results(data), expected["results"]):
        assert parsed.to_dict() == row


def test_calibrate_consistent_input(tmp_path, capsys):
    dev = ParameterDeviation((0.3, -0.1, 0.2), (-0.2, 0.4, 0.1))
    mv = simulate_measurements_linear(dev)
    from orthocal import DEFAULT_GEOMETRY

    path = tmp_path / "m.json"
    path.write_text(json.dumps(measurement_payload(mv, DEFAULT_GEOMETRY)))
    out = tmp_path / "r.json"
    assert main(["calibrate", str(path), "--mask", "full", "--out", str(out)]) == 0
    row = json.loads(out.read_text())["results"][0]
    assert row["residual_rms"] < 1e-12
    s = np.linalg.svd(__import__("orthocal").build_design_matrix(), compute_uv=False)
    assert row["condition_number"] == pytest.approx(s[0] / s[-1])


def test_calibrate_micrometre_file(tmp_path):
    dev = ParameterDeviation((0.3, -0.1, 0.2))
    mv = simulate_measurements_linear(dev)
    recs = [{"leg": r["leg"], "axis": r["axis"], "posture": r["posture"],
             "repeats": [r["value_mm"] * 1000.0] * 3} for r in mv.to_records()]
    path = tmp_path / "um.json"
    path.write_text(json.dumps({"units": "um", "measurements": recs}))
    out = tmp_path / "r.json"
    assert main(["calibrate", str(path), "--mask", "rho", "--out", str(out)]) == 0
    res = json.loads(out.read_text())["results"][0]["parameters"]
    np.testing.assert_allclose([res["d_rho_x"], res["d_rho_y"], res["d_rho_z"]], dev.d_rho, atol=1e-9)


def test_simulate_seed_and_mode(tmp_path, config_file):
    outs = []
    for name, extra in (("a", []), ("b", []), ("c", ["--seed", "8"]), ("d", ["--mode", "linear"])):
        path = tmp_path / f"{name}.json"
        assert main(["simulate", "--config", str(config_file), "--out", str(path), *extra]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]
    assert outs[0] != outs[3]


def test_simulate_mode_flag_noise_free(tmp_path):
    cfg = dict(CONFIG, noise={"std_dev": 0.0, "quantization_step": 0.0})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    vals = {}
    for mode in ("linear", "nonlinear"):
        out = tmp_path / f"{mode}.json"
        assert main(["simulate", "--config", str(path), "--mode", mode, "--out", str(out)]) == 0
        vals[mode], _ = load_measurement_file(out)
    gap = np.max(np.abs(vals["linear"].values - vals["nonlinear"].values))
    assert 0 < gap <= 0.0075 * 0.3**2


def test_simulate_monte_carlo_summary(tmp_path, config_file):
    summary = tmp_path / "mc.json"
    assert main(["simulate", "--config", str(config_file), "--out", str(tmp_path / "m.json"),
                 "--monte-carlo", "20", "--mode", "linear", "--summary", str(summary)]) == 0
    data = json.loads(summary.read_text())
    assert data["trials"] == 20 and set(data["mean_abs_error"]) >= {"d_rho_x", "dL_z"}


def test_pipeline_deterministic_and_self_test(tmp_path, config_file, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["pipeline", "--config", str(config_file), "--out", str(a)]) == 0
    assert main(["pipeline", "--config", str(config_file), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["experiment_3"]["deviation_rms"] < report["experiment_2"]["deviation_rms"]
    assert main(["pipeline", "--config", str(config_file), "--self-test", "1e-6"]) == 2
    assert main(["pipeline", "--config", str(config_file), "--self-test", "5"]) == 0
    assert "self-test" in capsys.readouterr().out


def test_config_dir_env(tmp_path, monkeypatch, capsys):
    (tmp_path / "geometry.json").write_text(json.dumps({"leg_length": 200.0, "joint_min": -50.0,
                                                        "joint_max": 40.0}))
    monkeypatch.setenv("ORTHOCAL_CONFIG_DIR", str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    assert main(["fk", "200", "200", "200"]) == 0
    assert numbers(capsys.readouterr().out.splitlines()[0]) == [0.0, 0.0, 0.0]
    assert main(["ik", "0", "0", "0"]) == 0
    assert numbers(capsys.readouterr().out.splitlines()[0]) == [200.0, 200.0, 200.0]


def test_geometry_flag_overrides_config(tmp_path, capsys):
    geo = tmp_path / "geo.json"
    geo.write_text(json.dumps({"geometry": {"leg_length": 250.0}}))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**CONFIG, "geometry": {"leg_length": 300.0}}))
    out = tmp_path / "m.json"
    assert main(["simulate", "--config", str(cfg), "--geometry", str(geo), "--out", str(out)]) == 0
    _, geom = load_measurement_file(out)
    assert geom.leg_length == 250.0


def test_identify_matches_library(tmp_path, config_file):
    meas = tmp_path / "m.json"
    main(["simulate", "--config", str(config_file), "--out", str(meas)])
    mv, geom = load_measurement_file(meas)
    out = tmp_path / "r.json"
    main(["calibrate", str(meas), "--mask", "full", "--out", str(out)])
    row = json.loads(out.read_text())["results"][0]
    assert row == solve_identification(mv, "full", geom).to_dict()
