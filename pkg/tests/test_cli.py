import csv
import json

import numpy as np
import pytest
import yaml

from fieldarm.cli import main
from fieldarm.kinematics import magnet_pose_for_field_direction
from fieldarm.magnetostatics import cylinder_field, default_magnet_spec
from fieldarm.nvspin import (
    GAMMA_E_DEFAULT,
    field_polar_angle,
    resonances_from_cubic,
)

from conftest import SAMPLE, STANDOFF


def read_artifact_csv(path):
    header = []
    with open(path) as fh:
        lines = fh.readlines()
    data_lines = []
    for line in lines:
        (header if line.startswith("#") else data_lines).append(line)
    rows = list(csv.DictReader(data_lines))
    return header, rows


def test_scan_single_point(tmp_path):
    out = tmp_path / "scan.csv"
    rc = main(["scan", "--ay-start", "0", "--ay-stop", "0", "--ay-steps", "1",
               "--az-start", "0", "--az-stop", "0", "--az-steps", "1",
               "--standoff-m", "0.16", "--out", str(out)])
    assert rc == 0
    header, rows = read_artifact_csv(out)
    assert len(rows) == 1
    assert any(line.startswith("# config ") for line in header)
    assert any(line.startswith("# seed ") for line in header)


def test_scan_mean_error_matches_csv(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    rc = main(["scan", "--ay-start", "10", "--ay-stop", "80", "--ay-steps", "4",
               "--az-start", "5", "--az-stop", "85", "--az-steps", "4",
               "--out", str(out)])
    assert rc == 0
    _, rows = read_artifact_csv(out)
    assert len(rows) == 16
    assert [int(r["order_index"]) for r in rows] == list(range(16))
    mean_err = np.mean([float(r["angular_error_deg"]) for r in rows])
    reported = capsys.readouterr().err
    assert f"mean angular error {mean_err:.6g}" in reported


def test_scan_rerun_is_byte_identical(tmp_path):
    args = ["scan", "--ay-start", "10", "--ay-stop", "80", "--ay-steps", "3",
            "--az-start", "5", "--az-stop", "85", "--az-steps", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rerun_from_embedded_header_config(tmp_path):
    out1 = tmp_path / "first.csv"
    args = ["scan", "--ay-start", "20", "--ay-stop", "70", "--ay-steps", "3",
            "--az-start", "10", "--az-stop", "60", "--az-steps", "3"]
    assert main(args + ["--out", str(out1)]) == 0
    header, _ = read_artifact_csv(out1)
    embedded = next(l for l in header if l.startswith("# config "))
    resolved = json.loads(embedded[len("# config "):])
    cfg_path = tmp_path / "replay.yaml"
    cfg_path.write_text(yaml.safe_dump(resolved))
    out2 = tmp_path / "second.csv"
    assert main(args + ["--config", str(cfg_path), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_scan_si_units(tmp_path):
    out = tmp_path / "scan.csv"
    rc = main(["--units", "si", "scan", "--ay-start", "0", "--ay-stop", "0",
               "--ay-steps", "1", "--az-start", "0", "--az-stop", "0",
               "--az-steps", "1", "--out", str(out)])
    assert rc == 0
    _, rows = read_artifact_csv(out)
    assert "Bx_T" in rows[0]
    assert float(rows[0]["Bx_T"]) < 0.1  # tesla, not millitesla


def test_calibrate_round_trip(tmp_path):
    spec = default_magnet_spec()
    rng = np.random.default_rng(0)
    rows = []
    for mass in range(2):
        for _ in range(8):
            ay = rng.uniform(20, 80)
            az = rng.uniform(5, 85)
            pose = magnet_pose_for_field_direction(
                SAMPLE, np.deg2rad(ay), np.deg2rad(az), STANDOFF
            )
            B = cylinder_field(spec, pose, SAMPLE) * 1e3
            rows.append((ay, az, mass, B[0], B[1], B[2]))
    path = tmp_path / "cal.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha_y_deg", "alpha_z_deg", "mass_index", "Bx_mT", "By_mT", "Bz_mT"])
        w.writerows(rows)
    out = tmp_path / "cal.json"
    rc = main(["calibrate", "--input", str(path), "--standoff-m", str(STANDOFF),
               "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert abs(report["delta_alpha_y_deg"]) < 1e-6
    assert all(abs(v) < 1e-6 for v in report["delta_alpha_z_deg"])


def test_schedule_deterministic(tmp_path):
    args = ["schedule", "--b-start", "0.5", "--b-stop", "10", "--steps", "10"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    _, rows = read_artifact_csv(a)
    assert len(rows) == 10
    assert all(abs(float(r["error_mT"])) < 0.1 for r in rows)


def test_partition_walled(tmp_path, walled_config_path):
    out = tmp_path / "partition.csv"
    rc = main(["--config", walled_config_path, "partition",
               "--ay-start", "30", "--ay-stop", "85", "--ay-steps", "3",
               "--az-start", "5", "--az-stop", "85", "--az-steps", "3",
               "--out", str(out)])
    assert rc == 0
    _, rows = read_artifact_csv(out)
    statuses = {r["status"] for r in rows}
    assert "Reachable" in statuses and "Collision" in statuses


def test_replace_identity_without_environment(tmp_path):
    out = tmp_path / "plan.json"
    rc = main(["replace", "--ay", "20", "--az", "30", "--out", str(out)])
    assert rc == 0
    plan = json.loads(out.read_text())
    assert plan["identity"] is True
    assert plan["similarity"] == 1.0


def test_replace_walled_scenario(tmp_path, walled_config_path):
    out = tmp_path / "plan.json"
    rc = main(["--config", walled_config_path, "replace", "--ay", "30", "--az", "53",
               "--axis", "y", "--out", str(out)])
    assert rc == 0
    plan = json.loads(out.read_text())
    assert plan["identity"] is False
    assert plan["similarity"] >= 0.95


def test_replace_search_exhausted_exit_1(tmp_path, walled_config_path):
    out = tmp_path / "plan.json"
    rc = main(["--config", walled_config_path, "replace", "--ay", "30", "--az", "53",
               "--axis", "y", "--step-m", "0.0001", "--max-steps", "1",
               "--out", str(out)])
    assert rc == 1
    report = json.loads(out.read_text())
    assert report["error"] in ("NoReachableDisplacement", "FinalPoseForbidden")


def test_odmr_spectrum_output(tmp_path):
    out = tmp_path / "odmr.csv"
    rc = main(["odmr", "--bz", "3", "--points", "501", "--out", str(out)])
    assert rc == 0
    _, rows = read_artifact_csv(out)
    assert len(rows) == 501
    contrast = np.array([float(r["contrast"]) for r in rows])
    assert contrast.min() < 0.995  # visible dips


def _write_trajectory_csv(path, ay_deg, az_deg, B_mT=3.0):
    nv_axis = (np.deg2rad(97.6), np.deg2rad(64.1))
    gammas = field_polar_angle(np.deg2rad(ay_deg), np.deg2rad(az_deg), *nv_axis)
    fm, fp = resonances_from_cubic(2.8704e9, 1.8515e6, GAMMA_E_DEFAULT * B_mT * 1e-3,
                                   gammas)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha_yB_deg", "alpha_zB_deg", "f_minus_MHz", "f_plus_MHz",
                    "B_hall_mT"])
        for a, z, m, p in zip(ay_deg, az_deg, np.atleast_1d(fm), np.atleast_1d(fp)):
            w.writerow([a, z, m * 1e-6, p * 1e-6, B_mT])


def test_fit_nv_recovers_axis(tmp_path):
    path = tmp_path / "traj.csv"
    _write_trajectory_csv(path, [75.0, 95.0, 115.0, 135.0, 85.0, 125.0],
                          list(np.linspace(52.0, 77.0, 6)))
    out = tmp_path / "fit.json"
    rc = main(["fit-nv", "--input", str(path), "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert abs(report["alpha_y_nv_deg"] - 97.6) < 1.0
    assert abs(report["alpha_z_nv_deg"] - 64.1) < 1.0


def test_fit_nv_too_few_rows_exit_2(tmp_path):
    path = tmp_path / "short.csv"
    _write_trajectory_csv(path, [75.0, 95.0, 115.0], [52.0, 57.0, 62.0])
    assert main(["fit-nv", "--input", str(path)]) == 2


def test_fit_nv_degenerate_exit_1(tmp_path):
    path = tmp_path / "flat.csv"
    _write_trajectory_csv(path, [75.0] * 6, [52.0] * 6)
    assert main(["fit-nv", "--input", str(path)]) == 1


def test_fit_nv_missing_column_exit_2(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("alpha_yB_deg,alpha_zB_deg\n1,2\n")
    assert main(["fit-nv", "--input", str(path)]) == 2


def test_bad_config_path_exit_2(tmp_path):
    assert main(["--config", str(tmp_path / "nope.yaml"), "scan",
                 "--ay-start", "0", "--ay-stop", "0", "--ay-steps", "1",
                 "--az-start", "0", "--az-stop", "0", "--az-steps", "1"]) == 2


def test_unknown_units_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["--units", "gauss", "scan", "--ay-start", "0", "--ay-stop", "0",
              "--ay-steps", "1", "--az-start", "0", "--az-stop", "0",
              "--az-steps", "1"])
    assert exc.value.code == 2
