from __future__ import annotations

import csv
import io
import json

import pytest
import yaml

from qrdm_nevpt2.cli import main
from qrdm_nevpt2.config import RunConfig
from qrdm_nevpt2.pipeline import (
    CSV_COLUMNS,
    WORKERS_ENV,
    CurvePoint,
    load_results,
    report,
    run_pipeline,
    worker_count,
)
from qrdm_nevpt2.validation import ConfigError

from conftest import DATA, GOLDEN, load_system


def write_config(tmp_path, name="scan", points=(0.74, 2.00), **sections) -> str:
    cfg = {
        "name": name,
        "output_dir": str(tmp_path / "out"),
        "active_space": {"n_active": 2, "n_active_electrons": 2},
        "points": [{"label": r, "fcidump": str(DATA / f"h2_631g_r{r:.2f}.FCIDUMP")} for r in points],
        "state_prep": {"mode": "casci"},
        "measurement": {"mode": "oracle"},
        "gamma4": {"mode": "none"},
    }
    cfg.update(sections)
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def read_csv(path):
    return list(csv.DictReader(open(path)))


# configuration

def test_validate_ok(tmp_path, capsys):
    assert main(["validate", write_config(tmp_path)]) == 0
    assert "ok (2 points)" in capsys.readouterr().out


@pytest.mark.parametrize("sections, message", [
    ({"measurement": {"mode": "shots"}}, "seed is required"),
    ({"measurement": {"mode": "oracle", "pmsv": True}}, "pmsv only applies"),
    ({"gamma4": {"mode": "cu5"}}, "gamma4.mode"),
    ({"measurement": {"mode": "shots", "seed": 1, "readout": 2.0}}, "readout"),
    ({"state_prep": {"mode": "vqe-sampled"}}, "state_prep.seed"),
])
def test_invalid_configs_rejected(tmp_path, capsys, sections, message):
    assert main(["validate", write_config(tmp_path, **sections)]) == 2
    assert message in capsys.readouterr().err


def test_unknown_keys_and_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"name": "x", "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"name": "x", "points": []})
    cfg = RunConfig.load(write_config(tmp_path))
    bad = RunConfig.from_dict({**yaml.safe_load(open(write_config(tmp_path))),
                               "points": [{"label": 1.0, "fcidump": "nowhere.FCIDUMP"}]}, tmp_path)
    assert any("not found" in p for p in bad.validate())
    assert cfg.validate() == []


def test_many_electrons_need_gamma4(tmp_path):
    path = write_config(tmp_path, active_space={"n_active": 4, "n_active_electrons": 4})
    assert any("gamma4 mode 'none'" in p for p in RunConfig.load(path).validate())


def test_overrides(tmp_path):
    cfg = RunConfig.load(write_config(tmp_path)).with_overrides(measurement="shots", shots=500, seed=3, gamma4="cu4")
    assert (cfg.measurement.mode, cfg.measurement.shots, cfg.measurement.seed) == ("shots", 500, 3)
    assert cfg.gamma4.mode == "cu4"


# runs

def test_run_writes_points_and_aggregates(tmp_path, capsys):
    assert main(["run", write_config(tmp_path)]) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == [
        "point_0.740000.json", "point_2.000000.json", "scan.csv", "scan.dat"]
    rows = read_csv(out / "scan.csv")
    assert tuple(rows[0]) == CSV_COLUMNS
    for row, r in zip(rows, (0.74, 2.00)):
        assert row["status"] == "ok"
        assert float(row["e_total"]) == pytest.approx(float(row["e_reference"]) + float(row["e2"]), abs=1e-12)
        assert float(row["e2"]) == pytest.approx(GOLDEN[f"h2_631g_r{r:.2f}"]["e_nevpt2_pyscf"], abs=1e-8)
        # diagnostics that do not apply are explicit nulls
        assert row["pmsv_retention"] == "null" and row["vqe_energy"] == "null"
    assert "e_total" in capsys.readouterr().out


def test_vqe_and_plan_measurement(tmp_path):
    path = write_config(tmp_path, points=(0.74,), state_prep={"mode": "vqe-exact"},
                        measurement={"mode": "exact-plan"}, nevpt2={"oracle_check": True})
    [pt] = run_pipeline(RunConfig.load(path))
    assert pt.status == "ok"
    assert pt.diagnostics["vqe_converged"] is True
    assert pt.e_reference == pytest.approx(load_system("h2_631g_r0.74").casci.total_energy, abs=1e-8)
    assert pt.diagnostics["oracle_max_class_error"] < 1e-7
    assert pt.diagnostics["n_measurement_sets"] > 0


def test_stretched_state_outside_reference_sector(tmp_path):
    path = write_config(tmp_path, points=(2.80,), active_space={"n_active": 4, "n_active_electrons": 4},
                        measurement={"mode": "exact-plan"}, gamma4={"mode": "exact"})
    cfg = RunConfig.from_dict({**yaml.safe_load(open(path)),
                               "points": [{"label": 2.8, "fcidump": str(DATA / "beh2_sto3g_r2.80.FCIDUMP")}]})
    [pt] = run_pipeline(cfg, workers=1)
    assert pt.status == "ok"
    assert pt.e2 == pytest.approx(GOLDEN["beh2_sto3g_r2.80"]["e_nevpt2_pyscf"], abs=1e-8)


def test_shot_runs_are_byte_identical(tmp_path):
    sections = {"measurement": {"mode": "shots", "shots": 2000, "seed": 11, "readout": 0.02, "pmsv": True}}
    a = RunConfig.load(write_config(tmp_path / "a", **sections))
    b = RunConfig.load(write_config(tmp_path / "b", **sections))
    run_pipeline(a)
    run_pipeline(b)
    assert (a.output_dir / "scan.csv").read_bytes() == (b.output_dir / "scan.csv").read_bytes()
    retention = [float(r["pmsv_retention"]) for r in read_csv(a.output_dir / "scan.csv")]
    assert all(0.5 < x < 1.0 for x in retention)


def test_workers_env_matches_serial(tmp_path, monkeypatch):
    sections = {"measurement": {"mode": "shots", "shots": 1000, "seed": 5}}
    serial = RunConfig.load(write_config(tmp_path / "s", **sections))
    par = RunConfig.load(write_config(tmp_path / "p", **sections))
    run_pipeline(serial, workers=1)
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert worker_count() == 2
    run_pipeline(par)
    assert (serial.output_dir / "scan.csv").read_bytes() == (par.output_dir / "scan.csv").read_bytes()


def test_worker_env_validation(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "many")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.setenv(WORKERS_ENV, "0")
    assert worker_count() == 1


def test_failed_point_is_isolated(tmp_path, capsys):
    broken = tmp_path / "broken.FCIDUMP"
    broken.write_text("&FCI NORB=2, NELEC=2\n&END\n not numbers\n")
    path = write_config(tmp_path)
    data = yaml.safe_load(open(path))
    data["points"].append({"label": 9.0, "fcidump": str(broken)})
    open(path, "w").write(yaml.safe_dump(data))
    assert main(["run", path]) == 1
    assert "failed points: [9.0]" in capsys.readouterr().err
    rows = read_csv(tmp_path / "out" / "scan.csv")
    assert [r["status"] for r in rows] == ["ok", "ok", "failed"]
    assert rows[2]["e2"] == "null" and rows[2]["error"] != "null"
    dat = (tmp_path / "out" / "scan.dat").read_text().splitlines()
    assert dat[-1].startswith("# failed")


def test_cu4_scan_deviation_table(tmp_path):
    from conftest import ROOT_CONFIGS

    cfg = RunConfig.load(ROOT_CONFIGS / "beh2_cu4_scan.yaml").with_overrides(output_dir=tmp_path)
    results = run_pipeline(cfg, workers=1)
    assert len(results) == 5
    rows = read_csv(tmp_path / "beh2_cu4_scan_deviations.csv")
    assert len(rows) == 5 * 4
    by = {(float(r["label"]), r["variant"]): float(r["abs_deviation"]) for r in rows}
    for pt in results:
        assert by[(pt.label, "exact")] == 0.0
        assert by[(pt.label, "cu4-pdm-filtered")] <= by[(pt.label, "cu4")]
    # CU(4) error grows from equilibrium to the stretched region
    assert by[(1.33, "cu4")] < by[(2.8, "cu4")]


# reports

def test_report_formats(tmp_path, capsys):
    main(["run", write_config(tmp_path)])
    capsys.readouterr()
    out = str(tmp_path / "out")
    assert main(["report", out, "--format", "csv"]) == 0
    assert capsys.readouterr().out == (tmp_path / "out" / "scan.csv").read_text()
    assert main(["report", out, "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [d["label"] for d in data] == [0.74, 2.0]
    assert main(["report", out]) == 0
    assert capsys.readouterr().out.startswith("label")
    assert main(["report", str(tmp_path / "empty")]) == 1


def test_point_json_round_trip():
    pt = CurvePoint(1.0, e_reference=-1.0, e2=-0.1, e_total=-1.1, diagnostics={"vqe_energy": -1.0})
    back = CurvePoint.from_dict(json.loads(report([pt], "json")))
    assert back.to_dict() == pt.to_dict()
    assert load_results("/nonexistent") == []
    with pytest.raises(ValueError):
        report([pt], "xml")


def test_plan_subcommand(tmp_path, capsys):
    path = write_config(tmp_path, points=(0.74,), measurement={"mode": "exact-plan"})
    dest = tmp_path / "plan.csv"
    assert main(["plan", path, "--output", str(dest)]) == 0
    rows = read_csv(dest)
    assert [r["approximation"] for r in rows] == ["None", "CU(4)", "CU(4)-PDM-filtered"]
    assert rows[0]["active_space"] == "(2,2)"
    assert int(rows[0]["rdm_sets"]) >= 1
    assert capsys.readouterr().out == dest.read_text()


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
    assert main(["run", "/nonexistent.yaml"]) == 2


def test_report_text_is_stable():
    pts = [CurvePoint(0.5, e_reference=-1.0, e2=-0.01, e_total=-1.01)]
    text = report(pts, "table").decode()
    assert text.splitlines()[0].split() == ["label", "status", "e_reference", "e2", "e_total"]
    assert io.StringIO(report(pts, "dat").decode()).readline().startswith("# label")
