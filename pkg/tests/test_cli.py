import json

import pandas as pd
import pytest

from cureuq import presets
from cureuq.main import run
from cureuq.storage import read_parameter_sets


@pytest.fixture
def clean_data(tmp_path):
    target = tmp_path / "data"
    argv = ["gen-data", "--case", "pipeline", "--clean", "--out", str(target)]
    assert run(argv) == 0
    return target


def test_gen_data_pipeline_layout(clean_data):
    names = {p.name for p in clean_data.iterdir()}
    kinetics = {presets.kinetics_file(t) for t in presets.KINETICS_TEMPERATURES}
    assert kinetics <= names
    assert {
        "glass_transition.csv",
        "thermal_expansion.csv",
        "chemical_shrinkage.csv",
        "glass_expansion.csv",
        "heat_capacity.csv",
        "diffusivity.csv",
        "pipeline.yaml",
        "manifest.json",
    } <= names
    frame = pd.read_csv(clean_data / "kinetics_080C.csv")
    assert list(frame.columns) == ["theta", "c", "c_dot"]
    manifest = json.loads((clean_data / "manifest.json").read_text())
    assert manifest["command"] == "gen-data:pipeline"
    assert "pipeline.yaml" in manifest["outputs"]


def test_gen_data_is_byte_reproducible(tmp_path):
    for name, seed in (("a", "4"), ("b", "4"), ("c", "5")):
        args = ["gen-data", "--case", "kinetics", "--nd", "12", "--seed", seed]
        assert run([*args, "--out", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "kinetics_100C.csv").read_bytes()
    assert first == (tmp_path / "b" / "kinetics_100C.csv").read_bytes()
    assert first != (tmp_path / "c" / "kinetics_100C.csv").read_bytes()
    assert len(first.splitlines()) == 13
    assert b"\r\n" not in first


def test_calibrate_recovers_clean_data(clean_data, tmp_path):
    out = tmp_path / "fits"
    config = str(clean_data / "pipeline.yaml")
    code = run(["calibrate", "--config", config, "--out", str(out)])
    assert code == 0
    fit = json.loads((out / "heat_capacity_fit.json").read_text())
    assert fit["names"] == ["a1", "a2", "a3", "a4", "a5"]
    assert fit["converged"]
    a1 = presets.REFERENCE_VALUES["a1"]
    assert fit["kappa_star"][0] == pytest.approx(a1, rel=1e-5)
    assert "jacobian" not in fit
    assert (out / "manifest.json").exists()


def test_propagate_writes_parameter_sets(tmp_path):
    data = tmp_path / "data"
    argv = ["gen-data", "--case", "pipeline", "--seed", "3", "--out", str(data)]
    assert run(argv) == 0
    out = tmp_path / "sets"
    code = run(
        [
            "propagate",
            "--config",
            str(data / "pipeline.yaml"),
            "--method",
            "nls",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    sets = read_parameter_sets(out)
    assert len(sets) == 8
    assert {s.step for s in sets} == {s["id"] for s in presets.default_pipeline_steps()}


def test_coverage_command_writes_report(tmp_path):
    code = run(
        [
            "coverage",
            "--case",
            "sparse_tg",
            "--ncov",
            "10",
            "--seed",
            "3",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    frame = pd.read_csv(tmp_path / "coverage_sparse_tg.csv")
    assert list(frame["parameter"]) == ["r_f", "theta_g0", "theta_g1"]
    assert frame["normal_noise_only"].isna().all()
    report = json.loads((tmp_path / "coverage_sparse_tg.json").read_text())
    assert report["repetitions"] + report["dropped"] == 10


@pytest.mark.parametrize(
    "argv",
    [
        ["no-such-command"],
        ["coverage", "--out", "unused"],
        ["coverage", "--preset", "sparse_tg_nd7"],
        ["coverage", "--case", "sparse_tg", "--noise", "hetero"],
    ],
)
def test_usage_errors_exit_with_two(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 2


def test_simulation_without_enthalpy_fails(tmp_path):
    assert run(["simulate", "--out", str(tmp_path)]) == 1
    assert not (tmp_path / "probe_top.csv").exists()


def test_forward_uq_without_enthalpy_fails(tmp_path):
    argv = ["forward-uq", "--mode", "case_i", "--method", "fosm"]
    argv += ["--out", str(tmp_path)]
    assert run(argv) == 1


def test_missing_config_file_fails(tmp_path):
    assert run(["calibrate", "--config", str(tmp_path / "absent.yaml")]) == 1


def test_invalid_config_exits_with_two(tmp_path):
    config = tmp_path / "pipeline.yaml"
    config.write_text("steps: []\n", encoding="utf-8")
    assert run(["calibrate", "--config", str(config), "--out", str(tmp_path)]) == 2


def test_version_flag(capsys):
    assert run(["--version"]) == 0
    assert "cureuq" in capsys.readouterr().out
