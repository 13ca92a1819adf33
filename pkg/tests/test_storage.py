import json

import numpy as np
import pytest

from cureuq import storage
from cureuq.exceptions import ConfigurationError
from cureuq.schemas.calibration import Method, PipelineConfig, UncertainParameterSet


def test_last_column_is_the_observation(tmp_path):
    path = tmp_path / "heat_capacity.csv"
    path.write_text("theta,c,cp\n20,0.1,1200\n60,0.5,1500\n", encoding="utf-8")
    data = storage.read_dataset(path)
    assert data.label == "heat_capacity"
    assert data.observation_name == "cp"
    assert sorted(data.predictors) == ["c", "theta"]
    np.testing.assert_array_equal(data.observations, [1200.0, 1500.0])


def test_named_observation_column(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("y,x\n1,2\n3,4\n", encoding="utf-8")
    data = storage.read_dataset(path, observation="y")
    np.testing.assert_array_equal(data.column("x"), [2.0, 4.0])
    with pytest.raises(ConfigurationError, match="no column"):
        storage.read_dataset(path, observation="z")


def test_missing_data_file(tmp_path):
    with pytest.raises(ConfigurationError, match="does not exist"):
        storage.read_dataset(tmp_path / "absent.csv")


def test_written_csv_uses_lf_and_header(tmp_path):
    path = tmp_path / "out" / "curve.csv"
    data = storage.read_dataset(_write(tmp_path / "in.csv", "x,y\n1,0.1\n2,0.2\n"))
    storage.write_dataset(data, path)
    assert path.read_bytes() == b"x,y\n1.0,0.1\n2.0,0.2\n"


def test_bad_yaml_is_a_configuration_error(tmp_path):
    path = _write(tmp_path / "pipeline.yaml", "steps: [unclosed\n")
    with pytest.raises(ConfigurationError, match="not valid YAML"):
        storage.load_yaml(path, PipelineConfig)


def test_mc_parameter_set_keeps_its_sample(tmp_path, rng):
    sample = rng.normal(size=(6, 2))
    noise = np.stack([np.eye(2) * (i + 1) for i in range(6)])
    uset = UncertainParameterSet(
        step="glass_transition",
        names=["r_f", "theta_g0"],
        values=[0.4, -5.0],
        covariance_noise=np.diag([1e-4, 1.0]),
        covariance_prop=np.zeros((2, 2)),
        empirical=sample,
        empirical_noise=noise,
        method=Method.MC,
    )
    paths = storage.write_parameter_set(uset, tmp_path)
    assert sorted(p.name for p in paths) == [
        "glass_transition.json",
        "glass_transition_sample_covariances.csv",
        "glass_transition_samples.csv",
    ]
    loaded = storage.read_parameter_set(tmp_path / "glass_transition.json")
    np.testing.assert_allclose(loaded.empirical, sample)
    np.testing.assert_allclose(loaded.empirical_noise, noise)
    np.testing.assert_allclose(loaded.covariance_total, uset.covariance_total)


def test_parameter_sets_skip_fits_and_manifest(tmp_path):
    uset = UncertainParameterSet(
        step="heat_capacity",
        names=["a1"],
        values=[1.0],
        covariance_noise=[[0.1]],
        covariance_prop=[[0.0]],
        method=Method.FOSM,
    )
    storage.write_parameter_set(uset, tmp_path)
    storage.write_json({"kappa_star": [1.0]}, tmp_path / "heat_capacity_fit.json")
    storage.write_manifest(tmp_path, "propagate", seed=7)
    sets = storage.read_parameter_sets(tmp_path)
    assert [s.step for s in sets] == ["heat_capacity"]
    with pytest.raises(ConfigurationError):
        storage.read_parameter_sets(tmp_path / "absent")


def test_parameter_sets_filtered_by_step(tmp_path):
    for step in ("heat_capacity", "thermal_expansion"):
        uset = UncertainParameterSet(
            step=step,
            names=["a1"],
            values=[1.0],
            covariance_noise=[[0.1]],
            covariance_prop=[[0.0]],
            method=Method.FOSM,
        )
        storage.write_parameter_set(uset, tmp_path)
    wanted = ["heat_capacity", "conductivity"]
    sets = storage.read_parameter_sets(tmp_path, steps=wanted)
    assert [s.step for s in sets] == ["heat_capacity"]
    assert len(storage.read_parameter_sets(tmp_path)) == 2


def test_manifest_records_config_hash(tmp_path):
    config = _write(tmp_path / "pipeline.yaml", "steps: []\n")
    path = storage.write_manifest(
        tmp_path / "run", "calibrate", seed=3, config_path=config, outputs=[config]
    )
    manifest = json.loads(path.read_text(encoding="utf-8"))
    assert manifest["seed"] == 3
    assert len(manifest["config_sha256"]) == 64
    assert manifest["outputs"] == ["pipeline.yaml"]
    assert manifest["versions"]["cureuq"]


def test_label_follows_file_name(tmp_path, faker):
    names = {faker.unique.slug() for _ in range(5)}
    for name in names:
        _write(tmp_path / f"{name}.csv", "c,theta_g\n0.5,80\n")
    labels = {storage.read_dataset(p).label for p in tmp_path.glob("*.csv")}
    assert labels == names


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path
