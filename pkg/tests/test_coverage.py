import numpy as np
import pytest

from cureuq import presets
from cureuq.core import constitutive as cm
from cureuq.core import coverage
from cureuq.core.calibrate import solve_nls
from cureuq.core.coverage import (
    draw_noise,
    generate_insilico,
    glass_transition_cures,
    glass_transition_data,
    insilico_files,
    noise_sigma,
    pilot_covariances,
    residual_diagnostics,
    run_coverage,
    sample_truth,
)
from cureuq.core.pipeline import build_model
from cureuq.exceptions import DomainError, PropagationError
from cureuq.schemas.calibration import StepSpec
from cureuq.schemas.coverage import (
    CoverageCase,
    GaussianNoise,
    HeteroCpNoise,
    HeteroCuringNoise,
    UniformNoise,
)
from cureuq.schemas.datasets import Dataset
from cureuq.schemas.materials import CuringState


def _case(**overrides):
    value = {"case": "sparse_tg", "noise": {"kind": "gaussian", "sigma": 4.0}}
    value.update(overrides)
    return CoverageCase.model_validate(value)


def _curing_data(c):
    c = np.asarray(c, dtype=float)
    return Dataset(
        label="kinetics",
        predictors={"theta": np.full_like(c, 100.0), "c": c},
        observations=np.zeros_like(c),
    )


def test_noise_sigma_models(reference):
    data = _curing_data([0.0, 0.5, 1.0])
    gaussian = noise_sigma(GaussianNoise(sigma=2.0), data, reference)
    np.testing.assert_allclose(gaussian, 2.0)
    np.testing.assert_allclose(
        noise_sigma(UniformNoise(sigma_u=3.0), data, reference), 3.0 / np.sqrt(3.0)
    )
    hetero = HeteroCuringNoise()
    expected = 1e-5 / (data.column("c") + 1e-3) + 4.5e-5 * data.column("c")
    np.testing.assert_allclose(noise_sigma(hetero, data, reference), expected)


def test_heat_capacity_noise_peaks_at_glass_transition(reference):
    c = np.array([0.5, 0.5])
    theta_g = float(cm.glass_transition(0.5, reference.glass_transition))
    data = Dataset(
        label="heat_capacity",
        predictors={"theta": np.array([theta_g, theta_g + 100.0]), "c": c},
        observations=np.zeros(2),
    )
    sigma = noise_sigma(HeteroCpNoise(), data, reference)
    assert sigma[0] == pytest.approx(16.3 * 8.0)
    assert sigma[1] == pytest.approx(16.3, rel=1e-6)


def test_unknown_noise_model(reference):
    with pytest.raises(DomainError):
        noise_sigma(object(), _curing_data([0.5]), reference)


def test_uniform_noise_stays_in_support(reference, rng):
    data = _curing_data(np.linspace(0.0, 1.0, 500))
    draws = draw_noise(UniformNoise(sigma_u=0.5), data, reference, rng)
    assert np.all(np.abs(draws) <= 0.5)
    assert draws.std() == pytest.approx(0.5 / np.sqrt(3.0), rel=0.15)


def test_insilico_kinetics_files(reference, rng):
    case = _case(case="kinetics", noise={"kind": "gaussian", "sigma": 4e-5}, n_d=20)
    files = insilico_files(case, reference, rng)
    kinetics = [presets.kinetics_file(t) for t in presets.KINETICS_TEMPERATURES]
    assert sorted(files) == sorted(["glass_transition.csv", *kinetics])
    assert files["glass_transition.csv"].n == 5
    for name, theta in zip(kinetics, presets.KINETICS_TEMPERATURES):
        assert files[name].n == 20
        np.testing.assert_array_equal(files[name].column("theta"), theta)


def test_clean_heat_capacity_lies_on_model(reference, rng):
    case = _case(
        case="heat_capacity", noise={"kind": "gaussian", "sigma": 16.3}, n_d=50
    )
    data = insilico_files(case, reference, rng, clean=True)["heat_capacity.csv"]
    assert data.n == 50 * len(presets.CP_CURES)
    state = CuringState.from_celsius(data.column("theta"), data.column("c"))
    expected = cm.specific_heat(
        state, reference.heat_capacity, reference.glass_transition
    )
    np.testing.assert_allclose(data.observations, expected)


def test_generate_insilico_splits_kinetics(reference, rng):
    case = _case(case="kinetics", noise={"kind": "gaussian", "sigma": 4e-5}, n_d=30)
    data = generate_insilico(case, reference, rng)
    steps = {"glass_transition", "kinetics_chemical", "kinetics_diffusion"}
    assert set(data) == steps
    assert data["kinetics_chemical"].label == "kinetics_chemical"
    assert data["kinetics_chemical"].n + data["kinetics_diffusion"].n == 5 * 30


def test_sparse_tg_coverage_report():
    report = run_coverage(_case(n_cov=40), seed=11)
    assert report.repetitions == 40
    assert report.dropped == 0
    assert [p.name for p in report.parameters] == ["r_f", "theta_g0", "theta_g1"]
    for p in report.parameters:
        assert p.student_t >= p.normal
        assert p.normal_noise_only is None
        assert p.student_t_noise_only is None


def test_coverage_is_reproducible_across_workers():
    case = _case(n_cov=12, n_d_tg=8)
    serial = run_coverage(case, seed=5)
    threaded = run_coverage(case, seed=5, workers=3)
    assert serial.model_dump() == threaded.model_dump()


def test_kinetics_coverage_reports_noise_only_columns():
    case = _case(
        case="kinetics",
        noise={"kind": "gaussian", "sigma": 4e-5},
        n_cov=4,
        n_d=20,
        n_d_tg=20,
    )
    report = run_coverage(case, seed=2)
    b_d = report.coverage("b_d")
    assert b_d.normal_noise_only is not None
    assert b_d.normal >= b_d.normal_noise_only
    assert b_d.student_t >= b_d.student_t_noise_only
    assert report.coverage("a_pre").normal_noise_only is None


def test_marginal_truth_varies_only_case_blocks():
    case = _case(n_d_tg=10, truth_mode="marginal")
    pilot = pilot_covariances(case, seed=3)
    truth = sample_truth(case, pilot, np.random.default_rng(0))
    reference = presets.reference_material()
    assert truth.glass_transition != reference.glass_transition
    assert truth.kinetics == reference.kinetics
    assert truth.heat_capacity == reference.heat_capacity


def test_residual_diagnostics_sorted_by_cure(reference, rng):
    data = glass_transition_data(12, reference)
    data = data.with_observations(data.observations + rng.normal(0.0, 4.0, data.n))
    step = StepSpec.model_validate(presets.default_pipeline_steps()[0])
    fit = solve_nls(build_model(step), data, step.init)
    frame = residual_diagnostics(fit, data)
    assert list(frame.columns) == ["c", "abs_residual"]
    assert frame["c"].is_monotonic_increasing
    assert (frame["abs_residual"] >= 0).all()
    assert len(frame) == 12


@pytest.mark.parametrize("name", sorted(presets.coverage_presets))
def test_presets_are_valid_cases(name):
    case = CoverageCase.model_validate(presets.coverage_presets[name]["value"])
    assert case.n_cov >= 200



def test_glass_transition_cures_follow_design():
    cures = glass_transition_cures(5)
    lo, hi = presets.GLASS_CURE_RANGE
    assert cures[0] == pytest.approx(lo)
    assert cures[-1] == pytest.approx(hi)
    assert np.all(np.diff(cures) > 0)
    assert cures[2] == pytest.approx(lo + (hi - lo) * 0.5**presets.GLASS_CURE_SPACING)


def test_collapsed_diffusion_width_counts_as_miss(monkeypatch):
    monkeypatch.setattr(coverage, "_diffusion_fit", lambda *args: (None, None))
    case = _case(
        case="kinetics",
        noise={"kind": "gaussian", "sigma": 4e-5},
        n_cov=3,
        n_d=20,
        n_d_tg=20,
    )
    report = run_coverage(case, seed=2)
    assert report.dropped == 0
    b_d = report.coverage("b_d")
    assert (b_d.normal, b_d.student_t) == (0.0, 0.0)
    assert (b_d.normal_noise_only, b_d.student_t_noise_only) == (0.0, 0.0)
    assert report.coverage("a_pre").normal_noise_only is None

    marginal = case.model_copy(update={"truth_mode": "marginal"})
    with pytest.raises(PropagationError, match="collapsed"):
        pilot_covariances(marginal, seed=2)


def _preset(name, **overrides):
    return CoverageCase.model_validate(
        {**presets.coverage_presets[name]["value"], **overrides}
    )


@pytest.mark.slow
def test_sparse_tg_normal_intervals_undercover():
    report = run_coverage(_preset("sparse_tg_nd5"), seed=1, workers=4)
    assert report.dropped <= 50
    for p in report.parameters:
        assert 0.65 <= p.normal <= 0.76
        assert 0.86 <= p.student_t <= 0.94


@pytest.mark.slow
def test_dense_tg_coverage_is_nominal():
    report = run_coverage(_preset("sparse_tg_nd50"), seed=1, workers=4)
    for p in report.parameters:
        assert 0.91 <= p.normal <= 0.97
        assert 0.91 <= p.student_t <= 0.97


@pytest.mark.slow
@pytest.mark.parametrize(
    "noise",
    [
        {"kind": "gaussian", "sigma": 4e-5},
        {"kind": "uniform", "sigma_u": np.sqrt(3.0) * 4e-5},
        {"kind": "hetero_curing"},
    ],
    ids=["gaussian", "uniform", "hetero"],
)
def test_propagation_widens_diffusion_width_coverage(noise):
    report = run_coverage(_preset("kinetics_desk", noise=noise), seed=3, workers=4)
    assert report.dropped <= 15
    b_d = report.coverage("b_d")
    assert b_d.normal - b_d.normal_noise_only >= 0.01
    assert b_d.student_t >= b_d.student_t_noise_only
    if noise["kind"] == "gaussian":
        assert b_d.normal >= 0.86


@pytest.mark.slow
def test_heat_capacity_needs_glass_transition_propagation():
    case = _preset("heat_capacity_desk", truth_mode="conditional", n_d_tg=5)
    report = run_coverage(case, seed=5, workers=4)
    assert report.dropped <= 10
    for p in report.parameters:
        assert p.normal_noise_only < 0.30
        assert p.normal >= 0.55


@pytest.mark.slow
def test_heat_capacity_coverage_with_dense_glass_transition():
    case = _preset("heat_capacity_desk", truth_mode="conditional", n_d_tg=50)
    report = run_coverage(case, seed=5, workers=4)
    normal = [p.normal for p in report.parameters]
    assert min(normal) >= 0.88
    assert np.mean(normal) <= 0.98
