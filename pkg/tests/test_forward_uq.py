import numpy as np
import pytest

from cureuq import presets
from cureuq.core.forward_uq import (
    FORWARD_STEPS,
    boundary_moments,
    boundary_names,
    fosm_forward,
    fosm_propagate,
    inflate_variance,
    material_sampler,
    mc_forward,
    mc_propagate,
    reference_material_sets,
    resample,
    sample_boundary_inputs,
    study_inputs,
)
from cureuq.core.simulate import default_curing_path
from cureuq.exceptions import (
    ConfigurationError,
    DomainError,
    PropagationError,
)
from cureuq.schemas.calibration import Method, UncertainParameterSet
from cureuq.schemas.simulation import (
    DirichletPath,
    ScenarioConfig,
    SimResult,
    SolverOptions,
)
from cureuq.schemas.uq import (
    BoundaryUncertainty,
    ForwardStudy,
    MaterialUncertainty,
    StudyMode,
)

A = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]])
MEAN = np.array([1.0, -2.0, 0.5])
COV = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.0], [0.0, 0.0, 0.25]])


def _linear(x):
    return A @ x


def _set(step, names, values, cov, method=Method.FOSM, **extra):
    k = len(names)
    return UncertainParameterSet(
        step=step,
        names=names,
        values=np.asarray(values, dtype=float),
        covariance_noise=np.asarray(cov, dtype=float),
        covariance_prop=np.zeros((k, k)),
        method=method,
        **extra,
    )


@pytest.fixture
def small_scenario():
    path = DirichletPath(nodes=[(0.0, 20.0), (600.0, 80.0), (1800.0, 80.0)])
    return ScenarioConfig(
        h_c=4.0e5,
        path=path,
        epoxy_cells=6,
        base_cells=2,
        options=SolverOptions(rel_tol=1e-3, abs_tol_theta=1e-2, abs_tol_c=1e-4),
    )


def test_fosm_is_exact_for_linear_models():
    baseline, std, evaluations = fosm_propagate(_linear, MEAN, COV)
    np.testing.assert_allclose(baseline, A @ MEAN)
    np.testing.assert_allclose(std, np.sqrt(np.diag(A @ COV @ A.T)), rtol=1e-8)
    assert evaluations == 7


def test_fosm_skips_zero_variance_inputs():
    cov = np.diag([0.04, 0.0, 0.0])
    baseline, std, evaluations = fosm_propagate(_linear, MEAN, cov)
    assert evaluations == 3
    np.testing.assert_allclose(std, 0.2 * np.abs(A[:, 0]), rtol=1e-8)


def test_fosm_without_uncertainty():
    baseline, std, evaluations = fosm_propagate(_linear, MEAN, np.zeros((3, 3)))
    assert evaluations == 1
    np.testing.assert_array_equal(std, 0.0)


def test_fosm_names_failing_input():
    def fragile(x):
        if x[2] > MEAN[2]:
            raise DomainError("solver diverged")
        return A @ x

    with pytest.raises(PropagationError, match="b_d"):
        fosm_propagate(fragile, MEAN, COV, names=["a1", "a2", "b_d"])


def test_mc_agrees_with_fosm_on_linear_model():
    factor = np.linalg.cholesky(COV)

    def sampler(rng):
        return MEAN + factor @ rng.standard_normal(3)

    mean, std, kept, failed = mc_propagate(_linear, sampler, 4000, seed=1)
    assert (kept, failed) == (4000, 0)
    _, fosm_std, _ = fosm_propagate(_linear, MEAN, COV)
    np.testing.assert_allclose(mean, A @ MEAN, atol=0.05)
    np.testing.assert_allclose(std, fosm_std, rtol=0.05)


def test_mc_is_reproducible_across_workers():
    def sampler(rng):
        return rng.normal(size=3)

    serial = mc_propagate(_linear, sampler, 50, seed=9)
    threaded = mc_propagate(_linear, sampler, 50, seed=9, workers=4)
    np.testing.assert_array_equal(serial[0], threaded[0])
    np.testing.assert_array_equal(serial[1], threaded[1])


def test_mc_tolerates_few_failures(caplog):
    def sampler(rng):
        return rng.uniform(size=3)

    def flaky(x):
        if x[0] > 0.98:
            raise DomainError("negative cure")
        return A @ x

    mean, std, kept, failed = mc_propagate(flaky, sampler, 400, seed=2)
    assert kept + failed == 400
    assert 0 < failed <= 20
    assert "Dropped" in caplog.text


def test_mc_rejects_many_failures():
    def sampler(rng):
        return rng.uniform(size=3)

    def flaky(x):
        if x[0] > 0.5:
            raise DomainError("negative cure")
        return A @ x

    with pytest.raises(PropagationError):
        mc_propagate(flaky, sampler, 100, seed=2)


def test_mc_needs_two_runs():
    with pytest.raises(DomainError):
        mc_propagate(_linear, lambda rng: MEAN, 1, seed=0)


def test_inflate_variance_scales_noise_and_sample():
    rows = np.array([[1.0], [3.0]])
    mc = _set(
        "kinetics_diffusion",
        ["b_d"],
        [2.0],
        [[0.5]],
        method=Method.MC,
        empirical=rows,
        empirical_noise=np.full((2, 1, 1), 0.5),
    )
    fosm = _set("heat_capacity", ["a5"], [0.07], [[1e-6]])
    inflated_mc, inflated_fosm = inflate_variance([mc, fosm], 4.0)
    np.testing.assert_allclose(inflated_mc.empirical, [[0.0], [4.0]])
    np.testing.assert_allclose(inflated_mc.empirical_noise, 2.0)
    np.testing.assert_allclose(inflated_fosm.delta_total(), 2.0 * fosm.delta_total())
    np.testing.assert_array_equal(inflated_fosm.values, fosm.values)
    with pytest.raises(DomainError):
        inflate_variance([fosm], 0.0)


def test_reference_sets_cover_forward_parameters():
    sets = reference_material_sets()
    assert [s.step for s in sets] == list(FORWARD_STEPS)
    assert sum(len(s.names) for s in sets) == 17
    by_step = {s.step: s for s in sets}
    fosm = presets.REFERENCE_UNCERTAINTY["fosm"]
    assert by_step["kinetics_diffusion"].delta_total()[0] == pytest.approx(fosm["b_d"])
    np.testing.assert_array_equal(by_step["glass_transition"].covariance_prop, 0.0)


def test_material_sampler_redraws_inadmissible_sets(reference):
    wide = _set("kinetics_chemical", ["g_fac"], [0.5], [[0.36]])
    draw = material_sampler([wide], reference)
    rng = np.random.default_rng(4)
    values = np.array([draw(rng)[0] for _ in range(200)])
    assert np.all((values > 0.0) & (values < 1.0))


def test_material_sampler_gives_up(reference):
    hopeless = _set("glass_transition", ["r_f"], [-1.0], [[1e-12]])
    draw = material_sampler([hopeless], reference)
    with pytest.raises(DomainError, match="admissible"):
        draw(np.random.default_rng(0))


def test_material_sampler_uses_empirical_rows(reference):
    rows = np.array([[4.0], [6.0], [8.0]])
    mc = _set(
        "kinetics_diffusion",
        ["b_d"],
        [6.0],
        [[0.0]],
        method=Method.MC,
        empirical=rows,
        empirical_noise=np.zeros((3, 1, 1)),
    )
    draw = material_sampler([mc], reference)
    rng = np.random.default_rng(1)
    drawn = {float(draw(rng)[0]) for _ in range(50)}
    assert drawn == {4.0, 6.0, 8.0}


def test_boundary_inputs_columns_and_supports():
    spec = BoundaryUncertainty()
    assert boundary_names(spec) == [f"path_{j}" for j in range(1, 8)] + ["h", "eps"]
    x = sample_boundary_inputs(spec, 3000, seed=5)
    assert x.shape == (3000, 9)
    assert np.all(x[:, 7] > 0)
    assert np.all((x[:, 8] > 0) & (x[:, 8] < 1))
    temps = np.array(spec.path_temps)
    np.testing.assert_allclose(x[:, :7].mean(axis=0), temps, rtol=0.02, atol=0.1)
    np.testing.assert_allclose(x[:, :7].std(axis=0), 0.1 * temps, rtol=0.06)
    assert x[:, 7].mean() == pytest.approx(40.0, rel=0.02)
    assert x[:, 7].std() == pytest.approx(4.0, rel=0.06)
    assert x[:, 8].mean() == pytest.approx(0.8, rel=0.01)
    assert x[:, 8].std() == pytest.approx(0.08, rel=0.06)


def test_boundary_inputs_rows_do_not_depend_on_count():
    spec = BoundaryUncertainty(vary_path=False)
    short = sample_boundary_inputs(spec, 5, seed=8)
    long = sample_boundary_inputs(spec, 20, seed=8)
    assert short.shape == (5, 2)
    np.testing.assert_array_equal(short, long[:5])


def test_boundary_inputs_without_spread_are_nominal():
    spec = BoundaryUncertainty()
    x = sample_boundary_inputs(spec, 4, seed=0, sigma_scale=0.0)
    expected = [*spec.path_temps, spec.h_mean, spec.eps_mean]
    np.testing.assert_array_equal(x, np.tile(expected, (4, 1)))


def test_boundary_moments_inflate_with_k():
    _, std = boundary_moments(BoundaryUncertainty())
    _, std_k = boundary_moments(BoundaryUncertainty(k=10.0))
    np.testing.assert_allclose(std_k, np.sqrt(10.0) * std)


def test_study_inputs_defaults():
    case_i = study_inputs(ForwardStudy(mode=StudyMode.CASE_I))
    case_ii = study_inputs(ForwardStudy(mode=StudyMode.CASE_II))
    mixed = study_inputs(ForwardStudy(mode=StudyMode.CASE_III_MIXED))
    full = study_inputs(ForwardStudy(mode=StudyMode.CASE_III_FULL, k=2.0))
    assert isinstance(case_i, MaterialUncertainty) and case_i.k == 1.0
    assert case_ii.k == 10.0
    assert isinstance(mixed, BoundaryUncertainty)
    assert not mixed.vary_path and mixed.vary_mixed
    assert full.vary_path and full.k == 2.0


def test_study_inputs_reject_foreign_steps():
    extra = _set("thermal_expansion", ["alpha_theta"], [7.6e-4], [[1e-12]])
    sets = [extra, *reference_material_sets()]
    with pytest.raises(ConfigurationError, match="thermal_expansion"):
        study_inputs(ForwardStudy(mode=StudyMode.CASE_I), sets)
    inputs = study_inputs(ForwardStudy(mode=StudyMode.CASE_I), sets[1:])
    assert [s.step for s in inputs.sets] == [s.step for s in sets[1:]]


def test_resample_interpolates_probe_series():
    result = SimResult(
        times=np.array([0.0, 1.0, 3.0]),
        dt=np.array([1.0, 2.0]),
        theta=np.array([[20.0, 20.0, 20.0], [30.0, 22.0, 21.0], [50.0, 26.0, 23.0]]),
        c=np.zeros((3, 3)),
        probes={"top": 0, "bottom": 2},
    )
    grid = np.linspace(0.0, 3.0, 7)
    out = resample(result, grid, ["top", "bottom"])
    assert out.shape == (4, 7)
    np.testing.assert_allclose(out[0], 20.0 + 10.0 * grid)
    np.testing.assert_array_equal(out[1], 0.0)
    with pytest.raises(DomainError, match="middle"):
        resample(result, grid, ["middle"])


def test_forward_study_requires_enthalpy(small_scenario):
    scenario = small_scenario.model_copy(update={"h_c": None})
    inputs = MaterialUncertainty(sets=reference_material_sets())
    with pytest.raises(ConfigurationError):
        fosm_forward(scenario, inputs, grid_points=10)


def test_fosm_forward_on_small_scenario(small_scenario):
    heat = next(s for s in reference_material_sets() if s.step == "heat_capacity")
    result = fosm_forward(
        small_scenario,
        MaterialUncertainty(sets=[heat]),
        grid_points=40,
        probes=("top", "bottom"),
    )
    assert result.method == "fosm"
    assert result.evaluations == 11
    assert result.parameter_names == ["a1", "a2", "a3", "a4", "a5"]
    np.testing.assert_allclose(result.times[[0, -1]], [0.0, 1800.0])
    top = result.outputs["top"]
    assert top["theta"].mean.shape == (40,)
    assert np.all(top["theta"].std >= 0)
    assert top["theta"].std.max() > 0
    assert np.all(np.diff(top["c"].mean) >= -1e-9)


@pytest.mark.slow
def test_mc_forward_mixed_boundary(small_scenario):
    spec = BoundaryUncertainty(vary_path=False)
    result = mc_forward(small_scenario, spec, n_mc=6, seed=3, grid_points=100)
    assert result.method == "mc"
    assert result.evaluations + result.failed == 6
    assert result.parameter_names == ["h", "eps"]
    np.testing.assert_allclose(result.times[[0, -1]], [0.0, 52200.0])
    assert result.outputs["top"]["theta"].std.max() > 0


def test_default_path_matches_boundary_defaults():
    spec = BoundaryUncertainty()
    path = default_curing_path()
    np.testing.assert_array_equal(path.times, spec.path_times)
    np.testing.assert_array_equal(path.temperatures, spec.path_temps)


@pytest.fixture
def coarse_default_scenario():
    return ScenarioConfig(h_c=4.0e5, epoxy_cells=20, base_cells=4)


def _at(result, t):
    return int(np.searchsorted(result.times, t))


@pytest.mark.slow
def test_material_uncertainty_shrinks_after_full_cure(coarse_default_scenario):
    inputs = study_inputs(ForwardStudy(mode=StudyMode.CASE_I))
    result = fosm_forward(coarse_default_scenario, inputs, grid_points=500, workers=4)
    top = result.outputs["top"]
    dc_pre_cure = top["c"].std[_at(result, 29400.0)]
    assert dc_pre_cure > 3.0 * top["c"].std[-1]
    # разброс Θ наибольший при экзотерме в начале доотверждения
    peak = result.times[np.argmax(top["theta"].std)]
    assert 29400.0 <= peak <= 32400.0


@pytest.mark.slow
def test_oven_path_dominates_boundary_uncertainty(coarse_default_scenario):
    full = fosm_forward(
        coarse_default_scenario,
        study_inputs(ForwardStudy(mode=StudyMode.CASE_III_FULL)),
        grid_points=500,
        workers=4,
    )
    mixed = fosm_forward(
        coarse_default_scenario,
        study_inputs(ForwardStudy(mode=StudyMode.CASE_III_MIXED)),
        grid_points=500,
        workers=4,
    )
    full_max = full.outputs["top"]["theta"].std.max()
    mixed_max = mixed.outputs["top"]["theta"].std.max()
    assert mixed_max > 0
    assert full_max >= 10.0 * mixed_max


@pytest.mark.slow
def test_mc_departs_from_fosm_under_inflated_uncertainty(coarse_default_scenario):
    inputs = study_inputs(ForwardStudy(mode=StudyMode.CASE_II))
    fosm = fosm_forward(coarse_default_scenario, inputs, workers=4)
    mc = mc_forward(coarse_default_scenario, inputs, n_mc=100, seed=7, workers=4)
    post_cure = fosm.times >= 29400.0
    fosm_dc = fosm.outputs["top"]["c"].std[post_cure]
    mc_dc = mc.outputs["top"]["c"].std[post_cure]
    spread = mc_dc > 0.01
    assert np.any(mc_dc[spread] > 3.0 * fosm_dc[spread])
