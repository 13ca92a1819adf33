import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cureuq import presets
from cureuq.core import constitutive as cm
from cureuq.exceptions import DomainError
from cureuq.schemas.materials import KELVIN, PARAMETER_BLOCK, CuringState

RELATIONS = list(cm.Relation)


def _random_states(rng, n=100):
    theta = rng.uniform(-20.0, 180.0, n)
    c = rng.uniform(0.05, 0.95, n)
    return CuringState.from_celsius(theta, c)


def _central(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def test_glass_transition_end_points(reference):
    gp = reference.glass_transition
    assert cm.glass_transition(0.0, gp) == pytest.approx(-41.895966, rel=1e-12)
    assert cm.glass_transition(1.0, gp) == pytest.approx(140.3569, rel=1e-12)


def test_diffusion_factor_is_half_at_glass_transition(reference):
    c = np.linspace(0.0, 1.0, 11)
    theta_g = cm.glass_transition(c, reference.glass_transition)
    state = CuringState.from_celsius(theta_g, c)
    factor = cm.diffusion_factor(state, reference.kinetics, reference.glass_transition)
    np.testing.assert_allclose(factor, 0.5, rtol=0, atol=1e-15)


def test_curing_rate_vanishes_when_fully_cured(reference):
    state = CuringState.from_celsius(np.array([20.0, 80.0, 150.0]), 1.0)
    rate = cm.curing_rate(state, reference.kinetics, reference.glass_transition)
    assert np.all(rate == 0.0)


def test_curing_rate_is_never_negative(reference, rng):
    state = CuringState.from_celsius(rng.uniform(-50, 200, 500), rng.uniform(0, 1, 500))
    rate = cm.curing_rate(state, reference.kinetics, reference.glass_transition)
    assert np.all(rate >= 0.0)


def test_conductivity_of_cured_resin_is_b1(reference):
    state = CuringState.from_celsius(np.linspace(-50, 200, 7), 1.0)
    kappa = cm.conductivity(state, reference.conductivity)
    np.testing.assert_allclose(kappa, reference.conductivity.b1, rtol=1e-14)


def test_deformation_is_one_at_reference_state(reference):
    # при Θ = Θ_ref и c = 0 стеклообразная ветвь не активна
    state = CuringState.from_celsius(20.0, 0.0)
    value = cm.deformation(state, reference.shrinkage, reference.glass_transition)
    assert value == pytest.approx(1.0, abs=1e-4)


def test_state_stores_kelvin():
    state = CuringState.from_celsius(20.0, 0.5)
    assert state.theta == pytest.approx(293.15)
    assert state.celsius == pytest.approx(20.0)


@pytest.mark.parametrize(
    "theta, c", [(-300.0, 0.5), (20.0, -0.1), (20.0, 1.2)], ids=["cold", "low", "high"]
)
def test_invalid_state_is_rejected(theta, c):
    with pytest.raises(DomainError):
        CuringState.from_celsius(theta, c)


def test_unknown_relation(reference):
    with pytest.raises(DomainError):
        cm.evaluate("viscosity", CuringState.from_celsius(20.0, 0.5), reference)


@pytest.mark.parametrize("relation", RELATIONS, ids=lambda r: r.value)
def test_parameter_gradient_matches_finite_differences(relation, reference, rng):
    state = _random_states(rng)
    analytic = cm.param_gradient(relation, state, reference)
    flat = reference.flat()
    for name, grad in analytic.items():
        assert name in PARAMETER_BLOCK
        h = 1e-6 * abs(flat[name])

        def value(x, name=name):
            return cm.evaluate(relation, state, reference.with_values({name: x}))

        fd = _central(value, flat[name], h)
        scale = np.max(np.abs(fd))
        np.testing.assert_allclose(
            np.broadcast_to(grad, fd.shape), fd, rtol=1e-5, atol=1e-6 * scale + 1e-300
        )


@pytest.mark.parametrize("relation", RELATIONS, ids=lambda r: r.value)
def test_state_gradient_matches_finite_differences(relation, reference, rng):
    state = _random_states(rng)
    d_theta, d_c = cm.state_gradient(relation, state, reference)

    def along_theta(x):
        return cm.evaluate(relation, CuringState.unchecked(x, state.c), reference)

    def along_c(x):
        return cm.evaluate(relation, CuringState.unchecked(state.theta, x), reference)

    fd_theta = _central(along_theta, state.theta, 1e-4)
    fd_c = _central(along_c, state.c, 1e-7)
    for analytic, fd in ((d_theta, fd_theta), (d_c, fd_c)):
        scale = np.max(np.abs(fd)) + 1e-300
        np.testing.assert_allclose(
            np.broadcast_to(analytic, fd.shape), fd, rtol=1e-5, atol=1e-6 * scale
        )


def test_kinetics_gradient_is_finite_at_full_cure(reference):
    state = CuringState.from_celsius(np.array([60.0, 120.0]), 1.0)
    grads = cm.param_gradient(cm.Relation.CURING_RATE, state, reference)
    for value in grads.values():
        assert np.all(np.isfinite(value))


@settings(max_examples=50, deadline=None)
@given(
    theta=st.floats(min_value=-60.0, max_value=250.0),
    c=st.floats(min_value=0.0, max_value=1.0),
)
def test_heat_capacity_lies_between_glassy_and_rubbery_branches(theta, c):
    p = presets.reference_material()
    hp = p.heat_capacity
    state = CuringState.from_celsius(theta, c)
    value = cm.specific_heat(state, hp, p.glass_transition)
    amp = abs(hp.a3 + hp.a4 * theta)
    base = hp.a1 + hp.a2 * theta
    assert base - amp - 1e-9 <= value <= base + amp + 1e-9


def test_model_band_widens_with_covariance(reference):
    state = CuringState.from_celsius(np.full(5, 20.0), np.linspace(0, 1, 5))
    names = ["r_f", "theta_g0", "theta_g1"]
    cov = np.diag([0.067, 5.47, 6.78]) ** 2
    mean, lower, upper = cm.model_band(
        cm.Relation.GLASS_TRANSITION, state, reference, names, cov
    )
    _, lower_2, upper_2 = cm.model_band(
        cm.Relation.GLASS_TRANSITION, state, reference, names, 4.0 * cov
    )
    assert np.all(lower <= mean) and np.all(mean <= upper)
    np.testing.assert_allclose(upper_2 - mean, 2.0 * (upper - mean), rtol=1e-12)
    # на концах ширина полосы зависит только от σ(θ_g0), σ(θ_g1)
    assert upper[0] - mean[0] == pytest.approx(1.959964 * 5.47, rel=1e-5)
    assert upper[-1] - mean[-1] == pytest.approx(1.959964 * 6.78, rel=1e-5)


def test_glass_transition_is_monotone_in_cure(reference):
    c = np.linspace(0, 1, 201)
    theta_g = cm.glass_transition(c, reference.glass_transition)
    assert np.all(np.diff(theta_g) > 0)
    assert KELVIN + theta_g[0] > 0
