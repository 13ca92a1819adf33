"""Определяющие соотношения смолы и их аналитические производные.

Температура состояния хранится в кельвинах; параметры и формулы для Θ_G,
c_p, J и κ заданы в °C. Разности температур берутся в кельвинах, поэтому
тождества вида Θ = Θ_G(c) выполняются точно.
"""

from enum import Enum

import numpy as np
from scipy.special import expit

from cureuq.core.stats import normal_critical
from cureuq.exceptions import DomainError
from cureuq.schemas.materials import (
    KELVIN,
    ConductivityParams,
    CuringKineticsParams,
    CuringState,
    GlassTransitionParams,
    HeatCapacityParams,
    MaterialParameters,
    ShrinkageParams,
)

R_GAS = 8.314
LN2 = np.log(2.0)


class Relation(str, Enum):
    GLASS_TRANSITION = "glass_transition"
    CURING_RATE = "curing_rate"
    DEFORMATION = "deformation"
    SPECIFIC_HEAT = "specific_heat"
    CONDUCTIVITY = "conductivity"


def _relation(relation_id) -> Relation:
    try:
        return Relation(relation_id)
    except ValueError:
        raise DomainError(f"Unknown relation '{relation_id}'") from None


def _glass(c, p: GlassTransitionParams):
    c = np.asarray(c, dtype=float)
    denom = 1.0 - (1.0 - p.r_f) * c
    if np.any(denom <= 0):
        raise DomainError("Glass transition denominator is not positive")
    frac = p.r_f * c / denom
    return frac * (p.theta_g1 - p.theta_g0) + p.theta_g0, frac, denom


def glass_transition(c, p: GlassTransitionParams):
    """Θ_G(c) [°C] по уравнению ДиБенедетто."""
    return _glass(c, p)[0]


def _glass_grad(c, p: GlassTransitionParams) -> dict[str, np.ndarray]:
    _, frac, denom = _glass(c, p)
    c = np.asarray(c, dtype=float)
    return {
        "r_f": (p.theta_g1 - p.theta_g0) * c * (1.0 - c) / denom**2,
        "theta_g0": 1.0 - frac,
        "theta_g1": frac,
    }


def _glass_dc(c, p: GlassTransitionParams):
    _, _, denom = _glass(c, p)
    return (p.theta_g1 - p.theta_g0) * p.r_f / denom**2


def _base(c, g):
    # g + (1 − g)c − c² = (1 − c)(g + c), обнуляется точно при c = 1
    return np.maximum((1.0 - c) * (g + c), 0.0)


def chemical_factor(state: CuringState, kp: CuringKineticsParams):
    c = np.asarray(state.c, dtype=float)
    theta = np.asarray(state.theta, dtype=float)
    arrhenius = kp.a_pre * np.exp(-kp.e_act / (R_GAS * theta))
    return arrhenius * _base(c, kp.g_fac) ** kp.n_exp


def _diffusion_arg(state: CuringState, kp, gp):
    theta_g = glass_transition(state.c, gp) + KELVIN
    return (theta_g - np.asarray(state.theta, dtype=float)) / kp.b_d


def diffusion_factor(
    state: CuringState, kp: CuringKineticsParams, gp: GlassTransitionParams
):
    return 0.5 * (1.0 - np.tanh(_diffusion_arg(state, kp, gp)))


def curing_rate(
    state: CuringState, kp: CuringKineticsParams, gp: GlassTransitionParams
):
    """ċ = f_c·f_d [1/s]; основание автокатализа обрезается снизу нулём."""
    return chemical_factor(state, kp) * diffusion_factor(state, kp, gp)


def _lse_parts(state: CuringState, sp: ShrinkageParams, gp: GlassTransitionParams):
    theta = np.asarray(state.theta, dtype=float)
    rel = theta - (sp.theta_ref + KELVIN)
    glass_rel = glass_transition(state.c, gp) - sp.theta_ref
    first = sp.alpha_theta * rel / sp.d_smooth
    second = (
        sp.alpha_theta_g * rel + (sp.alpha_theta - sp.alpha_theta_g) * glass_rel
    ) / sp.d_smooth
    return rel, glass_rel, first, second


def deformation(state: CuringState, sp: ShrinkageParams, gp: GlassTransitionParams):
    """Объёмное отношение J = ρ_R/ρ; гладкий максимум через logaddexp."""
    c = np.asarray(state.c, dtype=float)
    rel, _, first, second = _lse_parts(state, sp, gp)
    return (
        sp.d_smooth * np.logaddexp(first, second)
        - sp.alpha_c * c
        - sp.alpha_theta_c * rel * c
        + 1.0
    )


def specific_heat(
    state: CuringState, hp: HeatCapacityParams, gp: GlassTransitionParams
):
    theta_c = state.celsius
    theta_g = glass_transition(state.c, gp) + KELVIN
    shift = np.asarray(state.theta, dtype=float) - theta_g
    return hp.a1 + hp.a2 * theta_c + (hp.a3 + hp.a4 * theta_c) * np.tanh(hp.a5 * shift)


def _kappa_parts(state: CuringState, cp_: ConductivityParams):
    theta = np.asarray(state.theta, dtype=float)
    psi = (theta - (cp_.theta_ref + KELVIN)) / cp_.theta_ref
    kappa_b = cp_.b3 * psi + cp_.b4
    d = cp_.d_tilde
    smooth = d * (np.logaddexp(cp_.b2 / d, kappa_b / d) - LN2)
    return psi, kappa_b, smooth


def conductivity(state: CuringState, cp_: ConductivityParams):
    c = np.asarray(state.c, dtype=float)
    _, _, smooth = _kappa_parts(state, cp_)
    return cp_.b1 * c + smooth * (1.0 - c)


def evaluate(relation_id, state: CuringState, params: MaterialParameters):
    relation = _relation(relation_id)
    gp = params.glass_transition
    if relation is Relation.GLASS_TRANSITION:
        return glass_transition(state.c, gp)
    if relation is Relation.CURING_RATE:
        return curing_rate(state, params.kinetics, gp)
    if relation is Relation.DEFORMATION:
        return deformation(state, params.shrinkage, gp)
    if relation is Relation.SPECIFIC_HEAT:
        return specific_heat(state, params.heat_capacity, gp)
    return conductivity(state, params.conductivity)


def _with_glass(own: dict, outer, state: CuringState, gp) -> dict[str, np.ndarray]:
    # Цепное правило через Θ_G(c): outer = ∂(выход)/∂Θ_G
    for name, partial in _glass_grad(state.c, gp).items():
        own[name] = outer * partial
    return own


def param_gradient(
    relation_id, state: CuringState, params: MaterialParameters
) -> dict[str, np.ndarray]:
    """
    Аналитические частные производные соотношения по его параметрам.

    Параметры:
    - relation_id: Одно из glass_transition, curing_rate, deformation,
      specific_heat, conductivity.
    - state: Состояние (скаляры или массивы).
    - params: Полный набор параметров материала.

    Возвращает:
    - Упорядоченный словарь имя параметра -> производная; для соотношений с
      Θ_G(c) в конце идут производные по r_f, theta_g0, theta_g1.

    Исключения:
    - DomainError для неизвестного соотношения.
    """
    relation = _relation(relation_id)
    gp = params.glass_transition
    c = np.asarray(state.c, dtype=float)
    theta = np.asarray(state.theta, dtype=float)

    if relation is Relation.GLASS_TRANSITION:
        return _glass_grad(c, gp)

    if relation is Relation.CURING_RATE:
        kp = params.kinetics
        base = _base(c, kp.g_fac)
        arrhenius = kp.a_pre * np.exp(-kp.e_act / (R_GAS * theta))
        fc = arrhenius * base**kp.n_exp
        u = _diffusion_arg(state, kp, gp)
        tanh_u = np.tanh(u)
        fd = 0.5 * (1.0 - tanh_u)
        dfd_du = -0.5 * (1.0 - tanh_u**2)
        positive = base > 0
        safe = np.where(positive, base, 1.0)
        d_base = np.where(positive, kp.n_exp * safe ** (kp.n_exp - 1.0), 0.0)
        own = {
            "a_pre": fc * fd / kp.a_pre,
            "e_act": -fc * fd / (R_GAS * theta),
            "g_fac": arrhenius * d_base * (1.0 - c) * fd,
            "n_exp": np.where(positive, fc * np.log(safe), 0.0) * fd,
            "b_d": fc * dfd_du * (-u / kp.b_d),
        }
        return _with_glass(own, fc * dfd_du / kp.b_d, state, gp)

    if relation is Relation.DEFORMATION:
        sp = params.shrinkage
        rel, glass_rel, first, second = _lse_parts(state, sp, gp)
        w2 = expit(second - first)
        w1 = 1.0 - w2
        own = {
            "alpha_theta": w1 * rel + w2 * glass_rel,
            "alpha_c": -c + 0.0 * rel,
            "alpha_theta_c": -rel * c,
            "alpha_theta_g": w2 * (rel - glass_rel),
        }
        return _with_glass(own, w2 * (sp.alpha_theta - sp.alpha_theta_g), state, gp)

    if relation is Relation.SPECIFIC_HEAT:
        hp = params.heat_capacity
        theta_c = state.celsius
        shift = theta - (glass_transition(c, gp) + KELVIN)
        t = np.tanh(hp.a5 * shift)
        sech2 = 1.0 - t**2
        amp = hp.a3 + hp.a4 * theta_c
        own = {
            "a1": np.ones_like(theta_c),
            "a2": theta_c,
            "a3": t,
            "a4": theta_c * t,
            "a5": amp * sech2 * shift,
        }
        return _with_glass(own, -amp * sech2 * hp.a5, state, gp)

    cp_ = params.conductivity
    psi, kappa_b, _ = _kappa_parts(state, cp_)
    w2 = expit((kappa_b - cp_.b2) / cp_.d_tilde)
    w1 = 1.0 - w2
    return {
        "b1": c + 0.0 * psi,
        "b2": w1 * (1.0 - c),
        "b3": w2 * psi * (1.0 - c),
        "b4": w2 * (1.0 - c),
    }


def state_gradient(relation_id, state: CuringState, params: MaterialParameters):
    """Производные соотношения по температуре (на кельвин) и по степени отверждения."""
    relation = _relation(relation_id)
    gp = params.glass_transition
    c = np.asarray(state.c, dtype=float)
    theta = np.asarray(state.theta, dtype=float)
    dg_dc = _glass_dc(c, gp)

    if relation is Relation.GLASS_TRANSITION:
        return np.zeros_like(dg_dc + theta), dg_dc + 0.0 * theta

    if relation is Relation.CURING_RATE:
        kp = params.kinetics
        base = _base(c, kp.g_fac)
        arrhenius = kp.a_pre * np.exp(-kp.e_act / (R_GAS * theta))
        fc = arrhenius * base**kp.n_exp
        tanh_u = np.tanh(_diffusion_arg(state, kp, gp))
        fd = 0.5 * (1.0 - tanh_u)
        half_sech2 = 0.5 * (1.0 - tanh_u**2)
        positive = base > 0
        safe = np.where(positive, base, 1.0)
        dfc_dc = np.where(
            positive,
            arrhenius
            * kp.n_exp
            * safe ** (kp.n_exp - 1.0)
            * (1.0 - kp.g_fac - 2.0 * c),
            0.0,
        )
        d_theta = fd * fc * kp.e_act / (R_GAS * theta**2) + fc * half_sech2 / kp.b_d
        d_c = fd * dfc_dc - fc * half_sech2 * dg_dc / kp.b_d
        return d_theta, d_c

    if relation is Relation.DEFORMATION:
        sp = params.shrinkage
        rel, _, first, second = _lse_parts(state, sp, gp)
        w2 = expit(second - first)
        w1 = 1.0 - w2
        d_theta = w1 * sp.alpha_theta + w2 * sp.alpha_theta_g - sp.alpha_theta_c * c
        d_c = (
            w2 * (sp.alpha_theta - sp.alpha_theta_g) * dg_dc
            - sp.alpha_c
            - sp.alpha_theta_c * rel
        )
        return d_theta, d_c

    if relation is Relation.SPECIFIC_HEAT:
        hp = params.heat_capacity
        theta_c = state.celsius
        t = np.tanh(hp.a5 * (theta - (glass_transition(c, gp) + KELVIN)))
        sech2 = 1.0 - t**2
        amp = hp.a3 + hp.a4 * theta_c
        d_theta = hp.a2 + hp.a4 * t + amp * sech2 * hp.a5
        d_c = -amp * sech2 * hp.a5 * dg_dc
        return d_theta, d_c

    cp_ = params.conductivity
    psi, kappa_b, smooth = _kappa_parts(state, cp_)
    w2 = expit((kappa_b - cp_.b2) / cp_.d_tilde)
    d_theta = w2 * cp_.b3 / cp_.theta_ref * (1.0 - c)
    d_c = cp_.b1 - smooth
    return d_theta, d_c


def model_band(
    relation_id,
    state: CuringState,
    params: MaterialParameters,
    names: list[str],
    covariance: np.ndarray,
    level: float = 0.95,
):
    """
    FOSM-полоса отклика калиброванного соотношения.

    Возвращает:
    - (mean, lower, upper) для доверительного уровня level.
    """
    mean = np.asarray(evaluate(relation_id, state, params), dtype=float)
    grads = param_gradient(relation_id, state, params)
    g = np.stack(
        [np.broadcast_to(grads.get(n, 0.0), mean.shape) for n in names], axis=-1
    )
    variance = np.einsum("...i,ij,...j->...", g, np.asarray(covariance, float), g)
    half = normal_critical(level) * np.sqrt(np.clip(variance, 0.0, None))
    return mean, mean - half, mean + half
