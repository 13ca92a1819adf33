"""Многошаговая калибровка и перенос неопределённости между шагами."""

import logging
from graphlib import CycleError, TopologicalSorter
from typing import Callable, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import block_diag

from cureuq.core import constitutive as cm
from cureuq.core.calibrate import solve_nls
from cureuq.core.parallel import parallel_map
from cureuq.core.stats import cholesky_factor, sample_moments, spawn_rng
from cureuq.exceptions import (
    ConfigurationError,
    ConvergenceError,
    CureUQError,
    DomainError,
    PropagationError,
)
from cureuq.schemas.calibration import (
    Dependency,
    FitResult,
    Method,
    NLSOptions,
    ResidualModel,
    StepSpec,
    UncertainParameterSet,
)
from cureuq.schemas.datasets import Dataset, split_curves
from cureuq.schemas.materials import (
    KELVIN,
    BLOCKS,
    PARAMETER_BLOCK,
    ConductivityParams,
    CuringKineticsParams,
    CuringState,
    GlassTransitionParams,
    HeatCapacityParams,
    MaterialParameters,
    ShrinkageParams,
)

logger = logging.getLogger(__name__)

MC_DROP_LIMIT = 0.05
FEEDBACK_ROUNDS = 20
FEEDBACK_RTOL = 1e-8

_GLASS = GlassTransitionParams.free


def _block(cls, params: Mapping[str, float]):
    return cls.model_construct(**{k: params[k] for k in cls.free if k in params})


def _material(params: Mapping[str, float]) -> MaterialParameters:
    return MaterialParameters.model_construct(
        **{name: _block(cls, params) for name, cls in BLOCKS.items()}
    )


def _state(data: Dataset) -> CuringState:
    theta = data.predictors.get("theta")
    c = data.column("c")
    theta_k = (theta if theta is not None else np.full_like(c, 20.0)) + KELVIN
    return CuringState.unchecked(theta_k, c)


def _relation_predict(relation: cm.Relation):
    def predict(params, data):
        return cm.evaluate(relation, _state(data), _material(params))

    return predict


def _relation_gradient(relation: cm.Relation, free: tuple[str, ...]):
    def gradient(params, data):
        grads = cm.param_gradient(relation, _state(data), _material(params))
        return np.column_stack([np.broadcast_to(grads[n], (data.n,)) for n in free])

    return gradient


def _chemical_predict(params, data):
    # при известных b_d и Θ_G химическая часть сравнивается с полной скоростью
    kp = _block(CuringKineticsParams, params)
    state = _state(data)
    rate = cm.chemical_factor(state, kp)
    if all(n in params for n in ("b_d", *_GLASS)):
        gp = _block(GlassTransitionParams, params)
        rate = rate * cm.diffusion_factor(state, kp, gp)
    return rate


def _expansion_predict(params, data):
    sp = _block(ShrinkageParams, params)
    rel = data.column("theta") - sp.theta_ref
    return 1.0 + sp.alpha_theta * rel


def _shrinkage_predict(params, data):
    sp = _block(ShrinkageParams, params)
    rel = data.column("theta") - sp.theta_ref
    c = data.column("c")
    return 1.0 + sp.alpha_theta * rel - sp.alpha_c * c - sp.alpha_theta_c * rel * c


class StepModel(BaseModel):
    """Запись реестра моделей отклика шагов калибровки."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    requires: tuple[str, ...]
    predict: Callable
    relation: Optional[cm.Relation] = None
    log_params: frozenset[str] = frozenset()


STEP_MODELS: dict[str, StepModel] = {
    "glass_transition": StepModel(
        requires=_GLASS,
        predict=_relation_predict(cm.Relation.GLASS_TRANSITION),
        relation=cm.Relation.GLASS_TRANSITION,
    ),
    "kinetics_chemical": StepModel(
        requires=("a_pre", "e_act", "g_fac", "n_exp"),
        predict=_chemical_predict,
        log_params=frozenset({"a_pre", "e_act"}),
    ),
    "curing_rate": StepModel(
        requires=CuringKineticsParams.free + _GLASS,
        predict=_relation_predict(cm.Relation.CURING_RATE),
        relation=cm.Relation.CURING_RATE,
        log_params=frozenset({"a_pre", "e_act", "b_d"}),
    ),
    "thermal_expansion": StepModel(
        requires=("alpha_theta",), predict=_expansion_predict
    ),
    "chemical_shrinkage": StepModel(
        requires=("alpha_theta", "alpha_c", "alpha_theta_c"),
        predict=_shrinkage_predict,
    ),
    "deformation": StepModel(
        requires=ShrinkageParams.free + _GLASS,
        predict=_relation_predict(cm.Relation.DEFORMATION),
        relation=cm.Relation.DEFORMATION,
    ),
    "specific_heat": StepModel(
        requires=HeatCapacityParams.free + _GLASS,
        predict=_relation_predict(cm.Relation.SPECIFIC_HEAT),
        relation=cm.Relation.SPECIFIC_HEAT,
        log_params=frozenset({"a5"}),
    ),
    "conductivity": StepModel(
        requires=(
            ConductivityParams.free
            + ShrinkageParams.free
            + HeatCapacityParams.free
            + _GLASS
        ),
        predict=_relation_predict(cm.Relation.CONDUCTIVITY),
        relation=cm.Relation.CONDUCTIVITY,
    ),
}


def derive_conductivity_observations(
    data: Dataset,
    sp: ShrinkageParams,
    hp: HeatCapacityParams,
    gp: GlassTransitionParams,
    rho_ref: float,
) -> Dataset:
    """
    Переводит температуропроводность a_Θ в теплопроводность
    κ = a_Θ·(ρ_R/J)·c_p.

    Исключения:
    - DomainError, если J ≤ 0 хотя бы в одной точке.
    """
    state = _state(data)
    volume_ratio = cm.deformation(state, sp, gp)
    if np.any(volume_ratio <= 0):
        raise DomainError("Volume ratio J must be positive to derive conductivity")
    cp = cm.specific_heat(state, hp, gp)
    kappa = data.observations * (rho_ref / volume_ratio) * cp
    return data.with_observations(kappa)


def build_model(
    step: StepSpec, fixed: Mapping[str, float] | None = None
) -> ResidualModel:
    try:
        entry = STEP_MODELS[step.model]
    except KeyError:
        raise ConfigurationError(f"Unknown residual model '{step.model}'") from None
    free = tuple(step.free)
    unknown = set(free) - set(entry.requires)
    if unknown:
        raise ConfigurationError(
            f"Step '{step.id}' frees {sorted(unknown)} unused by model '{step.model}'"
        )
    gradient = None
    if entry.relation is not None:
        gradient = _relation_gradient(entry.relation, free)
    observe = None
    if step.model == "conductivity":
        rho_ref = step.rho_ref

        def observe(fixed_, data):
            return derive_conductivity_observations(
                data,
                _block(ShrinkageParams, fixed_),
                _block(HeatCapacityParams, fixed_),
                _block(GlassTransitionParams, fixed_),
                rho_ref,
            ).observations

    log_params = (
        frozenset(step.log_params)
        if step.log_params is not None
        else entry.log_params & set(free)
    )
    return ResidualModel(
        free=free,
        fixed=dict(fixed or {}),
        predict=entry.predict,
        gradient=gradient,
        observe=observe,
        log_params=log_params,
    )


def order_steps(steps: list[StepSpec]) -> list[StepSpec]:
    """
    Проверяет граф шагов и возвращает их в порядке зависимостей.

    Исключения:
    - ConfigurationError при циклах, неизвестных шагах или параметрах,
      которые не производит ровно один предшествующий шаг, а также при
      обратной связи от шага, который не зависит от данного.
    """
    by_id = {s.id: s for s in steps}
    if len(by_id) != len(steps):
        raise ConfigurationError("Step ids must be unique")
    graph = {}
    for step in steps:
        missing = [d.step for d in step.depends if d.step not in by_id]
        if missing:
            raise ConfigurationError(f"Step '{step.id}' depends on unknown {missing}")
        graph[step.id] = [d.step for d in step.depends]
        produced: dict[str, str] = {}
        for dep in step.depends:
            for name in by_id[dep.step].free:
                if name in produced:
                    raise ConfigurationError(
                        f"Parameter '{name}' of step '{step.id}' is produced by "
                        f"both '{produced[name]}' and '{dep.step}'"
                    )
                produced[name] = dep.step
        entry = STEP_MODELS.get(step.model)
        if entry is None:
            raise ConfigurationError(f"Unknown residual model '{step.model}'")
        lacking = set(entry.requires) - set(step.free) - set(produced)
        if lacking:
            raise ConfigurationError(
                f"Step '{step.id}' needs {sorted(lacking)} from an upstream step"
            )
    try:
        order = list(TopologicalSorter(graph).static_order())
    except CycleError as exc:
        raise ConfigurationError(f"Step dependencies form a cycle: {exc.args[1]}")
    ancestors: dict[str, set[str]] = {}
    for step_id in order:
        ancestors[step_id] = set()
        for dep in graph[step_id]:
            ancestors[step_id] |= {dep, *ancestors[dep]}
    for step in steps:
        for target in step.feedback:
            if target not in by_id:
                raise ConfigurationError(
                    f"Step '{step.id}' takes feedback from unknown step '{target}'"
                )
            if step.id not in ancestors[target]:
                raise ConfigurationError(
                    f"Feedback step '{target}' does not depend on '{step.id}'"
                )
    return [by_id[i] for i in order]


def _init_for(step: StepSpec, inits: Mapping | None) -> dict[str, float]:
    values = dict(step.init)
    values.update((inits or {}).get(step.id, {}))
    missing = [n for n in step.free if n not in values]
    if missing:
        raise ConfigurationError(f"Step '{step.id}' lacks initial values for {missing}")
    return values


def step_fixed(
    step: StepSpec, by_id: Mapping[str, StepSpec], fits: Mapping[str, FitResult]
) -> dict[str, float]:
    """
    Фиксированные параметры шага: κ* его зависимостей, а для шагов с
    обратной связью ещё и уже откалиброванные значения нижестоящих шагов
    (кроме собственных свободных параметров).
    """
    fixed = {}
    for dep in step.depends:
        fixed.update(fits[dep.step].values())
    for target in step.feedback:
        if target in fits:
            known = {**step_fixed(by_id[target], by_id, fits), **fits[target].values()}
            fixed.update((k, v) for k, v in known.items() if k not in step.free)
    return fixed


def _refined_steps(ordered: list[StepSpec]) -> list[StepSpec]:
    # шаги с обратной связью и все шаги, зависящие от них
    marked: set[str] = set()
    for step in ordered:
        if step.feedback or any(d.step in marked for d in step.depends):
            marked.add(step.id)
    return [s for s in ordered if s.id in marked]


def _calibrate_step(
    step: StepSpec,
    data: Dataset,
    init: Mapping[str, float],
    by_id: Mapping[str, StepSpec],
    fits: Mapping[str, FitResult],
    options: NLSOptions | None,
) -> FitResult:
    model = build_model(step, step_fixed(step, by_id, fits))
    fit = solve_nls(model, data, init, options)
    if not fit.converged:
        raise ConvergenceError(f"Calibration step '{step.id}' did not converge")
    return fit


def run_pipeline_nls(
    steps: list[StepSpec],
    datasets: Mapping[str, Dataset],
    inits: Mapping[str, Mapping[str, float]] | None = None,
    options: NLSOptions | None = None,
) -> dict[str, FitResult]:
    """
    Выполняет шаги в порядке зависимостей; фиксированные параметры берутся
    из κ* предыдущих шагов.

    Шаги с обратной связью (``feedback``) затем уточняются поочерёдно вместе
    с зависящими от них шагами, пока относительное изменение κ* за круг не
    станет меньше FEEDBACK_RTOL, но не более FEEDBACK_ROUNDS кругов.

    Исключения:
    - ConvergenceError с именем шага, если он не сошёлся.
    """
    ordered = order_steps(steps)
    by_id = {s.id: s for s in ordered}
    fits: dict[str, FitResult] = {}
    for step in ordered:
        fits[step.id] = _calibrate_step(
            step, datasets[step.id], _init_for(step, inits), by_id, fits, options
        )
        logger.info("Step %s: %s", step.id, fits[step.id].values())
    refined = _refined_steps(ordered)
    if refined:
        _refine(refined, datasets, by_id, fits, options)
    return fits


def _refine(refined, datasets, by_id, fits, options) -> None:
    for round_ in range(1, FEEDBACK_ROUNDS + 1):
        change = 0.0
        for step in refined:
            previous = fits[step.id]
            fits[step.id] = _calibrate_step(
                step, datasets[step.id], previous.values(), by_id, fits, options
            )
            shift = np.abs(fits[step.id].kappa_star - previous.kappa_star)
            scale = np.maximum(np.abs(previous.kappa_star), np.finfo(float).tiny)
            change = max(change, float(np.max(shift / scale)))
        logger.debug("Feedback round %d: relative change %.3e", round_, change)
        if change <= FEEDBACK_RTOL:
            logger.info("Feedback refinement settled after %d rounds", round_)
            return
    logger.warning("Feedback refinement did not settle in %d rounds", FEEDBACK_ROUNDS)


def _upstream(step: StepSpec, sets: Mapping[str, UncertainParameterSet]):
    return [(dep, sets[dep.step]) for dep in step.depends]


def _upstream_vector(upstream: list[tuple[Dependency, UncertainParameterSet]]):
    names = [n for _, s in upstream for n in s.names]
    values = (
        np.concatenate([s.values for _, s in upstream]) if upstream else np.empty(0)
    )
    return names, values


def fosm_sensitivity(
    model: ResidualModel,
    data: Dataset,
    fit: FitResult,
    upstream: list[tuple[Dependency, UncertainParameterSet]],
    variances: np.ndarray,
    options: NLSOptions | None = None,
    workers: int = 1,
) -> np.ndarray:
    """
    S = ∂κ*/∂κ̃* центральными разностями повторных решений с шагом
    h = max(10⁻²·σ̃ⱼ, 10⁻⁶·|κ̃ⱼ|).

    Параметры:
    - variances: Дисперсии входов в порядке наборов upstream; входы с нулевой
      дисперсией и входы, которых нет среди фиксированных, дают нулевой столбец.

    Исключения:
    - PropagationError с именем параметра, если повторное решение не удалось.
    """
    k = fit.n_kappa
    names, values = _upstream_vector(upstream)

    def column(j: int) -> np.ndarray:
        sigma = np.sqrt(max(variances[j], 0.0))
        if sigma == 0.0 or names[j] not in model.fixed:
            return np.zeros(k)
        h = max(1e-2 * sigma, 1e-6 * abs(values[j]))
        solutions = []
        for sign in (1.0, -1.0):
            fixed = dict(model.fixed, **{names[j]: model.fixed[names[j]] + sign * h})
            try:
                res = solve_nls(model.with_fixed(fixed), data, fit.kappa_star, options)
            except CureUQError as exc:
                raise PropagationError(
                    f"Re-solve failed for perturbed parameter '{names[j]}': {exc}"
                ) from exc
            if not res.converged:
                raise PropagationError(
                    f"Re-solve did not converge for perturbed parameter '{names[j]}'"
                )
            solutions.append(res.kappa_star)
        return (solutions[0] - solutions[1]) / (2.0 * h)

    columns = parallel_map(column, range(len(names)), workers)
    return np.column_stack(columns) if columns else np.zeros((k, 0))


def _fosm_set(
    fit: FitResult, sens: np.ndarray, cov_up: np.ndarray, step_id: str
) -> UncertainParameterSet:
    prop = sens @ cov_up @ sens.T
    return UncertainParameterSet(
        step=step_id,
        names=list(fit.names),
        values=fit.kappa_star.copy(),
        covariance_noise=fit.covariance,
        covariance_prop=0.5 * (prop + prop.T),
        method=Method.FOSM,
    )


def propagate_fosm(
    model: ResidualModel,
    data: Dataset,
    fit: FitResult,
    upstream: list[tuple[Dependency, UncertainParameterSet]],
    options: NLSOptions | None = None,
    workers: int = 1,
    step_id: str = "",
    covariance: np.ndarray | None = None,
) -> UncertainParameterSet:
    """
    FOSM-перенос: C_prop = S·C̃·Sᵀ, C_noise = C шага.

    Параметры:
    - covariance: Совместная ковариация C̃ всех входов upstream. Если не
      задана, наборы считаются независимыми и C̃ блочно-диагональна из их
      C_total; run_pipeline передаёт сюда полную ковариацию с учётом общих
      предшествующих шагов.

    Исключения:
    - PropagationError с именем параметра, если повторное решение не удалось.
    - DomainError, если размер covariance не совпадает с числом входов.
    """
    names, _ = _upstream_vector(upstream)
    if covariance is None:
        cov_up = (
            block_diag(*[s.covariance_total for _, s in upstream])
            if upstream
            else np.zeros((0, 0))
        )
    else:
        cov_up = np.asarray(covariance, dtype=float)
        if cov_up.shape != (len(names), len(names)):
            raise DomainError(
                f"Upstream covariance must be {len(names)} x {len(names)}, "
                f"got {cov_up.shape}"
            )
    sens = fosm_sensitivity(
        model, data, fit, upstream, np.diag(cov_up), options, workers
    )
    return _fosm_set(fit, sens, cov_up, step_id or data.label)


def _joint_covariance(
    step: StepSpec,
    loadings: Mapping[str, Mapping[str, np.ndarray]],
    noise: Mapping[str, np.ndarray],
    sizes: Mapping[str, int],
) -> np.ndarray:
    # δκ_s = Σ L_s,q·ε_q по независимым шумам шагов q; C̃ = Σ L_q·C_q·L_qᵀ
    n = sum(sizes[d.step] for d in step.depends)
    total = np.zeros((n, n))
    sources = sorted({q for d in step.depends for q in loadings[d.step]})
    for q in sources:
        stacked = np.vstack(
            [
                loadings[d.step].get(q, np.zeros((sizes[d.step], sizes[q])))
                for d in step.depends
            ]
        )
        total += stacked @ noise[q] @ stacked.T
    return 0.5 * (total + total.T)


def _loadings(
    step: StepSpec,
    sens: np.ndarray,
    loadings: Mapping[str, Mapping[str, np.ndarray]],
    sizes: Mapping[str, int],
) -> dict[str, np.ndarray]:
    own = {step.id: np.eye(sizes[step.id])}
    offset = 0
    for dep in step.depends:
        block = sens[:, offset : offset + sizes[dep.step]]
        offset += sizes[dep.step]
        for q, load in loadings[dep.step].items():
            own[q] = own.get(q, 0.0) + block @ load
    return own


def _draw_upstream(
    upstream: list[tuple[Dependency, UncertainParameterSet]], rng: np.random.Generator
) -> dict[str, float]:
    # Непосредственные предшественники: N(κ̃*, C̃) с полной ковариацией набора.
    # Более ранние шаги: случайная строка κ̌ᵢ их эмпирической выборки плюс
    # N(0, Cᵢ) с шумовой ковариацией этой строки, то есть повторная выборка
    # шума вокруг сохранённого решения.
    drawn = {}
    for dep, uset in upstream:
        if dep.immediate or uset.empirical is None:
            center, cov = uset.values, uset.covariance_total
        else:
            row = int(rng.integers(uset.empirical.shape[0]))
            center, cov = uset.empirical[row], uset.empirical_noise[row]
        sample = center + cholesky_factor(cov) @ rng.standard_normal(center.shape[0])
        drawn.update(zip(uset.names, sample.tolist()))
    return drawn


def propagate_mc(
    model: ResidualModel,
    data: Dataset,
    fit: FitResult,
    upstream: list[tuple[Dependency, UncertainParameterSet]],
    n_mc: int,
    seed: int,
    options: NLSOptions | None = None,
    workers: int = 1,
    step_id: str = "",
    stream: int = 0,
) -> UncertainParameterSet:
    """
    Монте-Карло перенос: n_mc повторных решений с выборкой входных параметров.

    Входы непосредственных предшественников берутся из N(κ̃*, C̃_total).
    Для более ранних шагов (``immediate: false``) с эмпирической выборкой
    берётся случайная строка κ̌ᵢ и к ней добавляется N(0, Cᵢ), где Cᵢ её
    шумовая ковариация: выборка описывает разброс от переноса, а шум
    каждого решения разыгрывается заново. Наборы разыгрываются независимо
    друг от друга.

    Возвращает:
    - Набор со средним по выборке, C_prop = выборочная ковариация (n − 1),
      C_noise = среднее C_i и сохранённой эмпирической выборкой.

    Исключения:
    - PropagationError, если не сошлось более 5 % повторных решений.
    """
    if n_mc < 2:
        raise DomainError("Monte Carlo propagation needs n_mc >= 2")
    label = step_id or data.label
    uncertain = any(np.any(s.covariance_total) for _, s in upstream)
    if not uncertain:
        rows = np.tile(fit.kappa_star, (n_mc, 1))
        noise = np.tile(fit.covariance, (n_mc, 1, 1))
    else:

        def task(i: int):
            rng = spawn_rng(seed, stream, i)
            fixed = dict(model.fixed, **_draw_upstream(upstream, rng))
            try:
                res = solve_nls(model.with_fixed(fixed), data, fit.kappa_star, options)
            except CureUQError as exc:
                logger.debug("MC sample %d of '%s' failed: %s", i, label, exc)
                return None
            if not res.converged or res.covariance is None:
                return None
            return res.kappa_star, res.covariance

        results = parallel_map(task, range(n_mc), workers)
        kept = [r for r in results if r is not None]
        dropped = n_mc - len(kept)
        if dropped > MC_DROP_LIMIT * n_mc or len(kept) < 2:
            raise PropagationError(
                f"{dropped} of {n_mc} Monte Carlo re-solves failed in step '{label}'"
            )
        if dropped:
            logger.warning(
                "Dropped %d of %d Monte Carlo re-solves in step '%s'",
                dropped,
                n_mc,
                label,
            )
        rows = np.array([r[0] for r in kept])
        noise = np.array([r[1] for r in kept])
    mean, prop = sample_moments(rows)
    return UncertainParameterSet(
        step=label,
        names=list(fit.names),
        values=mean,
        covariance_noise=noise.mean(axis=0),
        covariance_prop=prop,
        empirical=rows,
        empirical_noise=noise,
        method=Method.MC,
    )


def nls_set(fit: FitResult, step_id: str) -> UncertainParameterSet:
    zeros = np.zeros((fit.n_kappa, fit.n_kappa))
    return UncertainParameterSet(
        step=step_id,
        names=list(fit.names),
        values=fit.kappa_star.copy(),
        covariance_noise=fit.covariance if fit.covariance is not None else zeros,
        covariance_prop=zeros,
        method=Method.NLS,
    )


def run_pipeline(
    steps: list[StepSpec],
    datasets: Mapping[str, Dataset],
    method: Method = Method.NLS,
    n_mc: int = 500,
    seed: int = 7,
    inits: Mapping[str, Mapping[str, float]] | None = None,
    options: NLSOptions | None = None,
    workers: int = 1,
) -> dict[str, UncertainParameterSet]:
    """
    Калибрует все шаги и переносит неопределённость выбранным методом.

    В режиме fosm каждый набор раскладывается по независимым шумам
    предшествующих шагов, поэтому входы с общим источником (например,
    расширение стеклования и теплоёмкость через Θ_G) коррелированы в C̃.
    Обратная связь учитывается только в κ*, не в переносе.

    Параметры:
    - method: nls (без переноса), fosm или mc.
    - n_mc, seed: Размер выборки и зерно для mc.

    Возвращает:
    - Словарь шаг -> UncertainParameterSet в порядке выполнения.
    """
    method = Method(method)
    ordered = order_steps(steps)
    by_id = {s.id: s for s in ordered}
    fits = run_pipeline_nls(ordered, datasets, inits, options)
    sets: dict[str, UncertainParameterSet] = {}
    loadings: dict[str, dict[str, np.ndarray]] = {}
    sizes = {s.id: fits[s.id].n_kappa for s in ordered}
    noise = {}
    for position, step in enumerate(ordered):
        fit = fits[step.id]
        if fit.covariance is None:
            raise PropagationError(f"Step '{step.id}' has no covariance to propagate")
        noise[step.id] = fit.covariance
        model = build_model(step, step_fixed(step, by_id, fits))
        upstream = _upstream(step, sets)
        data = datasets[step.id]
        if method is Method.NLS:
            sets[step.id] = nls_set(fit, step.id)
        elif method is Method.FOSM:
            cov_up = _joint_covariance(step, loadings, noise, sizes)
            sens = fosm_sensitivity(
                model, data, fit, upstream, np.diag(cov_up), options, workers
            )
            loadings[step.id] = _loadings(step, sens, loadings, sizes)
            sets[step.id] = _fosm_set(fit, sens, cov_up, step.id)
        else:
            sets[step.id] = propagate_mc(
                model,
                data,
                fit,
                upstream,
                n_mc,
                seed,
                options,
                workers,
                step.id,
                stream=position,
            )
        logger.info("Step %s propagated with %s", step.id, method.value)
    return sets


def assemble_parameters(
    sets: Mapping[str, UncertainParameterSet],
    base: MaterialParameters | None = None,
) -> MaterialParameters:
    """
    Собирает параметры материала из наборов шагов.

    Исключения:
    - ConfigurationError, если без base не хватает параметров какого-либо блока.
    """
    values = {}
    for uset in sets.values():
        values.update(uset.as_mapping())
    if base is not None:
        return base.with_values(values, validate=True)
    missing = sorted(set(PARAMETER_BLOCK) - set(values))
    if missing:
        raise ConfigurationError(f"Calibration results lack parameters {missing}")
    blocks = {}
    for name, cls in BLOCKS.items():
        try:
            blocks[name] = cls(**{k: values[k] for k in cls.free})
        except ValueError as exc:
            raise DomainError(f"Invalid calibrated {name} parameters: {exc}") from exc
    return MaterialParameters(**blocks)


def collect_step_datasets(
    steps: list[StepSpec], files: Mapping[str, Dataset]
) -> dict[str, Dataset]:
    """
    Объединяет файлы каждого шага и применяет разбиение кривых.

    Исключения:
    - ConfigurationError, если файл шага отсутствует.
    """
    out = {}
    for step in steps:
        parts = []
        for path in step.dataset.files:
            key = str(path)
            if key not in files:
                raise ConfigurationError(f"Step '{step.id}' misses data file '{key}'")
            parts.append(files[key])
        data = Dataset.concat(parts, label=step.id)
        if step.dataset.split is not None:
            data = split_curves(data, step.dataset.split)
        out[step.id] = data
    return out
