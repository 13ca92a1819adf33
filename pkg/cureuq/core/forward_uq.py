"""Прямой перенос неопределённости параметров и граничных условий через решатель."""

import logging
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import block_diag

from cureuq import presets
from cureuq.core.parallel import parallel_map
from cureuq.core.simulate import (
    default_curing_path,
    default_domain,
    run_default_scenario,
)
from cureuq.core.stats import (
    beta_from_moments,
    cholesky_factor,
    lognormal_from_moments,
    spawn_rng,
)
from cureuq.exceptions import (
    ConfigurationError,
    CureUQError,
    DomainError,
    PropagationError,
)
from cureuq.schemas.calibration import Method, UncertainParameterSet
from cureuq.schemas.materials import MaterialParameters
from cureuq.schemas.simulation import DirichletPath, ScenarioConfig, SimResult
from cureuq.schemas.uq import (
    BoundaryUncertainty,
    ForwardStudy,
    MaterialUncertainty,
    OutputStatistics,
    StudyMode,
    UQResult,
)

logger = logging.getLogger(__name__)

QUANTITIES = ("theta", "c")
DROP_LIMIT = 0.05
MAX_REDRAWS = 1000

FORWARD_STEPS = {
    "glass_transition": ("r_f", "theta_g0", "theta_g1"),
    "kinetics_chemical": ("a_pre", "e_act", "g_fac", "n_exp"),
    "kinetics_diffusion": ("b_d",),
    "heat_capacity": ("a1", "a2", "a3", "a4", "a5"),
    "conductivity": ("b1", "b2", "b3", "b4"),
}

DEFAULT_N_MC = {
    StudyMode.CASE_I: 300,
    StudyMode.CASE_II: 300,
    StudyMode.CASE_III_FULL: 150,
    StudyMode.CASE_III_MIXED: 60,
}

ModelFn = Callable[[np.ndarray], np.ndarray]


def fosm_propagate(
    model_fn: ModelFn,
    mean: np.ndarray,
    cov: np.ndarray,
    workers: int = 1,
    names: Sequence[str] | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """
    FOSM: среднее = модель в среднем входе, σ² = ∑∑ M,ᵢ M,ⱼ cov[κᵢ, κⱼ].

    Производные берутся центральными разностями с шагом
    h = max(0.1·σᵢ, 10⁻⁶·|μᵢ|); входы с нулевой дисперсией пропускаются.

    Возвращает:
    - (baseline, std, число вычислений модели).

    Исключения:
    - PropagationError с именем входа, если возмущённый расчёт не удался.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    names = list(names) if names is not None else [f"x{i}" for i in range(mean.size)]
    baseline = np.asarray(model_fn(mean), dtype=float)
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    active = [j for j in range(mean.size) if sigma[j] > 0]

    def column(j: int) -> np.ndarray:
        h = max(0.1 * sigma[j], 1e-6 * abs(mean[j]))
        runs = []
        for sign in (1.0, -1.0):
            x = mean.copy()
            x[j] += sign * h
            try:
                runs.append(np.asarray(model_fn(x), dtype=float))
            except CureUQError as exc:
                raise PropagationError(
                    f"Perturbed run failed for input '{names[j]}': {exc}"
                ) from exc
        return ((runs[0] - runs[1]) / (2.0 * h)).ravel()

    columns = parallel_map(column, active, workers)
    if not columns:
        return baseline, np.zeros_like(baseline), 1
    sens = np.column_stack(columns)
    sub = cov[np.ix_(active, active)]
    variance = np.einsum("oi,ij,oj->o", sens, sub, sens)
    std = np.sqrt(np.clip(variance, 0.0, None)).reshape(baseline.shape)
    return baseline, std, 1 + 2 * len(active)


def mc_propagate(
    model_fn: ModelFn,
    sampler: Callable[[np.random.Generator], np.ndarray],
    n: int,
    seed: int,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """
    Монте-Карло: n независимых расчётов, у i-го расчёта свой поток spawn_rng(seed, i).

    Возвращает:
    - (mean, std с делителем n − 1, число удачных расчётов, число отброшенных).

    Исключения:
    - PropagationError, если отброшено более 5 % расчётов.
    """
    if n < 2:
        raise DomainError("Monte Carlo propagation needs n >= 2")

    def task(i: int):
        rng = spawn_rng(seed, i)
        try:
            return np.asarray(model_fn(sampler(rng)), dtype=float)
        except CureUQError as exc:
            logger.debug("Forward sample %d failed: %s", i, exc)
            return None

    outputs = parallel_map(task, range(n), workers)
    kept = [o for o in outputs if o is not None]
    failed = n - len(kept)
    if failed > DROP_LIMIT * n or len(kept) < 2:
        raise PropagationError(f"{failed} of {n} forward runs failed")
    if failed:
        logger.warning("Dropped %d of %d forward runs", failed, n)
    stacked = np.stack(kept)
    return stacked.mean(axis=0), stacked.std(axis=0, ddof=1), len(kept), failed


def inflate_variance(
    sets: Sequence[UncertainParameterSet], k: float
) -> list[UncertainParameterSet]:
    """Отклонения выборок ×√k вокруг среднего, шумовые ковариации ×k."""
    if k <= 0:
        raise DomainError(f"Inflation factor must be positive, got {k}")
    return [s.scaled(k) for s in sets]


def reference_material_sets() -> list[UncertainParameterSet]:
    """
    Эталонные наборы без выборок: C_noise = diag(Δκ²_NLS),
    C_total = diag(δκ²_FOSM) там, где перенос увеличивает неопределённость.
    """
    sets = []
    nls = presets.REFERENCE_UNCERTAINTY["nls"]
    fosm = presets.REFERENCE_UNCERTAINTY["fosm"]
    for step, names in FORWARD_STEPS.items():
        noise = np.array([nls[n] for n in names]) ** 2
        total = np.array([fosm.get(n, nls[n]) for n in names]) ** 2
        sets.append(
            UncertainParameterSet(
                step=step,
                names=list(names),
                values=np.array([presets.REFERENCE_VALUES[n] for n in names]),
                covariance_noise=np.diag(noise),
                covariance_prop=np.diag(np.clip(total - noise, 0.0, None)),
                method=Method.FOSM,
            )
        )
    return sets


def output_grid(path: DirichletPath, points: int) -> np.ndarray:
    return np.linspace(path.times[0], path.times[-1], points)


def resample(result: SimResult, grid: np.ndarray, probes: Sequence[str]) -> np.ndarray:
    """Монотонная интерполяция рядов проб на общую сетку: (пробы·2, сетка)."""
    rows = []
    for name in probes:
        if name not in result.probes:
            raise DomainError(f"Unknown probe '{name}'")
        for series in result.probe(name):
            rows.append(PchipInterpolator(result.times, series)(grid))
    return np.array(rows)


def _statistics(
    mean: np.ndarray, std: np.ndarray, probes: Sequence[str]
) -> dict[str, dict[str, OutputStatistics]]:
    out = {}
    for p, name in enumerate(probes):
        out[name] = {
            q: OutputStatistics(mean=mean[2 * p + i], std=std[2 * p + i])
            for i, q in enumerate(QUANTITIES)
        }
    return out


def _material_inputs(inputs: MaterialUncertainty):
    sets = inflate_variance(inputs.sets, inputs.k) if inputs.k != 1.0 else inputs.sets
    names = [n for s in sets for n in s.names]
    mean = np.concatenate([s.values for s in sets])
    cov = block_diag(*[s.covariance_total for s in sets])
    return sets, names, mean, cov


def material_model(
    scenario: ScenarioConfig, names: Sequence[str], grid, probes
) -> ModelFn:
    base = scenario.parameters or presets.reference_material()

    def model(x: np.ndarray) -> np.ndarray:
        params = base.with_values(dict(zip(names, x.tolist())), validate=True)
        return resample(run_default_scenario(scenario, parameters=params), grid, probes)

    return model


def material_sampler(
    sets: Sequence[UncertainParameterSet], base: MaterialParameters
) -> Callable[[np.random.Generator], np.ndarray]:
    """
    Наборы с эмпирической выборкой: строка κ̌ᵢ и N(κ̌ᵢ, Cᵢ); прочие: N(κ*, C).
    Недопустимые наборы параметров перевыбираются.
    """
    names = [n for s in sets for n in s.names]
    factors = [
        None if s.empirical is not None else cholesky_factor(s.covariance_total)
        for s in sets
    ]

    def draw(rng: np.random.Generator) -> np.ndarray:
        for _ in range(MAX_REDRAWS):
            parts = []
            for s, factor in zip(sets, factors):
                if s.empirical is not None:
                    row = int(rng.integers(s.empirical.shape[0]))
                    center = s.empirical[row]
                    factor_ = cholesky_factor(s.empirical_noise[row])
                else:
                    center, factor_ = s.values, factor
                parts.append(center + factor_ @ rng.standard_normal(center.size))
            x = np.concatenate(parts)
            try:
                base.with_values(dict(zip(names, x.tolist())), validate=True)
            except DomainError:
                continue
            return x
        raise DomainError(f"No admissible parameter set in {MAX_REDRAWS} draws")

    return draw


def boundary_names(spec: BoundaryUncertainty) -> list[str]:
    names = []
    if spec.vary_path:
        names += [f"path_{j + 1}" for j in range(len(spec.path_temps))]
    if spec.vary_mixed:
        names += ["h", "eps"]
    return names


def boundary_moments(spec: BoundaryUncertainty) -> tuple[np.ndarray, np.ndarray]:
    """Средние и стандартные отклонения активных входов (с учётом k)."""
    means, stds = [], []
    scale = np.sqrt(spec.k)
    if spec.vary_path:
        temps = np.asarray(spec.path_temps, dtype=float)
        means.extend(temps)
        stds.extend(spec.rel_sigma * np.abs(temps) * scale)
    if spec.vary_mixed:
        means += [spec.h_mean, spec.eps_mean]
        stds += [spec.h_std * scale, spec.eps_std * scale]
    return np.array(means, dtype=float), np.array(stds, dtype=float)


def _draw_boundary(
    spec: BoundaryUncertainty, rng: np.random.Generator, sigma_scale: float
) -> np.ndarray:
    mean, std = boundary_moments(spec)
    std = std * sigma_scale
    values = []
    n_path = len(spec.path_temps) if spec.vary_path else 0
    if n_path:
        values.extend(rng.normal(mean[:n_path], std[:n_path]))
    if spec.vary_mixed:
        h_std, eps_std = std[n_path], std[n_path + 1]
        h, eps = spec.h_mean, spec.eps_mean
        if h_std:
            h = lognormal_from_moments(spec.h_mean, h_std).sample(rng)
        if eps_std:
            eps = beta_from_moments(spec.eps_mean, eps_std).sample(rng)
        values += [h, eps]
    return np.array(values, dtype=float)


def sample_boundary_inputs(
    spec: BoundaryUncertainty, n: int, seed: int, sigma_scale: float = 1.0
) -> np.ndarray:
    """
    Реализации граничных условий: Θ̂ⱼ ~ N(μⱼ, (0.1μⱼ)²), h ~ LogNormal,
    ε ~ Beta по моментам; моменты времени пути фиксированы.

    Возвращает:
    - Массив n × p, столбцы в порядке boundary_names(spec); строка i совпадает
      с i-й реализацией mc_forward при том же seed.
    """
    return np.array(
        [_draw_boundary(spec, spawn_rng(seed, i), sigma_scale) for i in range(n)]
    ).reshape(n, len(boundary_names(spec)))


def boundary_model(
    scenario: ScenarioConfig, spec: BoundaryUncertainty, grid, probes
) -> ModelFn:
    n_path = len(spec.path_temps) if spec.vary_path else 0

    def model(x: np.ndarray) -> np.ndarray:
        update = {}
        if n_path:
            update["path"] = DirichletPath(nodes=list(zip(spec.path_times, x[:n_path])))
        if spec.vary_mixed:
            update["h"], update["eps"] = float(x[n_path]), float(x[n_path + 1])
        try:
            run = run_default_scenario(scenario, **update)
        except ValueError as exc:
            raise DomainError(f"Invalid boundary realization: {exc}") from exc
        return resample(run, grid, probes)

    return model


def _nominal_path(scenario: ScenarioConfig, inputs) -> DirichletPath:
    if isinstance(inputs, BoundaryUncertainty):
        return DirichletPath(nodes=list(zip(inputs.path_times, inputs.path_temps)))
    return scenario.path or default_curing_path()


def _prepare(scenario: ScenarioConfig, inputs, grid_points: int):
    # ошибки конфигурации сценария всплывают сразу, а не как отказы выборки
    default_domain(scenario)
    if isinstance(inputs, BoundaryUncertainty):
        nominal = {
            "path": _nominal_path(scenario, inputs),
            "h": inputs.h_mean,
            "eps": inputs.eps_mean,
        }
        scenario = scenario.model_copy(update=nominal)
    grid = output_grid(_nominal_path(scenario, inputs), grid_points)
    return scenario, grid


def fosm_forward(
    scenario: ScenarioConfig,
    inputs: MaterialUncertainty | BoundaryUncertainty,
    grid_points: int = 2000,
    probes: Sequence[str] = ("top",),
    workers: int = 1,
) -> UQResult:
    """
    FOSM-перенос: базовый расчёт в среднем входе плюс пара расчётов на вход.

    Исключения:
    - PropagationError, если возмущённый расчёт не удался.
    """
    scenario, grid = _prepare(scenario, inputs, grid_points)
    if isinstance(inputs, MaterialUncertainty):
        _, names, mean, cov = _material_inputs(inputs)
        model = material_model(scenario, names, grid, probes)
    else:
        names = boundary_names(inputs)
        mean, std = boundary_moments(inputs)
        cov = np.diag(std**2)
        model = boundary_model(scenario, inputs, grid, probes)
    baseline, std, evaluations = fosm_propagate(model, mean, cov, workers, names)
    logger.info("FOSM forward study: %d model evaluations", evaluations)
    return UQResult(
        method="fosm",
        times=grid,
        outputs=_statistics(baseline, std, probes),
        evaluations=evaluations,
        parameter_names=names,
    )


def mc_forward(
    scenario: ScenarioConfig,
    inputs: MaterialUncertainty | BoundaryUncertainty,
    n_mc: int,
    seed: int,
    grid_points: int = 2000,
    probes: Sequence[str] = ("top",),
    workers: int = 1,
) -> UQResult:
    """
    Монте-Карло перенос: n_mc расчётов решателя с выборкой входов.

    Исключения:
    - PropagationError, если не удалось более 5 % расчётов.
    """
    scenario, grid = _prepare(scenario, inputs, grid_points)
    if isinstance(inputs, MaterialUncertainty):
        sets, names, _, _ = _material_inputs(inputs)
        model = material_model(scenario, names, grid, probes)
        base = scenario.parameters or presets.reference_material()
        sampler = material_sampler(sets, base)
    else:
        names = boundary_names(inputs)
        model = boundary_model(scenario, inputs, grid, probes)

        def sampler(rng):
            return _draw_boundary(inputs, rng, 1.0)

    mean, std, kept, failed = mc_propagate(model, sampler, n_mc, seed, workers)
    logger.info("MC forward study: %d runs, %d dropped", kept, failed)
    return UQResult(
        method="mc",
        times=grid,
        outputs=_statistics(mean, std, probes),
        evaluations=kept,
        failed=failed,
        parameter_names=names,
    )


def study_inputs(
    study: ForwardStudy, sets: Sequence[UncertainParameterSet] | None = None
) -> MaterialUncertainty | BoundaryUncertainty:
    """
    Входы случаев I–III; без результатов конвейера берутся эталонные наборы.

    Исключения:
    - ConfigurationError, если среди наборов есть шаги вне FORWARD_STEPS.
    """
    mode = StudyMode(study.mode)
    if mode in (StudyMode.CASE_I, StudyMode.CASE_II):
        k = study.k or (10.0 if mode is StudyMode.CASE_II else 1.0)
        available = sets or reference_material_sets()
        foreign = sorted({s.step for s in available} - FORWARD_STEPS.keys())
        if foreign:
            raise ConfigurationError(
                f"Forward study has no use for parameter sets of {foreign}; "
                f"expected steps among {sorted(FORWARD_STEPS)}"
            )
        return MaterialUncertainty(sets=list(available), k=k)
    return BoundaryUncertainty(
        vary_path=mode is StudyMode.CASE_III_FULL, k=study.k or 1.0
    )


def run_study(
    study: ForwardStudy,
    scenario: ScenarioConfig,
    method: Method = Method.MC,
    sets: Sequence[UncertainParameterSet] | None = None,
    workers: int = 1,
) -> UQResult:
    inputs = study_inputs(study, sets)
    if Method(method) is Method.FOSM:
        return fosm_forward(scenario, inputs, study.grid_points, study.probes, workers)
    n_mc = study.n_mc or DEFAULT_N_MC[StudyMode(study.mode)]
    return mc_forward(
        scenario, inputs, n_mc, study.seed, study.grid_points, study.probes, workers
    )
