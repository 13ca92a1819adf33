"""Эксперименты in silico и частотная проверка покрытия интервалов."""

import logging
from typing import Mapping

import numpy as np
import pandas as pd

from cureuq import presets
from cureuq.core import constitutive as cm
from cureuq.core.calibrate import confidence_interval, solve_nls
from cureuq.core.parallel import parallel_map
from cureuq.core.pipeline import (
    FEEDBACK_ROUNDS,
    FEEDBACK_RTOL,
    build_model,
    nls_set,
    propagate_fosm,
)
from cureuq.core.stats import mvn_sample, spawn_rng
from cureuq.exceptions import (
    CureUQError,
    DomainError,
    IdentifiabilityError,
    PropagationError,
)
from cureuq.schemas.calibration import (
    Dependency,
    FitResult,
    IntervalFamily,
    NLSOptions,
    StepSpec,
)
from cureuq.schemas.coverage import (
    CaseId,
    CoverageCase,
    CoverageReport,
    GaussianNoise,
    HeteroCpNoise,
    HeteroCuringNoise,
    ParameterCoverage,
    TruthMode,
    UniformNoise,
)
from cureuq.schemas.datasets import CurveSplit, Dataset, split_curves
from cureuq.schemas.distributions import MultivariateNormal
from cureuq.schemas.materials import CuringState, MaterialParameters

logger = logging.getLogger(__name__)

FAILURE_LIMIT = 0.05
GLASS_POINTS = 5
KINETICS_POINTS = 45
CP_POINTS = 17500

_STEPS = {
    s["id"]: StepSpec.model_validate(s) for s in presets.default_pipeline_steps()
}


def noise_sigma(noise, data: Dataset, truth: MaterialParameters) -> np.ndarray:
    """Поточечное стандартное отклонение шума (для равномерного: σ_U/√3)."""
    n = data.n
    if isinstance(noise, GaussianNoise):
        return np.full(n, noise.sigma)
    if isinstance(noise, UniformNoise):
        return np.full(n, noise.sigma_u / np.sqrt(3.0))
    c = data.column("c")
    if isinstance(noise, HeteroCuringNoise):
        return noise.k1 / (c + noise.k2) + noise.k3 * c
    if isinstance(noise, HeteroCpNoise):
        # пик шума у температуры стеклования
        offset = data.column("theta") - cm.glass_transition(c, truth.glass_transition)
        peak = np.exp(-(offset**2) / (2.0 * noise.omega**2))
        return noise.sigma_min * (1.0 + noise.amplitude * peak)
    raise DomainError(f"Unknown noise model {noise!r}")


def draw_noise(noise, data: Dataset, truth: MaterialParameters, rng) -> np.ndarray:
    if isinstance(noise, UniformNoise):
        return rng.uniform(-noise.sigma_u, noise.sigma_u, data.n)
    return rng.normal(0.0, noise_sigma(noise, data, truth))


def glass_transition_cures(n: int) -> np.ndarray:
    """
    Степени отверждения образцов для Θ_G: c = lo + (hi − lo)·sᵖ на
    равномерной сетке s ∈ [0, 1] (presets.GLASS_CURE_RANGE, GLASS_CURE_SPACING).
    При n = 5 и σ = 4 °C асимптотические Δκ близки к эталонным.
    """
    lo, hi = presets.GLASS_CURE_RANGE
    return lo + (hi - lo) * np.linspace(0.0, 1.0, n) ** presets.GLASS_CURE_SPACING


def glass_transition_data(n: int, truth: MaterialParameters) -> Dataset:
    c = glass_transition_cures(n)
    return Dataset(
        label="glass_transition",
        predictors={"c": c},
        observations=cm.glass_transition(c, truth.glass_transition),
        observation_name="theta_g",
    )


def kinetics_data(n_per_curve: int, truth: MaterialParameters) -> Dataset:
    thetas, cures = [], []
    curves = zip(presets.KINETICS_TEMPERATURES, presets.KINETICS_INTERVALS)
    for theta, (lo, hi) in curves:
        cures.append(np.linspace(lo, hi, n_per_curve))
        thetas.append(np.full(n_per_curve, theta))
    theta, c = np.concatenate(thetas), np.concatenate(cures)
    rate = cm.curing_rate(
        CuringState.from_celsius(theta, c), truth.kinetics, truth.glass_transition
    )
    return Dataset(
        label="kinetics",
        predictors={"theta": theta, "c": c},
        observations=rate,
        observation_name="c_dot",
    )


def heat_capacity_data(n_per_curve: int, truth: MaterialParameters) -> Dataset:
    grid = np.linspace(*presets.CP_RANGE, n_per_curve)
    theta = np.tile(grid, len(presets.CP_CURES))
    c = np.repeat(presets.CP_CURES, n_per_curve)
    cp = cm.specific_heat(
        CuringState.from_celsius(theta, c), truth.heat_capacity, truth.glass_transition
    )
    return Dataset(
        label="heat_capacity",
        predictors={"theta": theta, "c": c},
        observations=cp,
        observation_name="cp",
    )


def _noisy(data: Dataset, noise, truth, rng, clean: bool) -> Dataset:
    if clean:
        return data
    return data.with_observations(
        data.observations + draw_noise(noise, data, truth, rng)
    )


def insilico_files(
    case: CoverageCase,
    truth: MaterialParameters,
    rng: np.random.Generator,
    clean: bool = False,
) -> dict[str, Dataset]:
    """
    Данные одного эксперимента in silico по файлам: чистый отклик прямой
    модели плюс одна реализация шума.

    Параметры:
    - clean: Без шума (наблюдения точно на кривых модели).

    Возвращает:
    - Словарь имя файла -> Dataset; кинетика разбита по температурам.
    """
    tg = glass_transition_data(case.n_d_tg, truth)
    tg_noise = case.noise
    if case.case is not CaseId.SPARSE_TG:
        tg_noise = GaussianNoise(sigma=case.sigma_tg)
    files = {"glass_transition.csv": _noisy(tg, tg_noise, truth, rng, clean)}
    if case.case is CaseId.KINETICS:
        data = kinetics_data(case.n_d or KINETICS_POINTS, truth)
        data = _noisy(data, case.noise, truth, rng, clean)
        theta = data.column("theta")
        for value in presets.KINETICS_TEMPERATURES:
            name = presets.kinetics_file(value)
            files[name] = data.subset(theta == value, label=name.removesuffix(".csv"))
    elif case.case is CaseId.HEAT_CAPACITY:
        data = heat_capacity_data(case.n_d or CP_POINTS, truth)
        files["heat_capacity.csv"] = _noisy(data, case.noise, truth, rng, clean)
    return files


def generate_insilico(
    case: CoverageCase,
    truth: MaterialParameters,
    rng: np.random.Generator,
    clean: bool = False,
) -> dict[str, Dataset]:
    """
    Данные шагов калибровки одного повторения.

    Возвращает:
    - Словарь шаг -> Dataset; кинетика каждой температуры делится на
      химическую часть (до 90 % максимальной степени отверждения) и
      диффузионную.
    """
    files = insilico_files(case, truth, rng, clean)
    out = {"glass_transition": files["glass_transition.csv"]}
    if case.case is CaseId.KINETICS:
        names = [presets.kinetics_file(t) for t in presets.KINETICS_TEMPERATURES]
        kinetics = Dataset.concat([files[n] for n in names], label="kinetics")
        for part in ("chemical", "diffusion"):
            step = f"kinetics_{part}"
            out[step] = split_curves(kinetics, CurveSplit(part=part)).model_copy(
                update={"label": step}
            )
    elif case.case is CaseId.HEAT_CAPACITY:
        out["heat_capacity"] = files["heat_capacity.csv"]
    return out


def _reference_init(step_id: str) -> dict[str, float]:
    return {n: presets.REFERENCE_VALUES[n] for n in _STEPS[step_id].free}


def _fit(
    step_id: str,
    data: Dataset,
    fixed: Mapping[str, float] | None = None,
    options: NLSOptions | None = None,
    init: Mapping[str, float] | None = None,
):
    step = _STEPS[step_id]
    model = build_model(step, fixed)
    fit = solve_nls(model, data, init or _reference_init(step_id), options)
    if not fit.converged or fit.covariance is None:
        raise PropagationError(f"Repetition fit of '{step_id}' failed")
    return model, fit


def _kinetics_fits(
    data: dict[str, Dataset], tg_values: Mapping[str, float], options: NLSOptions
):
    """
    Поочерёдная калибровка химической и диффузионной частей кинетики, как
    в run_pipeline_nls: химическая часть уточняется с f_d при текущем b_d.

    Возвращает:
    - (chem_fit, diffusion_model, diffusion_fit); при вырождении b_d (f_d
      становится ступенькой и якобиан зануляется) последние два равны None.
    """
    _, chem = _fit("kinetics_chemical", data["kinetics_chemical"], options=options)
    diffusion = None
    for _ in range(FEEDBACK_ROUNDS):
        _, diffusion = _diffusion_fit(data, tg_values, chem, options, diffusion)
        if diffusion is None:
            return chem, None, None
        _, refit = _fit(
            "kinetics_chemical",
            data["kinetics_chemical"],
            {**tg_values, **diffusion.values()},
            options,
            init=chem.values(),
        )
        shift = np.abs(refit.kappa_star - chem.kappa_star) / np.abs(chem.kappa_star)
        chem = refit
        if shift.max() <= FEEDBACK_RTOL:
            break
    model, diffusion = _diffusion_fit(data, tg_values, chem, options, diffusion)
    return chem, model, diffusion


def _diffusion_fit(data, tg_values, chem: FitResult, options, previous):
    init = previous.values() if previous is not None else None
    try:
        return _fit(
            "kinetics_diffusion",
            data["kinetics_diffusion"],
            {**tg_values, **chem.values()},
            options,
            init=init,
        )
    except (IdentifiabilityError, PropagationError) as exc:
        logger.debug("Diffusion width collapsed: %s", exc)
        return None, None


def _hits(fit: FitResult, truth: Mapping[str, float], level: float, cov=None):
    out = {}
    for family in (IntervalFamily.NORMAL, IntervalFamily.STUDENT_T):
        bounds = confidence_interval(fit, level, family, covariance=cov)
        for name, (lo, hi) in zip(fit.names, bounds):
            out.setdefault(name, []).append(bool(lo <= truth[name] <= hi))
    return out


def _calibrate_case(
    case: CoverageCase, data: dict[str, Dataset], truth: MaterialParameters
) -> dict[str, tuple]:
    """
    Калибрует срез конвейера одного повторения.

    Возвращает:
    - Словарь параметр -> (normal, t, normal без переноса, t без переноса);
      последние два равны None, если у шага нет входных параметров.
    """
    flat = truth.flat()
    options = NLSOptions(variance=case.variance)
    _, tg_fit = _fit("glass_transition", data["glass_transition"], options=options)
    if case.case is CaseId.SPARSE_TG:
        tg_hits = _hits(tg_fit, flat, case.level)
        return {n: (*h, None, None) for n, h in tg_hits.items()}

    hits = {}
    upstream = []
    if case.fix_upstream:
        tg_values = {n: flat[n] for n in tg_fit.names}
    else:
        tg_values = tg_fit.values()
        upstream.append(
            (Dependency(step="glass_transition"), nls_set(tg_fit, "glass_transition"))
        )

    if case.case is CaseId.KINETICS:
        chem_fit, model, fit = _kinetics_fits(data, tg_values, options)
        for name, h in _hits(chem_fit, flat, case.level).items():
            hits[name] = (*h, None, None)
        if fit is None:
            # вырожденная оценка b_d не накрывает истину ни в одном семействе
            hits["b_d"] = (False, False, False, False)
            return hits
        chem_set = nls_set(chem_fit, "kinetics_chemical")
        upstream.append((Dependency(step="kinetics_chemical"), chem_set))
        step_id = "kinetics_diffusion"
    else:
        step_id = "heat_capacity"
        model, fit = _fit(step_id, data[step_id], tg_values, options)

    noise_only = _hits(fit, flat, case.level)
    total = noise_only
    if case.propagate and upstream:
        propagated = propagate_fosm(
            model, data[step_id], fit, upstream, options, step_id=step_id
        )
        total = _hits(fit, flat, case.level, cov=propagated.covariance_total)
    for name in fit.names:
        extra = noise_only[name] if upstream else [None, None]
        hits[name] = (*total[name], *extra)
    return hits


def _truth_blocks(case: CoverageCase) -> list[str]:
    if case.case is CaseId.SPARSE_TG:
        return ["glass_transition"]
    if case.case is CaseId.KINETICS:
        return ["glass_transition", "kinetics_chemical", "kinetics_diffusion"]
    return ["glass_transition", "heat_capacity"]


def pilot_covariances(case: CoverageCase, seed: int) -> dict[str, FitResult]:
    """Пилотная калибровка при эталонных параметрах для маргинального режима."""
    truth = presets.reference_material()
    options = NLSOptions(variance=case.variance)
    data = generate_insilico(case, truth, spawn_rng(seed, 0))
    _, tg_fit = _fit("glass_transition", data["glass_transition"], options=options)
    fits = {"glass_transition": tg_fit}
    tg = tg_fit.values()
    if case.case is CaseId.KINETICS:
        chem, _, diffusion = _kinetics_fits(data, tg, options)
        if diffusion is None:
            raise PropagationError("Pilot fit of the diffusion width collapsed")
        fits["kinetics_chemical"] = chem
        fits["kinetics_diffusion"] = diffusion
    elif case.case is CaseId.HEAT_CAPACITY:
        fits["heat_capacity"] = _fit(
            "heat_capacity", data["heat_capacity"], tg, options
        )[1]
    return fits


def sample_truth(
    case: CoverageCase, pilot: Mapping[str, FitResult], rng: np.random.Generator
) -> MaterialParameters:
    reference = presets.reference_material()
    values = {}
    for step in _truth_blocks(case):
        fit = pilot[step]
        names = fit.names
        cov = fit.covariance
        if case.diagonal_only and step == "kinetics_chemical":
            cov = np.diag(np.diag(cov))
        center = np.array([presets.REFERENCE_VALUES[n] for n in names])
        draw = mvn_sample(MultivariateNormal(mean_vector=center, covariance=cov), rng)
        values.update(zip(names, draw.tolist()))
    return reference.with_values(values, validate=True)


def _share(column: np.ndarray) -> float | None:
    if column[0] is None:
        return None
    return float(np.mean(column.astype(bool)))


def run_coverage(case: CoverageCase, seed: int, workers: int = 1) -> CoverageReport:
    """
    Повторяет калибровку n_cov раз и считает долю интервалов, накрывающих истину.

    Исключения:
    - PropagationError, если не удалось более 5 % повторений.
    """
    marginal = case.truth_mode is TruthMode.MARGINAL
    pilot = pilot_covariances(case, seed) if marginal else {}
    reference = presets.reference_material()

    def repetition(i: int):
        rng = spawn_rng(seed, 1, i)
        try:
            truth = sample_truth(case, pilot, rng) if pilot else reference
            data = generate_insilico(case, truth, rng)
            return _calibrate_case(case, data, truth)
        except CureUQError as exc:
            logger.debug("Coverage repetition %d failed: %s", i, exc)
            return None

    results = parallel_map(repetition, range(case.n_cov), workers)
    kept = [r for r in results if r is not None]
    dropped = case.n_cov - len(kept)
    if dropped > FAILURE_LIMIT * case.n_cov or not kept:
        raise PropagationError(
            f"{dropped} of {case.n_cov} coverage repetitions failed"
        )
    if dropped:
        logger.warning("Dropped %d of %d coverage repetitions", dropped, case.n_cov)

    parameters = []
    for name in kept[0]:
        flags = np.array([r[name] for r in kept], dtype=object)
        normal, student_t, normal_noise, t_noise = (
            _share(flags[:, j]) for j in range(4)
        )
        parameters.append(
            ParameterCoverage(
                name=name,
                normal=normal,
                student_t=student_t,
                normal_noise_only=normal_noise,
                student_t_noise_only=t_noise,
            )
        )
    return CoverageReport(
        case=case,
        parameters=parameters,
        repetitions=len(kept),
        dropped=dropped,
        seed=seed,
    )


def residual_diagnostics(fit: FitResult, data: Dataset, by: str = "c") -> pd.DataFrame:
    """|r_i| по точкам, упорядоченные по предиктору by."""
    frame = pd.DataFrame({by: data.column(by), "abs_residual": np.abs(fit.residuals)})
    return frame.sort_values(by, kind="stable").reset_index(drop=True)


# Стандартные отклонения шума по файлам полного конвейера; для кинетики
# асимптотическое Δb_d при нём близко к эталонному (около 0.4 K)
PIPELINE_NOISE = {
    "glass_transition": 4.0,
    "kinetics": 4e-6,
    "thermal_expansion": 1e-4,
    "chemical_shrinkage": 1e-4,
    "glass_expansion": 1e-4,
    "heat_capacity": 16.3,
    "diffusivity": 2e-9,
}


def _grid(*axes) -> tuple[np.ndarray, ...]:
    return tuple(a.ravel() for a in np.meshgrid(*axes, indexing="ij"))


def generate_pipeline_data(
    truth: MaterialParameters,
    rng: np.random.Generator | None = None,
    noise_scale: float = 0.0,
    rho_ref: float = presets.RHO_EPOXY,
) -> dict[str, Dataset]:
    """
    Данные всех шагов конвейера по умолчанию, по одному Dataset на файл.

    Параметры:
    - truth: Параметры, по которым строятся чистые наблюдения.
    - noise_scale: Множитель к PIPELINE_NOISE; 0 даёт точные данные.

    Возвращает:
    - Словарь имя файла -> Dataset (наблюдение в последнем столбце).
    """
    rng = rng or np.random.default_rng(0)
    p = truth
    files: dict[str, Dataset] = {}

    def add(name, kind, predictors, observations, observation_name):
        sigma = PIPELINE_NOISE[kind] * noise_scale
        noisy = observations
        if sigma:
            noisy = observations + rng.normal(0.0, sigma, observations.size)
        files[name] = Dataset(
            label=name.removesuffix(".csv"),
            predictors=predictors,
            observations=noisy,
            observation_name=observation_name,
        )

    tg = glass_transition_data(GLASS_POINTS, p)
    add(
        "glass_transition.csv",
        "glass_transition",
        tg.predictors,
        tg.observations,
        "theta_g",
    )

    curves = zip(presets.KINETICS_TEMPERATURES, presets.KINETICS_INTERVALS)
    for theta, (lo, hi) in curves:
        c = np.linspace(lo, hi, KINETICS_POINTS)
        t = np.full_like(c, theta)
        state = CuringState.from_celsius(t, c)
        rate = cm.curing_rate(state, p.kinetics, p.glass_transition)
        predictors = {"theta": t, "c": c}
        add(presets.kinetics_file(theta), "kinetics", predictors, rate, "c_dot")

    sp = p.shrinkage
    theta = np.linspace(20.0, 100.0, 30)
    add(
        "thermal_expansion.csv",
        "thermal_expansion",
        {"theta": theta},
        1.0 + sp.alpha_theta * (theta - sp.theta_ref),
        "volume_ratio",
    )

    theta, c = _grid(np.array([60.0, 80.0, 100.0]), np.linspace(0.0, 1.0, 12))
    rel = theta - sp.theta_ref
    shrink = 1.0 + sp.alpha_theta * rel - sp.alpha_c * c - sp.alpha_theta_c * rel * c
    add(
        "chemical_shrinkage.csv",
        "chemical_shrinkage",
        {"theta": theta, "c": c},
        shrink,
        "volume_ratio",
    )

    theta, c = _grid(np.linspace(-20.0, 160.0, 37), np.array([0.5, 0.8, 1.0]))
    state = CuringState.from_celsius(theta, c)
    add(
        "glass_expansion.csv",
        "glass_expansion",
        {"theta": theta, "c": c},
        cm.deformation(state, sp, p.glass_transition),
        "volume_ratio",
    )

    cp_data = heat_capacity_data(200, p)
    add(
        "heat_capacity.csv",
        "heat_capacity",
        cp_data.predictors,
        cp_data.observations,
        "cp",
    )

    theta, c = _grid(np.linspace(20.0, 200.0, 37), np.array([0.0, 0.3, 0.6, 1.0]))
    state = CuringState.from_celsius(theta, c)
    kappa = cm.conductivity(state, p.conductivity)
    volume_ratio = cm.deformation(state, sp, p.glass_transition)
    cp = cm.specific_heat(state, p.heat_capacity, p.glass_transition)
    add(
        "diffusivity.csv",
        "diffusivity",
        {"theta": theta, "c": c},
        kappa * volume_ratio / (rho_ref * cp),
        "a_theta",
    )
    return files
