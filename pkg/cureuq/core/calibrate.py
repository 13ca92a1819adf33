"""Нелинейный МНК (Левенберг–Марквардт) с асимптотической ковариацией."""

import logging
from typing import Mapping

import numpy as np
from scipy import optimize

from cureuq.core.stats import normal_critical, t_critical
from cureuq.exceptions import ConvergenceError, DomainError, IdentifiabilityError
from cureuq.schemas.calibration import (
    FitResult,
    IntervalFamily,
    NLSOptions,
    ResidualModel,
    VarianceEstimator,
)
from cureuq.schemas.datasets import Dataset

logger = logging.getLogger(__name__)


class _Transform:
    """Внутренние переменные u: κ/|init| либо ln(κ/init) для положительных."""

    def __init__(self, names, init: np.ndarray, log_params):
        self.init = init
        self.log = np.array([n in log_params for n in names])
        if np.any(self.log & (init <= 0)):
            bad = [n for n, flag, v in zip(names, self.log, init) if flag and v <= 0]
            raise DomainError(f"Log-parameterised values must be positive: {bad}")
        self.scale = np.where(init != 0, np.abs(init), 1.0)

    def to_kappa(self, u: np.ndarray) -> np.ndarray:
        grown = self.init * np.exp(np.where(self.log, u, 0.0))
        return np.where(self.log, grown, self.scale * u)

    def to_u(self, kappa: np.ndarray) -> np.ndarray:
        safe = np.where(self.log, kappa / self.init, 1.0)
        return np.where(self.log, np.log(safe), kappa / self.scale)

    def dkappa_du(self, kappa: np.ndarray) -> np.ndarray:
        return np.where(self.log, kappa, self.scale)


def _initial_vector(model: ResidualModel, init) -> np.ndarray:
    if isinstance(init, Mapping):
        missing = [n for n in model.free if n not in init]
        if missing:
            raise DomainError(f"Missing initial values for {missing}")
        init = [init[n] for n in model.free]
    vector = np.asarray(init, dtype=float)
    if vector.shape != (len(model.free),) or not np.all(np.isfinite(vector)):
        raise DomainError("Initial parameter vector must be finite and match the model")
    return vector


def residual_function(model: ResidualModel, data: Dataset):
    observations = (
        np.asarray(model.observe(model.fixed, data), dtype=float)
        if model.observe is not None
        else data.observations
    )

    def residual(kappa: np.ndarray) -> np.ndarray:
        params = {**model.fixed, **dict(zip(model.free, kappa.tolist()))}
        return np.asarray(model.predict(params, data), dtype=float) - observations

    return residual


def model_jacobian(
    model: ResidualModel, data: Dataset, kappa: np.ndarray, fd_step=1e-6
):
    """∂s/∂κ: аналитически, если модель это умеет, иначе центральными разностями."""
    params = {**model.fixed, **dict(zip(model.free, kappa.tolist()))}
    if model.gradient is not None:
        return np.asarray(model.gradient(params, data), dtype=float).reshape(data.n, -1)
    jac = np.empty((data.n, kappa.size))
    for i, name in enumerate(model.free):
        h = fd_step * (abs(kappa[i]) if kappa[i] != 0 else 1.0)
        up = dict(params, **{name: kappa[i] + h})
        down = dict(params, **{name: kappa[i] - h})
        jac[:, i] = (
            np.asarray(model.predict(up, data), float)
            - np.asarray(model.predict(down, data), float)
        ) / (2.0 * h)
    return jac


def solve_nls(
    model: ResidualModel,
    data: Dataset,
    init,
    options: NLSOptions | None = None,
) -> FitResult:
    """
    Минимизирует ½‖s(κ) − d‖² методом Левенберга–Марквардта.

    Параметры:
    - model: Модель отклика шага с фиксированными параметрами предыдущих шагов.
    - data: Данные шага.
    - init: Начальное приближение (вектор в порядке model.free или словарь).
    - options: Допуски и ограничения итераций.

    Возвращает:
    - FitResult; ковариация заполняется только при сходимости и n_D > n_κ.

    Исключения:
    - DomainError при нечисловой невязке в начальной точке.
    - IdentifiabilityError при вырожденной матрице JᵀJ в решении.
    """
    options = options or NLSOptions()
    kappa0 = _initial_vector(model, init)
    if data.n < kappa0.size:
        raise DomainError(
            f"Step '{data.label}' has {data.n} data for {kappa0.size} parameters"
        )
    transform = _Transform(model.free, kappa0, model.log_params)
    residual = residual_function(model, data)

    u = transform.to_u(kappa0)
    kappa = transform.to_kappa(u)
    r = residual(kappa)
    if not np.all(np.isfinite(r)):
        raise DomainError(f"Non-finite residual at the initial point of '{data.label}'")
    ssr = float(r @ r)

    def jac_u(u_):
        kappa_ = transform.to_kappa(u_)
        jac = model_jacobian(model, data, kappa_, options.fd_step)
        return jac * transform.dkappa_du(kappa_)

    # шаг в область, где модель не определена, получает большую невязку
    penalty = np.full(data.n, 1e6 * (np.sqrt(ssr) + 1.0))

    def residual_u(u_):
        try:
            r_ = residual(transform.to_kappa(u_))
        except DomainError:
            return penalty
        return r_ if np.all(np.isfinite(r_)) else penalty

    converged = ssr == 0.0
    iterations = 0
    if not converged:
        solution = optimize.least_squares(
            residual_u,
            u,
            jac=jac_u,
            method="lm",
            xtol=options.xtol,
            ftol=options.ftol,
            max_nfev=options.max_iter * (u.size + 1),
        )
        iterations = int(solution.nfev)
        converged = solution.status > 0
        u = solution.x
        kappa = transform.to_kappa(u)
        r = residual(kappa)
        ssr = float(r @ r)
    if not converged:
        logger.warning(
            "NLS for '%s' did not converge in %d evaluations",
            data.label,
            options.max_iter * (u.size + 1),
        )

    jacobian = model_jacobian(model, data, kappa, options.fd_step)
    n_d, n_k = data.n, kappa.size
    fit = FitResult(
        names=list(model.free),
        kappa_star=kappa,
        sigma2_hat=noise_variance(ssr, n_d, n_k, options.variance),
        ssr=ssr,
        n_d=n_d,
        jacobian=jacobian,
        residuals=r,
        converged=converged,
        iterations=iterations,
    )
    if converged and n_d > n_k:
        fit.covariance = asymptotic_covariance(fit, options.rcond)
    return fit


def noise_variance(
    ssr: float, n_d: int, n_k: int, estimator=VarianceEstimator.RESIDUAL_DOF
) -> float:
    """
    σ̂² = SSR/(n_D − n_κ) или, для VarianceEstimator.SAMPLE, SSR/(n_D − 1).

    Возвращает:
    - nan, если n_D ≤ n_κ.
    """
    if n_d <= n_k:
        return float("nan")
    if VarianceEstimator(estimator) is VarianceEstimator.SAMPLE:
        return ssr / (n_d - 1)
    return ssr / (n_d - n_k)


def asymptotic_covariance(fit: FitResult, rcond: float = 1e-12) -> np.ndarray:
    """
    C = σ̂²(JᵀJ)⁻¹ с σ̂² = SSR/(n_D − n_κ) (или SSR/(n_D − 1), см. noise_variance).

    Обращение выполняется через SVD столбцово-масштабированного якобиана.

    Исключения:
    - ConvergenceError, если решение не сошлось или данных слишком мало.
    - IdentifiabilityError с направлением наименьшего сингулярного вектора.
    """
    if not fit.converged or fit.dof < 1:
        raise ConvergenceError("Covariance needs a converged fit with n_D > n_kappa")
    jac = fit.jacobian
    norms = np.linalg.norm(jac, axis=0)
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    _, sv, vt = np.linalg.svd(jac * scale, full_matrices=False)
    if np.any(norms == 0) or sv[-1] <= rcond * sv[0]:
        direction = dict(zip(fit.names, np.round(vt[-1], 6).tolist()))
        raise IdentifiabilityError(
            f"Parameters are not identifiable along {direction}", direction
        )
    inv = (vt.T / sv**2) @ vt
    cov = fit.sigma2_hat * scale[:, None] * inv * scale[None, :]
    return 0.5 * (cov + cov.T)


def confidence_interval(
    fit: FitResult,
    level: float = 0.95,
    family: IntervalFamily = IntervalFamily.NORMAL,
    covariance: np.ndarray | None = None,
) -> np.ndarray:
    """Интервалы κ_i ± crit·sqrt(C_ii), массив n_κ × 2."""
    cov = fit.covariance if covariance is None else covariance
    if cov is None:
        raise ConvergenceError("Confidence intervals need a covariance")
    if IntervalFamily(family) is IntervalFamily.STUDENT_T:
        crit = t_critical(fit.dof, level)
    else:
        crit = normal_critical(level)
    half = crit * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return np.column_stack([fit.kappa_star - half, fit.kappa_star + half])
