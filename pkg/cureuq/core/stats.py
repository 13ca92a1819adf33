"""Распределения, критические значения и выборочные моменты."""

import logging

import numpy as np
from scipy import optimize, special
from scipy.stats import norm

from cureuq.exceptions import DomainError
from cureuq.schemas.distributions import Beta, LogNormal, MultivariateNormal

logger = logging.getLogger(__name__)


def spawn_rng(base_seed: int, *task_key: int) -> np.random.Generator:
    """
    Независимый поток случайных чисел для задачи с ключом task_key.

    Поток определяется только парой (base_seed, task_key) и не зависит от
    порядка выполнения задач.
    """
    key = tuple(int(k) for k in task_key)
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)
    return np.random.default_rng(seq)


def lognormal_from_moments(mu: float, sigma: float) -> LogNormal:
    if mu <= 0:
        raise DomainError(f"Lognormal mean must be positive, got {mu}")
    if sigma < 0:
        raise DomainError(f"Standard deviation must be non-negative, got {sigma}")
    s2 = np.log1p(sigma**2 / mu**2)
    return LogNormal(mu_ln=float(np.log(mu) - 0.5 * s2), sigma_ln=float(np.sqrt(s2)))


def beta_from_moments(mu: float, sigma: float) -> Beta:
    if not 0.0 < mu < 1.0:
        raise DomainError(f"Beta mean must lie in (0, 1), got {mu}")
    if sigma <= 0 or sigma**2 >= mu * (1.0 - mu):
        raise DomainError(
            f"Variance {sigma**2:g} is not admissible for a beta mean of {mu:g}"
        )
    common = mu * (1.0 - mu) / sigma**2 - 1.0
    return Beta(alpha=common * mu, beta=common * (1.0 - mu))


def _t_cdf(t: float, dof: int) -> float:
    # CDF распределения Стьюдента через регуляризованную неполную бета-функцию
    tail = 0.5 * special.betainc(0.5 * dof, 0.5, dof / (dof + t * t))
    return 1.0 - tail if t >= 0 else tail


def t_critical(dof: int, level: float = 0.95) -> float:
    """
    Двусторонний критический уровень распределения Стьюдента.

    Параметры:
    - dof: Число степеней свободы (≥ 1).
    - level: Доверительная вероятность в (0, 1).

    Возвращает:
    - t, для которого CDF(t) = (1 + level) / 2.
    """
    if dof < 1:
        raise DomainError(f"Degrees of freedom must be positive, got {dof}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"Confidence level must lie in (0, 1), got {level}")
    target = 0.5 * (1.0 + level)
    upper = 2.0 * normal_critical(level)
    while _t_cdf(upper, dof) < target:
        upper *= 2.0
    return optimize.brentq(lambda t: _t_cdf(t, dof) - target, 0.0, upper, xtol=1e-10)


def normal_critical(level: float = 0.95) -> float:
    return float(norm.ppf(0.5 * (1.0 + level)))


def cholesky_factor(covariance: np.ndarray) -> np.ndarray:
    """
    Нижний треугольный множитель ковариации с лестницей диагональных добавок
    от 1e-12·tr/k до 1e-6·tr/k.

    Исключения:
    - DomainError, если разложение невозможно даже с максимальной добавкой.
    """
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    k = cov.shape[0]
    scale = np.trace(cov) / k
    jitter = 1e-12 * scale
    while jitter <= 1e-6 * scale * (1 + 1e-9):
        try:
            factor = np.linalg.cholesky(cov + jitter * np.eye(k))
            logger.warning("Covariance regularised with diagonal jitter %.3g", jitter)
            return factor
        except np.linalg.LinAlgError:
            jitter *= 10.0
    smallest = float(np.linalg.eigvalsh(0.5 * (cov + cov.T)).min())
    raise DomainError(
        f"Covariance is not positive semidefinite (smallest eigenvalue {smallest:.3g})"
    )


def mvn_sample(d: MultivariateNormal, rng: np.random.Generator) -> np.ndarray:
    factor = cholesky_factor(d.covariance)
    z = rng.standard_normal(d.mean_vector.shape[0])
    return d.mean_vector + factor @ z


def sample_moments(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Выборочное среднее и несмещённая ковариация (делитель n − 1)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DomainError("At least two samples are required for sample moments")
    mean = x.mean(axis=0)
    centered = x - mean
    return mean, centered.T @ centered / (x.shape[0] - 1)
