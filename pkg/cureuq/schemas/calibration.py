from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from cureuq.schemas.common import Array, ArrayModel
from cureuq.schemas.datasets import Dataset, DatasetRef


class Method(str, Enum):
    NLS = "nls"
    FOSM = "fosm"
    MC = "mc"


class IntervalFamily(str, Enum):
    NORMAL = "normal"
    STUDENT_T = "student_t"


class VarianceEstimator(str, Enum):
    """Делитель SSR в σ̂²: n_D − n_κ либо n_D − 1 (выборочная дисперсия невязок)."""

    RESIDUAL_DOF = "residual_dof"
    SAMPLE = "sample"


class NLSOptions(BaseModel):
    max_iter: int = Field(200, ge=1)
    xtol: float = Field(1e-9, gt=0, description="Relative parameter step tolerance")
    ftol: float = Field(1e-12, gt=0, description="Relative SSR change tolerance")
    fd_step: float = Field(1e-6, gt=0, description="Relative finite-difference step")
    rcond: float = Field(1e-12, gt=0, description="Singular value cut-off of J")
    variance: VarianceEstimator = Field(
        VarianceEstimator.RESIDUAL_DOF, description="Divisor of SSR in noise variance"
    )


class ResidualModel(BaseModel):
    """
    Модель отклика одного шага калибровки.

    ``predict(params, data)`` получает словарь всех параметров (свободных и
    фиксированных) и возвращает отклик s длины n_D. ``gradient`` при наличии
    возвращает аналитическую матрицу ∂s/∂κ для свободных параметров.
    ``observe(fixed, data)`` пересчитывает наблюдения из фиксированных
    параметров, если они производные.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    free: tuple[str, ...]
    fixed: dict[str, float] = Field(default_factory=dict)
    predict: Callable[[dict[str, float], Dataset], np.ndarray]
    gradient: Optional[Callable[[dict[str, float], Dataset], np.ndarray]] = None
    observe: Optional[Callable[[dict[str, float], Dataset], np.ndarray]] = None
    log_params: frozenset[str] = frozenset()

    def with_fixed(self, fixed: dict[str, float]) -> "ResidualModel":
        return self.model_copy(update={"fixed": dict(fixed)})


class FitResult(ArrayModel):
    names: list[str]
    kappa_star: Array
    covariance: Optional[Array] = None
    sigma2_hat: float
    ssr: float
    n_d: int
    jacobian: Array
    residuals: Array
    converged: bool
    iterations: int

    @property
    def n_kappa(self) -> int:
        return len(self.names)

    @property
    def dof(self) -> int:
        return self.n_d - self.n_kappa

    def values(self) -> dict[str, float]:
        return dict(zip(self.names, self.kappa_star.tolist()))

    def delta(self) -> np.ndarray:
        """Δκ_NLS;i = sqrt(C_ii)."""
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


class UncertainParameterSet(ArrayModel):
    """Значения параметров шага с ковариациями шума и распространения."""

    step: str
    names: list[str]
    values: Array
    covariance_noise: Array
    covariance_prop: Array
    empirical: Optional[Array] = Field(None, description="n_MC x n_kappa sample")
    empirical_noise: Optional[Array] = Field(
        None, description="Per-sample noise covariances, n_MC x n_kappa x n_kappa"
    )
    method: Method

    @model_validator(mode="after")
    def check_shapes(self):
        k = len(self.names)
        if self.values.shape != (k,):
            raise ValueError("values length must match names")
        for cov in (self.covariance_noise, self.covariance_prop):
            if cov.shape != (k, k):
                raise ValueError("covariances must be k x k")
        has_sample = self.empirical is not None
        if has_sample != (self.method == Method.MC):
            raise ValueError("empirical sample is present iff method is mc")
        if has_sample:
            n = self.empirical.shape[0]
            if self.empirical.shape != (n, k):
                raise ValueError("empirical sample must be n x k")
            if self.empirical_noise is None or self.empirical_noise.shape != (n, k, k):
                raise ValueError("empirical noise covariances must be n x k x k")
        return self

    @computed_field
    @property
    def covariance_total(self) -> Array:
        return self.covariance_noise + self.covariance_prop

    def delta_noise(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance_noise), 0.0, None))

    def delta_total(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance_total), 0.0, None))

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def scaled(self, k: float) -> "UncertainParameterSet":
        """Копия с k-кратной дисперсией (см. forward_uq.inflate_variance)."""
        update = {
            "covariance_noise": self.covariance_noise * k,
            "covariance_prop": self.covariance_prop * k,
        }
        if self.empirical is not None:
            center = self.empirical.mean(axis=0)
            update["empirical"] = center + np.sqrt(k) * (self.empirical - center)
            update["empirical_noise"] = self.empirical_noise * k
        return self.model_copy(update=update)


class Dependency(BaseModel):
    step: str
    immediate: bool = Field(True, description="Immediate predecessor or earlier step")


class StepSpec(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "id": "kinetics_diffusion",
                "model": "curing_rate",
                "free": ["b_d"],
                "depends": [
                    {"step": "glass_transition", "immediate": True},
                    {"step": "kinetics_chemical", "immediate": True},
                ],
                "dataset": {
                    "files": ["kinetics_080C.csv", "kinetics_100C.csv"],
                    "split": {"part": "diffusion"},
                },
                "init": {"b_d": 6.0},
            }
        }
    )

    id: str
    model: str = Field(..., description="Residual model name")
    free: list[str] = Field(..., min_length=1)
    depends: list[Dependency] = Field(default_factory=list)
    feedback: list[str] = Field(
        default_factory=list,
        description="Downstream steps fed back into alternating refits",
    )
    dataset: DatasetRef
    init: dict[str, float] = Field(default_factory=dict)
    log_params: Optional[list[str]] = Field(
        None, description="Log-reparameterised parameters; model default if omitted"
    )
    rho_ref: float = Field(1150.0, gt=0, description="Reference density [kg/m³]")


class PipelineConfig(BaseModel):
    steps: list[StepSpec] = Field(..., min_length=1)
    data_dir: Optional[Path] = None
    method: Method = Method.NLS
    n_mc: int = Field(500, ge=2)
    seed: int = Field(7, ge=0)
    nls: NLSOptions = Field(default_factory=NLSOptions)
