"""Распределения вероятностей как размеченное объединение по полю ``kind``."""

from typing import Annotated, Literal, Union

import numpy as np
from pydantic import Field, model_validator

from cureuq.schemas.common import Array, ArrayModel


class Normal(ArrayModel):
    kind: Literal["normal"] = "normal"
    mu: float
    sigma: float = Field(..., ge=0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def mean(self) -> float:
        return self.mu

    def std(self) -> float:
        return self.sigma


class UniformSym(ArrayModel):
    kind: Literal["uniform_sym"] = "uniform_sym"
    half_width: float = Field(..., ge=0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(-self.half_width, self.half_width, size)

    def mean(self) -> float:
        return 0.0

    def std(self) -> float:
        return self.half_width / np.sqrt(3.0)


class LogNormal(ArrayModel):
    kind: Literal["lognormal"] = "lognormal"
    mu_ln: float
    sigma_ln: float = Field(..., ge=0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.lognormal(self.mu_ln, self.sigma_ln, size)

    def mean(self) -> float:
        return float(np.exp(self.mu_ln + 0.5 * self.sigma_ln**2))

    def std(self) -> float:
        s2 = self.sigma_ln**2
        return float(np.sqrt(np.expm1(s2) * np.exp(2.0 * self.mu_ln + s2)))


class Beta(ArrayModel):
    kind: Literal["beta"] = "beta"
    alpha: float = Field(..., gt=0)
    beta: float = Field(..., gt=0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.alpha, self.beta, size)

    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def std(self) -> float:
        total = self.alpha + self.beta
        return float(np.sqrt(self.alpha * self.beta / (total**2 * (total + 1.0))))


class Empirical(ArrayModel):
    kind: Literal["empirical"] = "empirical"
    sample_values: Array

    @model_validator(mode="after")
    def check_sample(self):
        if self.sample_values.size == 0:
            raise ValueError("empirical sample must not be empty")
        return self

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(self.sample_values, size=size, axis=0)

    def mean(self):
        return self.sample_values.mean(axis=0)

    def std(self):
        return self.sample_values.std(axis=0, ddof=1)


class MultivariateNormal(ArrayModel):
    kind: Literal["mvn"] = "mvn"
    mean_vector: Array
    covariance: Array

    @model_validator(mode="after")
    def check_shapes(self):
        k = self.mean_vector.shape[0]
        if self.covariance.shape != (k, k):
            raise ValueError("covariance must be k x k for a mean of length k")
        if not np.allclose(self.covariance, self.covariance.T, rtol=1e-10, atol=0.0):
            raise ValueError("covariance must be symmetric")
        return self


Distribution = Annotated[
    Union[Normal, UniformSym, LogNormal, Beta, Empirical, MultivariateNormal],
    Field(discriminator="kind"),
]
