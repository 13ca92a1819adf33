from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from cureuq.schemas.common import Array, ArrayModel


class Dataset(ArrayModel):
    """Предикторы и наблюдения одного шага калибровки."""

    label: str = Field(..., description="Step identifier")
    predictors: dict[str, Array] = Field(..., description="Named predictor columns")
    observations: Array
    observation_name: str = Field("value", description="Observation column name")

    @model_validator(mode="after")
    def check_columns(self):
        n = self.observations.shape[0] if self.observations.ndim == 1 else -1
        if n < 1:
            raise ValueError("observations must be a non-empty vector")
        for name, column in self.predictors.items():
            if column.shape != (n,):
                raise ValueError(f"predictor '{name}' length differs from observations")
            if not np.all(np.isfinite(column)):
                raise ValueError(f"predictor '{name}' has non-finite entries")
        if not np.all(np.isfinite(self.observations)):
            raise ValueError("observations have non-finite entries")
        return self

    @property
    def n(self) -> int:
        return int(self.observations.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.predictors[name]

    def subset(self, mask: np.ndarray, label: str | None = None) -> "Dataset":
        return Dataset(
            label=label or self.label,
            predictors={k: v[mask] for k, v in self.predictors.items()},
            observations=self.observations[mask],
            observation_name=self.observation_name,
        )

    def with_observations(self, observations: np.ndarray) -> "Dataset":
        return self.model_copy(update={"observations": np.asarray(observations, float)})

    @classmethod
    def concat(cls, parts: list["Dataset"], label: str | None = None) -> "Dataset":
        first = parts[0]
        return cls(
            label=label or first.label,
            predictors={
                k: np.concatenate([p.predictors[k] for p in parts])
                for k in first.predictors
            },
            observations=np.concatenate([p.observations for p in parts]),
            observation_name=first.observation_name,
        )


class CurveSplit(BaseModel):
    """Разбиение изотермических кривых на химическую и диффузионную части."""

    by: str = Field("theta", description="Predictor identifying each curve")
    fraction: float = Field(0.9, gt=0, le=1, description="Share of max cure per curve")
    part: Literal["chemical", "diffusion"]


class DatasetRef(BaseModel):
    files: list[Path] = Field(..., min_length=1, description="CSV files, one per curve")
    observation: Optional[str] = Field(
        None, description="Observation column; defaults to the last column"
    )
    split: Optional[CurveSplit] = None


def split_curves(data: Dataset, split: CurveSplit) -> Dataset:
    """
    Делит данные по кривым: точки с c ≤ fraction·max(c) кривой относятся к
    химической части, остальные к диффузионной.
    """
    key = data.column(split.by)
    c = data.column("c")
    mask = np.zeros(data.n, dtype=bool)
    for value in np.unique(key):
        curve = key == value
        limit = split.fraction * c[curve].max()
        chemical = curve & (c <= limit)
        mask |= chemical if split.part == "chemical" else curve & ~chemical
    return data.subset(mask, label=data.label)
