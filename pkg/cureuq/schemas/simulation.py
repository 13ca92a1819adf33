from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from cureuq.schemas.common import Array, ArrayModel
from cureuq.schemas.materials import MaterialParameters

STEFAN_BOLTZMANN = 5.67e-8


class DirichletPath(BaseModel):
    """Кусочно-линейная температура (t [s], Θ [°C])."""

    kind: Literal["dirichlet"] = "dirichlet"
    nodes: list[tuple[float, float]] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_times(self):
        times = [t for t, _ in self.nodes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("path node times must be strictly increasing")
        return self

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.nodes], dtype=float)

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([v for _, v in self.nodes], dtype=float)

    def at(self, t):
        """Температура пути в момент t [°C]; вне узлов держится крайнее значение."""
        return np.interp(t, self.times, self.temperatures)


class Adiabatic(BaseModel):
    kind: Literal["adiabatic"] = "adiabatic"


class Mixed(BaseModel):
    kind: Literal["mixed"] = "mixed"
    h: float = Field(40.0, ge=0, description="Convection coefficient [W/(K·m²)]")
    eps: float = Field(0.8, ge=0, le=1, description="Emissivity")
    ambient: DirichletPath


BoundaryCondition = Annotated[
    Union[DirichletPath, Adiabatic, Mixed], Field(discriminator="kind")
]


class EpoxyMaterial(BaseModel):
    kind: Literal["epoxy"] = "epoxy"
    parameters: MaterialParameters
    rho_ref: float = Field(1150.0, gt=0, description="[kg/m³]")
    h_c: float = Field(..., ge=0, description="Specific reaction enthalpy [J/kg]")


class InertMaterial(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={"example": {"rho": 2700.0, "cp": 897.0, "kappa": 235.0}}
    )

    kind: Literal["inert"] = "inert"
    rho: float = Field(2700.0, gt=0, description="[kg/m³]")
    cp: float = Field(897.0, gt=0, description="[J/(kg·K)]")
    kappa: float = Field(235.0, gt=0, description="[W/(m·K)]")


class Layer(BaseModel):
    material: Annotated[
        Union[EpoxyMaterial, InertMaterial], Field(discriminator="kind")
    ]
    thickness: float = Field(..., gt=0, description="[m]")
    cells: int = Field(..., ge=1)


class SimDomain(ArrayModel):
    """Слоистая 1D-область снизу вверх с граничными условиями."""

    layers: list[Layer] = Field(..., min_length=1)
    bc_low: BoundaryCondition
    bc_high: BoundaryCondition
    initial_theta: Union[float, Array] = Field(
        20.0, description="[°C], scalar or per cell"
    )
    initial_c: float = Field(0.0, ge=0, le=1)

    @model_validator(mode="after")
    def check_cells(self):
        total = sum(layer.cells for layer in self.layers)
        if total < 3:
            raise ValueError("domain needs at least three cells")
        if isinstance(self.initial_theta, np.ndarray) and self.initial_theta.shape != (
            total,
        ):
            raise ValueError("initial temperature profile must have one value per cell")
        return self

    @property
    def n_cells(self) -> int:
        return sum(layer.cells for layer in self.layers)


class SolverOptions(BaseModel):
    rel_tol: float = Field(1e-4, gt=0)
    abs_tol_theta: float = Field(1e-3, gt=0, description="[K]")
    abs_tol_c: float = Field(1e-5, gt=0)
    dt_init: float = Field(0.1, gt=0, description="[s]")
    dt_min: float = Field(1e-8, gt=0, description="[s]")
    dt_max: float = Field(1e4, gt=0, description="[s]")
    newton_tol: float = Field(1e-8, gt=0)
    newton_max_iter: int = Field(8, ge=1)
    k_p: float = Field(0.2, ge=0)
    k_i: float = Field(0.15, gt=0)
    safety: float = Field(0.9, gt=0, le=1)
    growth_min: float = Field(0.2, gt=0, le=1)
    growth_max: float = Field(5.0, ge=1)
    max_steps: int = Field(200000, ge=1)

    @model_validator(mode="after")
    def check_dt(self):
        if self.dt_min >= self.dt_max:
            raise ValueError("dt_min must be below dt_max")
        return self


class SimResult(ArrayModel):
    times: Array
    dt: Array = Field(..., description="Accepted step sizes")
    theta: Array = Field(..., description="n_t x n_cells temperatures [°C]")
    c: Array = Field(..., description="n_t x n_cells degree of cure")
    probes: dict[str, int]
    rejected: int = 0
    clamp_events: int = 0
    monotonicity_events: int = 0
    snapshots: dict[str, list[float]] = Field(default_factory=dict)

    def probe(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        index = self.probes[name]
        return self.theta[:, index], self.c[:, index]


class ScenarioConfig(BaseModel):
    """Сценарий по умолчанию: алюминиевое основание под слоем смолы."""

    h_c: Optional[float] = Field(None, ge=0, description="Reaction enthalpy [J/kg]")
    parameters: Optional[MaterialParameters] = None
    rho_ref: float = Field(1150.0, gt=0)
    epoxy_thickness: float = Field(0.03, gt=0)
    epoxy_cells: int = Field(40, ge=1)
    base_thickness: float = Field(0.005, gt=0)
    base_cells: int = Field(8, ge=1)
    base: InertMaterial = Field(default_factory=InertMaterial)
    path: Optional[DirichletPath] = None
    h: float = Field(40.0, ge=0)
    eps: float = Field(0.8, ge=0, le=1)
    options: SolverOptions = Field(default_factory=SolverOptions)
    snapshot_times: list[float] = Field(default_factory=list)
