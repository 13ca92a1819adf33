"""Наборы материальных параметров пяти определяющих соотношений."""

from typing import ClassVar, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cureuq.exceptions import DomainError

KELVIN = 273.15


class ParameterBlock(BaseModel):
    model_config = ConfigDict(frozen=True)

    # Калибруемые параметры блока, в порядке вектора
    free: ClassVar[tuple[str, ...]] = ()

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.free], dtype=float)

    def replace(self, values: Mapping[str, float], validate: bool = False):
        """
        Возвращает копию блока с заменёнными значениями.

        Параметры:
        - values: Отображение имя -> значение; чужие имена игнорируются.
        - validate: Проверять ли инварианты блока.

        Исключения:
        - DomainError, если validate=True и инварианты нарушены.
        """
        fields = type(self).model_fields
        update = {k: float(v) for k, v in values.items() if k in fields}
        if not validate:
            return self.model_copy(update=update)
        try:
            return type(self).model_validate({**self.model_dump(), **update})
        except ValidationError as exc:
            message = exc.errors()[0]["msg"]
            raise DomainError(f"Invalid {type(self).__name__}: {message}") from None


class GlassTransitionParams(ParameterBlock):
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {"r_f": 0.44103, "theta_g0": -41.895966, "theta_g1": 140.3569}
        },
    )
    free: ClassVar[tuple[str, ...]] = ("r_f", "theta_g0", "theta_g1")

    r_f: float = Field(..., gt=0, description="Curvature ratio")
    theta_g0: float = Field(..., description="Glass transition of uncured resin [°C]")
    theta_g1: float = Field(..., description="Glass transition of cured resin [°C]")

    @model_validator(mode="after")
    def check_order(self):
        if self.theta_g1 <= self.theta_g0:
            raise ValueError("theta_g1 must exceed theta_g0")
        return self


class CuringKineticsParams(ParameterBlock):
    free: ClassVar[tuple[str, ...]] = ("a_pre", "e_act", "g_fac", "n_exp", "b_d")

    a_pre: float = Field(..., gt=0, description="Rate prefactor [1/s]")
    e_act: float = Field(..., gt=0, description="Activation energy [J/mol]")
    g_fac: float = Field(..., gt=0, lt=1, description="Autocatalytic factor")
    n_exp: float = Field(..., gt=0, description="Reaction order")
    b_d: float = Field(..., gt=0, description="Diffusion width [K]")


class ShrinkageParams(ParameterBlock):
    free: ClassVar[tuple[str, ...]] = (
        "alpha_theta",
        "alpha_c",
        "alpha_theta_c",
        "alpha_theta_g",
    )

    alpha_theta: float = Field(..., description="Thermal expansion [1/K]")
    alpha_c: float = Field(..., description="Chemical shrinkage")
    alpha_theta_c: float = Field(..., description="Thermo-chemical coupling [1/K]")
    alpha_theta_g: float = Field(..., gt=0, description="Glassy expansion [1/K]")
    d_smooth: float = Field(1e-4, gt=0, description="Smoothing curvature")
    theta_ref: float = Field(20.0, description="Reference temperature [°C]")

    @model_validator(mode="after")
    def check_glassy(self):
        if self.alpha_theta <= self.alpha_theta_g:
            raise ValueError("alpha_theta must exceed alpha_theta_g")
        return self


class HeatCapacityParams(ParameterBlock):
    free: ClassVar[tuple[str, ...]] = ("a1", "a2", "a3", "a4", "a5")

    a1: float = Field(..., description="[J/(kg·K)]")
    a2: float = Field(..., description="[J/(kg·K²)]")
    a3: float = Field(..., description="[J/(kg·K)]")
    a4: float = Field(..., description="[J/(kg·K²)]")
    a5: float = Field(..., gt=0, description="Transition slope [1/K]")


class ConductivityParams(ParameterBlock):
    free: ClassVar[tuple[str, ...]] = ("b1", "b2", "b3", "b4")

    b1: float = Field(..., gt=0, description="Cured conductivity [W/(m·K)]")
    b2: float = Field(..., gt=0, description="[W/(m·K)]")
    b3: float = Field(..., description="[W/(m·K)]")
    b4: float = Field(..., gt=0, description="[W/(m·K)]")
    d_tilde: float = Field(0.01, gt=0, description="Smoothing curvature [W/(m·K)]")
    theta_ref: float = Field(20.0, description="Reference temperature [°C]")


BLOCKS = {
    "glass_transition": GlassTransitionParams,
    "kinetics": CuringKineticsParams,
    "shrinkage": ShrinkageParams,
    "heat_capacity": HeatCapacityParams,
    "conductivity": ConductivityParams,
}

# Имя параметра -> блок, которому он принадлежит
PARAMETER_BLOCK = {name: block for block, cls in BLOCKS.items() for name in cls.free}


class MaterialParameters(BaseModel):
    """Все пять наборов параметров эпоксидной смолы."""

    model_config = ConfigDict(frozen=True)

    glass_transition: GlassTransitionParams
    kinetics: CuringKineticsParams
    shrinkage: ShrinkageParams
    heat_capacity: HeatCapacityParams
    conductivity: ConductivityParams

    def flat(self) -> dict[str, float]:
        return {
            name: float(getattr(getattr(self, block), name))
            for name, block in PARAMETER_BLOCK.items()
        }

    def with_values(
        self, values: Mapping[str, float], validate: bool = False
    ) -> "MaterialParameters":
        unknown = set(values) - set(PARAMETER_BLOCK)
        if unknown:
            raise DomainError(f"Unknown material parameters: {sorted(unknown)}")
        update = {}
        for block in BLOCKS:
            part = {k: v for k, v in values.items() if PARAMETER_BLOCK[k] == block}
            if part or validate:
                update[block] = getattr(self, block).replace(part, validate=validate)
        return self.model_copy(update=update)


class CuringState(BaseModel):
    """
    Состояние материальной точки: температура в кельвинах и степень отверждения.

    Поля могут быть скалярами или массивами одинаковой формы.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta: float | np.ndarray = Field(..., description="Temperature [K]")
    c: float | np.ndarray = Field(..., description="Degree of cure")

    @model_validator(mode="after")
    def check_ranges(self):
        theta = np.asarray(self.theta, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if not (np.all(np.isfinite(theta)) and np.all(theta > 0)):
            raise ValueError("temperature must be finite and positive in Kelvin")
        if not (np.all(c >= 0.0) and np.all(c <= 1.0)):
            raise ValueError("degree of cure must lie in [0, 1]")
        return self

    @classmethod
    def from_celsius(cls, theta_c, c) -> "CuringState":
        try:
            return cls(theta=np.asarray(theta_c, dtype=float) + KELVIN, c=c)
        except ValidationError as exc:
            raise DomainError(f"Invalid curing state: {exc.errors()[0]['msg']}")

    @classmethod
    def unchecked(cls, theta, c) -> "CuringState":
        return cls.model_construct(theta=theta, c=c)

    @property
    def celsius(self):
        return np.asarray(self.theta, dtype=float) - KELVIN
