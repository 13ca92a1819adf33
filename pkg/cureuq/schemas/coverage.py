from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from cureuq.schemas.calibration import VarianceEstimator


class GaussianNoise(BaseModel):
    kind: Literal["gaussian"] = "gaussian"
    sigma: float = Field(..., gt=0)


class UniformNoise(BaseModel):
    kind: Literal["uniform"] = "uniform"
    sigma_u: float = Field(..., gt=0, description="Half width; sqrt(3)·sigma")


class HeteroCuringNoise(BaseModel):
    kind: Literal["hetero_curing"] = "hetero_curing"
    k1: float = Field(1e-5, gt=0, description="[1/s]")
    k2: float = Field(1e-3, gt=0)
    k3: float = Field(4.5e-5, gt=0, description="[1/s]")


class HeteroCpNoise(BaseModel):
    kind: Literal["hetero_cp"] = "hetero_cp"
    sigma_min: float = Field(16.3, gt=0, description="[J/(kg·K)]")
    omega: float = Field(10.0, gt=0, description="Peak width [K]")
    amplitude: float = Field(7.0, gt=0)


NoiseModel = Annotated[
    Union[GaussianNoise, UniformNoise, HeteroCuringNoise, HeteroCpNoise],
    Field(discriminator="kind"),
]


class CaseId(str, Enum):
    SPARSE_TG = "sparse_tg"
    KINETICS = "kinetics"
    HEAT_CAPACITY = "heat_capacity"


class TruthMode(str, Enum):
    CONDITIONAL = "conditional"
    MARGINAL = "marginal"


class CoverageCase(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "case": "sparse_tg",
                "noise": {"kind": "gaussian", "sigma": 4.0},
                "n_cov": 1000,
                "truth_mode": "conditional",
                "n_d_tg": 5,
            }
        }
    )

    case: CaseId
    noise: NoiseModel
    n_cov: int = Field(1000, ge=1)
    truth_mode: TruthMode = TruthMode.CONDITIONAL
    propagate: bool = Field(True, description="FOSM propagation from upstream steps")
    n_d_tg: int = Field(5, ge=4, description="Glass-transition data count")
    sigma_tg: float = Field(4.0, gt=0, description="Glass-transition noise [°C]")
    n_d: Optional[int] = Field(
        None, ge=2, description="Points per curve; case default if omitted"
    )
    level: float = Field(0.95, gt=0, lt=1)
    diagonal_only: bool = Field(
        False, description="Marginal kinetics truths from variances only"
    )
    fix_upstream: bool = Field(
        False, description="Hold glass-transition parameters at the truth"
    )
    variance: VarianceEstimator = Field(
        VarianceEstimator.SAMPLE, description="Noise variance estimator of the fits"
    )


class ParameterCoverage(BaseModel):
    name: str
    normal: float = Field(..., ge=0, le=1)
    student_t: float = Field(..., ge=0, le=1)
    normal_noise_only: Optional[float] = Field(None, ge=0, le=1)
    student_t_noise_only: Optional[float] = Field(None, ge=0, le=1)


class CoverageReport(BaseModel):
    case: CoverageCase
    parameters: list[ParameterCoverage]
    repetitions: int
    dropped: int
    seed: int

    def coverage(self, name: str) -> ParameterCoverage:
        return next(p for p in self.parameters if p.name == name)
