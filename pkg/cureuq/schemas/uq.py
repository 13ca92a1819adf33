from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field

from cureuq.schemas.calibration import UncertainParameterSet
from cureuq.schemas.common import Array, ArrayModel


class StudyMode(str, Enum):
    CASE_I = "case_i"
    CASE_II = "case_ii"
    CASE_III_FULL = "case_iii_full"
    CASE_III_MIXED = "case_iii_mixed"


class MaterialUncertainty(ArrayModel):
    kind: Literal["material"] = "material"
    sets: list[UncertainParameterSet] = Field(..., min_length=1)
    k: float = Field(1.0, gt=0, description="Variance inflation factor")


class BoundaryUncertainty(BaseModel):
    kind: Literal["boundary"] = "boundary"
    path_times: list[float] = Field(
        [0.0, 600.0, 29400.0, 30000.0, 44400.0, 45000.0, 52200.0],
        description="Fixed path node times [s]",
    )
    path_temps: list[float] = Field(
        [20.0, 60.0, 60.0, 120.0, 120.0, 20.0, 20.0], description="Nominal [°C]"
    )
    rel_sigma: float = Field(0.1, ge=0, description="Path std as a share of the value")
    h_mean: float = Field(40.0, gt=0)
    h_std: float = Field(4.0, ge=0)
    eps_mean: float = Field(0.8, gt=0, lt=1)
    eps_std: float = Field(0.08, ge=0)
    vary_path: bool = True
    vary_mixed: bool = True
    k: float = Field(1.0, gt=0)


UncertainInput = Annotated[
    Union[MaterialUncertainty, BoundaryUncertainty], Field(discriminator="kind")
]


class OutputStatistics(ArrayModel):
    mean: Array
    std: Array


class UQResult(ArrayModel):
    method: Literal["fosm", "mc"]
    times: Array
    outputs: dict[str, dict[str, OutputStatistics]] = Field(
        ..., description="probe -> quantity (theta, c) -> statistics"
    )
    evaluations: int
    failed: int = 0
    parameter_names: list[str] = Field(default_factory=list)


class ForwardStudy(BaseModel):
    mode: StudyMode
    k: Optional[float] = Field(
        None, gt=0, description="Inflation factor; 1, or 10 for case_ii, if omitted"
    )
    n_mc: Optional[int] = Field(None, ge=2, description="Mode default if omitted")
    seed: int = Field(7, ge=0)
    probes: list[str] = Field(default_factory=lambda: ["top"])
    grid_points: int = Field(2000, ge=2)
