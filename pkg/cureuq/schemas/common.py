from typing import Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, PlainSerializer, PlainValidator


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=float)


# Массивы numpy внутри моделей; в JSON уходят обычными списками
Array = Annotated[
    np.ndarray,
    PlainValidator(_as_array),
    PlainSerializer(lambda a: np.asarray(a).tolist(), return_type=list),
]


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)
