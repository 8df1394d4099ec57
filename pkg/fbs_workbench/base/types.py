import math
from typing import Any, Self

import numpy as np
from pydantic import BaseModel, validator


class FloatArray(np.ndarray):
    """
    Pydantic field type for float arrays. Lists (i.e. from a JSON file) are coerced into a float64 ndarray, and the
    encoder on `WorkbenchBaseModel` turns them back into lists.
    """

    @classmethod
    def __get_validators__(cls):
        yield cls.validate

    @classmethod
    def validate(cls, value: Any) -> np.ndarray:
        arr = np.asarray(value, dtype=np.float64)
        arr.setflags(write=False)
        return arr


class IntArray(np.ndarray):
    @classmethod
    def __get_validators__(cls):
        yield cls.validate

    @classmethod
    def validate(cls, value: Any) -> np.ndarray:
        arr = np.asarray(value, dtype=np.int64)
        arr.setflags(write=False)
        return arr


class WorkbenchBaseModel(BaseModel):
    """
    Base class for all models that are persisted by the workbench.

    Fitted models and configs are immutable; derive changed copies with `.copy(update=...)`.
    """

    class Config:
        allow_mutation = False
        extra = "forbid"
        arbitrary_types_allowed = True
        json_encoders = {np.ndarray: lambda arr: arr.tolist()}

    @classmethod
    def load(cls, path) -> Self:
        return cls.parse_file(path)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.json(sort_keys=True))
            f.write("\n")


class Position(WorkbenchBaseModel):
    """
    Cartesian ground coordinates in meters
    """

    x: float
    y: float

    @validator("x", "y")
    def _finite(cls, value: float) -> float:
        assert math.isfinite(value), "Positions must have finite coordinates"
        return value

    def distance_to(self, other: "Position") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def offset_to(self, other: "Position") -> tuple[float, float]:
        return other.x - self.x, other.y - self.y
