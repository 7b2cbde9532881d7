from enum import StrEnum
from typing import Any, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from l0cert._internal.types.domain import FloatArray

_ORDER_SLACK = 1e-9


class Strategy(StrEnum):
    BOX = "box"
    TOP_T = "topt"
    T_TIMES_TOP = "ttimestop"


class AffineExpr(BaseModel):
    """y -> <coefficients, y> + bias over some reference layer (for the input layer, shaped (entries, channels))."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: FloatArray
    bias: float = 0.0

    @field_validator("coefficients", mode="before")
    @classmethod
    def as_array(cls, value: Any) -> FloatArray:
        return np.array(value, dtype=np.float64)


class NeuronBounds(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: FloatArray
    upper: FloatArray

    @model_validator(mode="after")
    def ordered(self) -> Self:
        if self.lower.shape != self.upper.shape:
            raise ValueError("Lower and upper bounds differ in shape")
        slack = _ORDER_SLACK * (1.0 + np.abs(self.upper))
        if np.any(self.lower > self.upper + slack):
            raise ValueError("Every lower bound must be at most its upper bound")

        return self

    @property
    def width(self) -> int:
        return int(self.lower.shape[0])

    def interval(self, neuron: int) -> tuple[float, float]:
        return float(self.lower[neuron]), float(self.upper[neuron])


class Contribution(BaseModel):
    """Tightest lower (d_minus) and upper (d_plus) values of w_i (y_i - center_i), per perturbable entry."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    indices: tuple[int, ...]
    d_minus: FloatArray
    d_plus: FloatArray

    @model_validator(mode="after")
    def signs(self) -> Self:
        if np.any(self.d_minus > 0) or np.any(self.d_plus < 0):
            raise ValueError("Contributions satisfy d_minus <= 0 <= d_plus")

        return self


class LayerBounds(BaseModel):
    index: int
    kind: str
    bounds: NeuronBounds


class NetworkBounds(BaseModel):
    strategy: Strategy
    layers: list[LayerBounds]

    @property
    def output(self) -> NeuronBounds:
        return self.layers[-1].bounds


class LinearBounds(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower_coefficients: FloatArray
    lower_bias: FloatArray
    upper_coefficients: FloatArray
    upper_bias: FloatArray

    def row(self, neuron: int) -> tuple[AffineExpr, AffineExpr]:
        return (
            AffineExpr(coefficients=self.lower_coefficients[neuron], bias=float(self.lower_bias[neuron])),
            AffineExpr(coefficients=self.upper_coefficients[neuron], bias=float(self.upper_bias[neuron])),
        )
