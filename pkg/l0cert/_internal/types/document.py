from typing import Annotated, Any, Literal, Self

import numpy as np
from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator

from l0cert._internal.types.domain import BoxDomain, FloatArray
from l0cert.errors import ShapeMismatchError

FORMAT_VERSION = 1


def _is_rectangular(value: Any) -> bool:
    try:
        np.array(value, dtype=np.float64)
    except ValueError:
        return False

    return True


class DenseLayerRecord(BaseModel):
    type: Literal["dense"] = "dense"
    weight: list[list[float]] = Field(min_length=1)
    bias: list[float]

    @field_validator("weight", mode="after")
    @classmethod
    def rows_have_equal_length(cls, value: list[list[float]]) -> list[list[float]]:
        if not _is_rectangular(value) or len(value[0]) == 0:
            raise ValueError("Weight rows must be non-empty and of equal length")

        return value

    @field_validator("bias", mode="after")
    @classmethod
    def one_bias_per_row(cls, value: list[float], info: ValidationInfo) -> list[float]:
        weight = info.data.get("weight")
        if weight is not None and len(value) != len(weight):
            raise ValueError(f"Expected {len(weight)} biases (one per weight row), got {len(value)}")

        return value


class Conv2DLayerRecord(BaseModel):
    type: Literal["conv2d"] = "conv2d"
    kernel: list[list[list[list[float]]]] = Field(min_length=1)
    bias: list[float]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    @field_validator("kernel", mode="after")
    @classmethod
    def kernel_is_rectangular(cls, value: list[list[list[list[float]]]]) -> list[list[list[list[float]]]]:
        if not _is_rectangular(value) or np.array(value).ndim != 4 or 0 in np.array(value).shape:
            raise ValueError("Kernel must be a non-empty array shaped [out_channels][in_channels][height][width]")

        return value

    @field_validator("bias", mode="after")
    @classmethod
    def one_bias_per_filter(cls, value: list[float], info: ValidationInfo) -> list[float]:
        kernel = info.data.get("kernel")
        if kernel is not None and len(value) != len(kernel):
            raise ValueError(f"Expected {len(kernel)} biases (one per output channel), got {len(value)}")

        return value

    @field_validator("stride", mode="after")
    @classmethod
    def positive_stride(cls, value: tuple[int, int]) -> tuple[int, int]:
        if min(value) < 1:
            raise ValueError("Strides must be positive")

        return value

    @field_validator("padding", mode="after")
    @classmethod
    def non_negative_padding(cls, value: tuple[int, int]) -> tuple[int, int]:
        if min(value) < 0:
            raise ValueError("Padding can not be negative")

        return value


class ReLULayerRecord(BaseModel):
    type: Literal["relu"] = "relu"


LayerRecord = Annotated[DenseLayerRecord | Conv2DLayerRecord | ReLULayerRecord, Field(discriminator="type")]


class ModelDocument(BaseModel):
    format_version: Literal[1] = FORMAT_VERSION
    input_shape: tuple[int] | tuple[int, int]
    channels: int = Field(default=1, ge=1)
    layers: list[LayerRecord] = Field(min_length=1)

    @field_validator("input_shape", mode="after")
    @classmethod
    def positive_dimensions(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if min(value) < 1:
            raise ValueError("Input dimensions must be positive")

        return value


def _broadcast_bound(value: float | list[float] | list[list[float]], shape: tuple[int, ...]) -> FloatArray:
    bound = np.array(value, dtype=np.float64)
    if bound.ndim == 1:
        bound = bound[:, None]

    return np.broadcast_to(bound, shape)


class InputDocument(BaseModel):
    format_version: Literal[1] = FORMAT_VERSION
    center: list[float] | list[list[float]]
    lower: float | list[float] | list[list[float]] = 0.0
    upper: float | list[float] | list[list[float]] = 1.0
    label: int | None = None

    @model_validator(mode="after")
    def center_is_rectangular(self) -> Self:
        if not _is_rectangular(self.center) or len(self.center) == 0:
            raise ValueError("The center must be a non-empty array shaped (entries,) or (entries, channels)")

        return self

    def center_array(self) -> FloatArray:
        center = np.array(self.center, dtype=np.float64)
        return center[:, None] if center.ndim == 1 else center

    def domain(self) -> BoxDomain:
        shape = self.center_array().shape
        try:
            lower, upper = _broadcast_bound(self.lower, shape), _broadcast_bound(self.upper, shape)
        except ValueError as error:
            raise ShapeMismatchError(expected=shape, actual=np.shape(self.lower), what="domain bound shape") from error

        return BoxDomain(lower=lower, upper=upper)
