from typing import Any, Self

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from l0cert.errors import InvalidDomainError, InvalidParameterError, ShapeMismatchError

FloatArray = NDArray[np.float64]


def _entry_channel_array(value: Any) -> FloatArray:
    array = np.array(value, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise ShapeMismatchError(expected="(entries,) or (entries, channels)", actual=array.shape, what="array shape")

    array.setflags(write=False)
    return array


def coerce_point(value: Any, *, entries: int, channels: int) -> FloatArray:
    array = np.asarray(value, dtype=np.float64)
    if array.shape == (entries,) and channels == 1:
        return array.reshape(entries, 1)
    if array.shape != (entries, channels):
        raise ShapeMismatchError(expected=(entries, channels), actual=array.shape, what="point shape")

    return array


def coerce_points(value: Any, *, entries: int, channels: int) -> FloatArray:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 2 and array.shape[1] == entries and channels == 1:
        return array.reshape(array.shape[0], entries, 1)
    if array.ndim != 3 or array.shape[1:] != (entries, channels):
        raise ShapeMismatchError(expected=("count", entries, channels), actual=array.shape, what="batch shape")

    return array


class BoxDomain(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: FloatArray
    upper: FloatArray

    @field_validator("lower", "upper", mode="before")
    @classmethod
    def as_array(cls, value: Any) -> FloatArray:
        return _entry_channel_array(value)

    @model_validator(mode="after")
    def bounds_are_ordered(self) -> Self:
        if self.lower.shape != self.upper.shape:
            raise ShapeMismatchError(expected=self.lower.shape, actual=self.upper.shape, what="upper bound shape")
        if self.lower.shape[0] < 1 or self.lower.shape[1] < 1:
            raise InvalidDomainError(message="A domain needs at least one entry and one channel")
        if np.any(self.lower > self.upper):
            raise InvalidDomainError(message="Every lower bound must be at most its upper bound")

        return self

    @classmethod
    def uniform(cls, *, entries: int, lower: float, upper: float, channels: int = 1) -> "BoxDomain":
        return cls(
            lower=np.full((entries, channels), lower, dtype=np.float64),
            upper=np.full((entries, channels), upper, dtype=np.float64),
        )

    @property
    def entries(self) -> int:
        return int(self.lower.shape[0])

    @property
    def channels(self) -> int:
        return int(self.lower.shape[1])

    @property
    def widths(self) -> FloatArray:
        return self.upper - self.lower

    @property
    def log_volume(self) -> float:
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(self.widths)))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points: FloatArray) -> NDArray[np.bool_]:
        return np.all((points >= self.lower) & (points <= self.upper), axis=(1, 2))


class Ball0Spec(BaseModel):
    """The l0-ball of `center` with radius `radius`, where only entries in `perturbable` may change."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    center: FloatArray
    radius: int
    perturbable: tuple[int, ...] | None = None

    @field_validator("center", mode="before")
    @classmethod
    def as_array(cls, value: Any) -> FloatArray:
        return _entry_channel_array(value)

    @field_validator("perturbable", mode="after")
    @classmethod
    def sorted_unique(cls, value: tuple[int, ...] | None) -> tuple[int, ...] | None:
        if value is None:
            return None
        if len(set(value)) != len(value):
            raise InvalidParameterError(message="Perturbable indices must be unique")

        return tuple(sorted(value))

    @model_validator(mode="after")
    def radius_in_range(self) -> Self:
        entries = self.center.shape[0]
        if self.perturbable is not None and any(index < 0 or index >= entries for index in self.perturbable):
            raise InvalidParameterError(message=f"Perturbable indices must lie in [0, {entries})")
        if self.radius < 1:
            raise InvalidParameterError(message="Radius must be a positive integer")
        if self.radius > self.perturbable_count:
            raise InvalidParameterError(
                message=f"Radius {self.radius} exceeds the {self.perturbable_count} perturbable entries"
            )

        return self

    @property
    def entries(self) -> int:
        return int(self.center.shape[0])

    @property
    def channels(self) -> int:
        return int(self.center.shape[1])

    @property
    def perturbable_count(self) -> int:
        return self.entries if self.perturbable is None else len(self.perturbable)

    @property
    def indices(self) -> NDArray[np.intp]:
        if self.perturbable is None:
            return np.arange(self.entries)

        return np.array(self.perturbable, dtype=np.intp)

    @property
    def fixed_mask(self) -> NDArray[np.bool_]:
        mask = np.ones(self.entries, dtype=np.bool_)
        mask[self.indices] = False
        return mask

    def restricted_to(self, indices: tuple[int, ...], *, radius: int | None = None) -> "Ball0Spec":
        return Ball0Spec(center=self.center, radius=self.radius if radius is None else radius, perturbable=indices)

    def check_against(self, domain: BoxDomain) -> None:
        if self.center.shape != domain.lower.shape:
            raise ShapeMismatchError(expected=domain.lower.shape, actual=self.center.shape, what="center shape")
        if np.any(self.center < domain.lower) or np.any(self.center > domain.upper):
            raise InvalidDomainError(message="The center of the ball lies outside the domain")


class LabeledInput(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    center: FloatArray
    label: int

    @field_validator("center", mode="before")
    @classmethod
    def as_array(cls, value: Any) -> FloatArray:
        return _entry_channel_array(value)

    @field_validator("label", mode="after")
    @classmethod
    def non_negative(cls, value: int) -> int:
        if value < 0:
            raise InvalidParameterError(message="Labels are non-negative")

        return value
