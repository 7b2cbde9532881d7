from typing import Self

from pydantic import BaseModel, model_validator


class McEstimate(BaseModel):
    mean: float
    std_error: float
    samples: int
    seed: int

    @model_validator(mode="after")
    def non_degenerate(self) -> Self:
        if self.std_error < 0:
            raise ValueError("Standard error can not be negative")
        if self.samples < 1:
            raise ValueError("An estimate needs at least one sample")

        return self

    def agrees_with(self, value: float, *, sigmas: float) -> bool:
        return abs(self.mean - value) <= sigmas * self.std_error


class FrankWolfeResult(BaseModel):
    distance: float
    lower_bound: float
    iterations: int
    converged: bool
