from enum import StrEnum
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from l0cert._internal.network import Network
from l0cert._internal.types.bounds import LayerBounds, Strategy
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, LabeledInput

REPORT_FORMAT_VERSION = 1


class VerdictStatus(StrEnum):
    VERIFIED = "verified"
    FALSIFIED = "falsified"
    UNKNOWN = "unknown"


class LayerBoundSummary(BaseModel):
    index: int
    kind: str
    width: int
    min_lower: float
    max_upper: float
    mean_width: float
    crossing: int

    @classmethod
    def from_layer(cls, layer: LayerBounds) -> "LayerBoundSummary":
        lower, upper = layer.bounds.lower, layer.bounds.upper
        return cls(
            index=layer.index,
            kind=layer.kind,
            width=layer.bounds.width,
            min_lower=float(lower.min()),
            max_upper=float(upper.max()),
            mean_width=float(np.mean(upper - lower)),
            crossing=int(np.count_nonzero((lower < 0) & (upper > 0))),
        )


class CoverStats(BaseModel):
    blocks: int = 0
    propagation_calls: int = 0
    refinements: int = 0
    leaf_enumerations: int = 0
    verdict: VerdictStatus | None = None

    def merged(self, other: "CoverStats") -> "CoverStats":
        return CoverStats(
            blocks=self.blocks + other.blocks,
            propagation_calls=self.propagation_calls + other.propagation_calls,
            refinements=self.refinements + other.refinements,
            leaf_enumerations=self.leaf_enumerations + other.leaf_enumerations,
            verdict=self.verdict,
        )


class VerdictReport(BaseModel):
    format_version: int = REPORT_FORMAT_VERSION
    status: VerdictStatus
    label: int
    strategy: Strategy | None
    adversarial_labels: list[int]
    margins: list[float]
    counterexample: list[list[float]] | None = None
    counterexample_label: int | None = None
    layers: list[LayerBoundSummary] = Field(default_factory=list)
    elapsed_seconds: float = 0.0
    seed: int | None = None
    cover_stats: CoverStats | None = None

    @model_validator(mode="after")
    def consistent_status(self) -> Self:
        if len(self.margins) != len(self.adversarial_labels):
            raise ValueError("Every adversarial label needs exactly one margin")
        if self.status == VerdictStatus.VERIFIED and not all(margin > 0 for margin in self.margins):
            raise ValueError("A verified report needs every margin to be positive")
        if (self.status == VerdictStatus.FALSIFIED) != (self.counterexample is not None):
            raise ValueError("Exactly the falsified reports carry a counterexample")
        if self.counterexample is not None and self.counterexample_label in (None, self.label):
            raise ValueError("A counterexample must be classified differently from the label")

        return self

    @property
    def min_margin(self) -> float:
        return min(self.margins)


class Query(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    net: Network
    labeled: LabeledInput
    ball: Ball0Spec
    domain: BoxDomain
    strategy: Strategy = Strategy.TOP_T

    @model_validator(mode="after")
    def same_center(self) -> Self:
        if self.labeled.center.shape != self.ball.center.shape or np.any(self.labeled.center != self.ball.center):
            raise ValueError("The labeled input and the ball must share their center")

        return self


class SuccessRates(BaseModel):
    subset_size: int
    radius: int
    trials: int
    verified: dict[Strategy, int]

    @field_validator("trials", mode="after")
    @classmethod
    def positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("An experiment needs at least one trial")

        return value

    def rate(self, strategy: Strategy) -> float:
        return self.verified[strategy] / self.trials
