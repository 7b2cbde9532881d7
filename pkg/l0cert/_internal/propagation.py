"""Backward linear bound propagation over l0-balls.

Every affine neuron is bounded by input-layer expressions obtained by substituting layer relaxations all the way
back to the inputs, and only then concretized. Concretization is where the strategies differ: the box sums every
entry's contribution, top-t sums only the t most extreme ones, and t-times-top multiplies the single most extreme
one by t.
"""

import logging
from collections.abc import Callable
from typing import TypedDict

import numpy as np

from l0cert._internal.network import AffineStage, Network, ReLUStage, unflatten_coefficients
from l0cert._internal.types.bounds import (
    AffineExpr,
    Contribution,
    LayerBounds,
    LinearBounds,
    NetworkBounds,
    NeuronBounds,
    Strategy,
)
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, FloatArray, coerce_point
from l0cert.errors import InvalidParameterError, ShapeMismatchError

logger = logging.getLogger(__name__)

_TIE_TOLERANCE = 1e-9

Reach = Callable[[FloatArray, int], FloatArray]


class Concretizer(TypedDict):
    lowest: Reach
    highest: Reach


def _sum_lowest(values: FloatArray, count: int) -> FloatArray:
    if count >= values.shape[1]:
        return values.sum(axis=1)

    return np.partition(values, count - 1, axis=1)[:, :count].sum(axis=1)


def _box_lowest(d_minus: FloatArray, radius: int) -> FloatArray:
    return d_minus.sum(axis=1)


def _box_highest(d_plus: FloatArray, radius: int) -> FloatArray:
    return d_plus.sum(axis=1)


def _topt_lowest(d_minus: FloatArray, radius: int) -> FloatArray:
    return _sum_lowest(d_minus, radius)


def _topt_highest(d_plus: FloatArray, radius: int) -> FloatArray:
    return -_sum_lowest(-d_plus, radius)


def _ttimestop_lowest(d_minus: FloatArray, radius: int) -> FloatArray:
    return radius * d_minus.min(axis=1)


def _ttimestop_highest(d_plus: FloatArray, radius: int) -> FloatArray:
    return radius * d_plus.max(axis=1)


_CONCRETIZERS: dict[Strategy, Concretizer] = {
    Strategy.BOX: {"lowest": _box_lowest, "highest": _box_highest},
    Strategy.TOP_T: {"lowest": _topt_lowest, "highest": _topt_highest},
    Strategy.T_TIMES_TOP: {"lowest": _ttimestop_lowest, "highest": _ttimestop_highest},
}


def get_concretizer(strategy: Strategy) -> Concretizer:
    try:
        return _CONCRETIZERS[strategy]
    except KeyError as error:
        raise InvalidParameterError(message=f"Unknown strategy {strategy!r}") from error


def _row_contributions(
    coefficients: FloatArray, biases: FloatArray, ball: Ball0Spec, domain: BoxDomain
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """For rows shaped (count, entries, channels): the value at the center, then d_minus and d_plus per
    perturbable entry, each shaped (count, |K|)."""
    ball.check_against(domain)
    indices = ball.indices
    center = ball.center[indices]
    weights = coefficients[:, indices, :]

    at_lower = weights * (domain.lower[indices] - center)
    at_upper = weights * (domain.upper[indices] - center)
    d_minus = np.minimum(at_lower, at_upper).sum(axis=2)
    d_plus = np.maximum(at_lower, at_upper).sum(axis=2)

    base = biases + np.einsum("nkd,kd->n", coefficients, ball.center)
    return base, d_minus, d_plus


def _input_rows(expr: AffineExpr, ball: Ball0Spec) -> tuple[FloatArray, FloatArray]:
    coefficients = coerce_point(expr.coefficients, entries=ball.entries, channels=ball.channels)
    return coefficients[None], np.array([expr.bias])


def contributions(*, expr: AffineExpr, ball: Ball0Spec, domain: BoxDomain) -> Contribution:
    coefficients, biases = _input_rows(expr, ball)
    _, d_minus, d_plus = _row_contributions(coefficients, biases, ball, domain)

    return Contribution(indices=tuple(ball.indices.tolist()), d_minus=d_minus[0], d_plus=d_plus[0])


def concretize(*, expr: AffineExpr, ball: Ball0Spec, domain: BoxDomain, strategy: Strategy) -> tuple[float, float]:
    coefficients, biases = _input_rows(expr, ball)
    base, d_minus, d_plus = _row_contributions(coefficients, biases, ball, domain)
    concretizer = get_concretizer(strategy)

    lower = base + concretizer["lowest"](d_minus, ball.radius)
    upper = base + concretizer["highest"](d_plus, ball.radius)
    return float(lower[0]), float(upper[0])


def concretize_box(*, expr: AffineExpr, ball: Ball0Spec, domain: BoxDomain) -> tuple[float, float]:
    return concretize(expr=expr, ball=ball, domain=domain, strategy=Strategy.BOX)


def concretize_topt(*, expr: AffineExpr, ball: Ball0Spec, domain: BoxDomain) -> tuple[float, float]:
    return concretize(expr=expr, ball=ball, domain=domain, strategy=Strategy.TOP_T)


def concretize_ttimestop(*, expr: AffineExpr, ball: Ball0Spec, domain: BoxDomain) -> tuple[float, float]:
    return concretize(expr=expr, ball=ball, domain=domain, strategy=Strategy.T_TIMES_TOP)


def topt_minimizer(*, expr: AffineExpr, ball: Ball0Spec, domain: BoxDomain) -> FloatArray:
    coefficients, biases = _input_rows(expr, ball)
    _, d_minus, _ = _row_contributions(coefficients, biases, ball, domain)

    indices = ball.indices
    order = np.argpartition(d_minus[0], ball.radius - 1)[: ball.radius]
    chosen = indices[order]

    point = ball.center.copy()
    weights = coefficients[0, chosen, :]
    point[chosen, :] = np.where(weights >= 0, domain.lower[chosen], domain.upper[chosen])
    return point


def _relaxation(
    lower: FloatArray, upper: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    active = lower >= 0
    crossing = (lower < 0) & (upper > 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        chord = np.where(crossing, upper / (upper - lower), 0.0)

    # A relative gap below the tolerance is a tie.
    scale = np.maximum(np.abs(lower), np.abs(upper))
    identity = crossing & (upper + lower > _TIE_TOLERANCE * scale)
    lower_slope = np.where(active, 1.0, np.where(identity, 1.0, 0.0))
    upper_slope = np.where(active, 1.0, chord)
    upper_intercept = np.where(crossing, -chord * lower, 0.0)

    return lower_slope, np.zeros_like(lower), upper_slope, upper_intercept


def relax_relu(*, lower: float, upper: float) -> tuple[AffineExpr, AffineExpr]:
    """Linear lower and upper bounds of ReLU(x) for x in [lower, upper], as expressions over x.

    A crossing neuron keeps the identity as its lower bound only when upper > |lower|. At a tie, up to a relative
    1e-9, it is bounded below by zero.
    """
    if lower > upper:
        raise InvalidParameterError(message=f"Empty pre-activation interval [{lower}, {upper}]")

    lower_slope, lower_intercept, upper_slope, upper_intercept = _relaxation(np.array([lower]), np.array([upper]))
    return (
        AffineExpr(coefficients=lower_slope, bias=float(lower_intercept[0])),
        AffineExpr(coefficients=upper_slope, bias=float(upper_intercept[0])),
    )


def _as_dense(stage: AffineStage) -> FloatArray:
    weight = stage.weight
    if isinstance(weight, np.ndarray):
        return weight.astype(np.float64, copy=True)

    return weight.toarray()


def input_bounds(*, ball: Ball0Spec, domain: BoxDomain) -> NeuronBounds:
    ball.check_against(domain)
    fixed = ball.fixed_mask
    lower = np.where(fixed[:, None], ball.center, domain.lower)
    upper = np.where(fixed[:, None], ball.center, domain.upper)

    return NeuronBounds(lower=lower.T.reshape(-1), upper=upper.T.reshape(-1))


def back_substitute(
    *, net: Network, stage_index: int, stage_bounds: list[NeuronBounds], inputs: NeuronBounds
) -> LinearBounds:
    """Input-layer lower and upper expressions for every neuron of the affine stage at `stage_index`.

    `stage_bounds[s]` holds the computed bounds of stage s for every s < stage_index; `inputs` bounds the network
    inputs, for a ReLU applied directly to them.
    """
    stage = net.stages[stage_index]
    if not isinstance(stage, AffineStage):
        raise InvalidParameterError(message=f"Stage {stage_index} is not affine")

    lower_coefficients = _as_dense(stage)
    upper_coefficients = lower_coefficients.copy()
    lower_bias = stage.bias.astype(np.float64, copy=True)
    upper_bias = lower_bias.copy()

    for index in range(stage_index - 1, -1, -1):
        previous = net.stages[index]
        match previous:
            case AffineStage():
                lower_bias = lower_bias + lower_coefficients @ previous.bias
                upper_bias = upper_bias + upper_coefficients @ previous.bias
                lower_coefficients = previous.pull_back(lower_coefficients)
                upper_coefficients = previous.pull_back(upper_coefficients)
            case ReLUStage():
                pre = stage_bounds[index - 1] if index > 0 else inputs
                lower_slope, lower_intercept, upper_slope, upper_intercept = _relaxation(pre.lower, pre.upper)

                positive, negative = np.maximum(lower_coefficients, 0.0), np.minimum(lower_coefficients, 0.0)
                lower_bias = lower_bias + positive @ lower_intercept + negative @ upper_intercept
                lower_coefficients = positive * lower_slope + negative * upper_slope

                positive, negative = np.maximum(upper_coefficients, 0.0), np.minimum(upper_coefficients, 0.0)
                upper_bias = upper_bias + positive @ upper_intercept + negative @ lower_intercept
                upper_coefficients = positive * upper_slope + negative * lower_slope

    return LinearBounds(
        lower_coefficients=unflatten_coefficients(lower_coefficients, entries=net.entries, channels=net.channels),
        lower_bias=lower_bias,
        upper_coefficients=unflatten_coefficients(upper_coefficients, entries=net.entries, channels=net.channels),
        upper_bias=upper_bias,
    )


def concretize_linear(
    *, linear: LinearBounds, ball: Ball0Spec, domain: BoxDomain, strategy: Strategy
) -> NeuronBounds:
    concretizer = get_concretizer(strategy)

    base, d_minus, _ = _row_contributions(linear.lower_coefficients, linear.lower_bias, ball, domain)
    lower = base + concretizer["lowest"](d_minus, ball.radius)

    base, _, d_plus = _row_contributions(linear.upper_coefficients, linear.upper_bias, ball, domain)
    upper = base + concretizer["highest"](d_plus, ball.radius)

    return NeuronBounds(lower=lower, upper=upper)


def compute_bounds(*, net: Network, ball: Ball0Spec, domain: BoxDomain, strategy: Strategy) -> NetworkBounds:
    if (ball.entries, ball.channels) != (net.entries, net.channels):
        raise ShapeMismatchError(
            expected=(net.entries, net.channels), actual=(ball.entries, ball.channels), what="input shape"
        )

    inputs = input_bounds(ball=ball, domain=domain)
    stage_bounds: list[NeuronBounds] = []
    layers: list[LayerBounds] = []
    for index, stage in enumerate(net.stages):
        match stage:
            case AffineStage():
                linear = back_substitute(net=net, stage_index=index, stage_bounds=stage_bounds, inputs=inputs)
                bounds = concretize_linear(linear=linear, ball=ball, domain=domain, strategy=strategy)
                kind = "affine"
            case ReLUStage():
                pre = stage_bounds[index - 1] if index > 0 else inputs
                bounds = NeuronBounds(lower=np.maximum(pre.lower, 0.0), upper=np.maximum(pre.upper, 0.0))
                crossing = int(np.count_nonzero((pre.lower < 0) & (pre.upper > 0)))
                logger.debug("Stage %d: %d of %d ReLU neurons cross zero", index, crossing, stage.width)
                kind = "relu"

        stage_bounds.append(bounds)
        layers.append(LayerBounds(index=index, kind=kind, bounds=bounds))

    return NetworkBounds(strategy=strategy, layers=layers)
