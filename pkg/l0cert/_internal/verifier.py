import functools
import itertools
import logging
import time

import numpy as np

from l0cert._internal.geometry import iter_corners
from l0cert._internal.network import Network, classify, classify_batch
from l0cert._internal.oracles import sample_ball0_batch
from l0cert._internal.parallel import parallel_map
from l0cert._internal.propagation import back_substitute, compute_bounds, input_bounds, topt_minimizer
from l0cert._internal.seeding import DEFAULT_SEED, derive_seed
from l0cert._internal.types.bounds import NetworkBounds, Strategy
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, FloatArray, LabeledInput
from l0cert._internal.types.report import (
    LayerBoundSummary,
    Query,
    SuccessRates,
    VerdictReport,
    VerdictStatus,
)
from l0cert.errors import InvalidParameterError, MisclassifiedInputError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_CORNER_BUDGET = 10_000
DEFAULT_SAMPLE_BUDGET = 10_000
_BATCH = 1024


def check_label(net: Network, labeled: LabeledInput) -> None:
    if labeled.label >= net.output_count:
        raise ShapeMismatchError(expected=f"a label below {net.output_count}", actual=labeled.label, what="label")

    predicted = classify(net, labeled.center)
    if predicted != labeled.label:
        raise MisclassifiedInputError(label=labeled.label, predicted=predicted)


def _first_flip(net: Network, points: FloatArray, label: int) -> tuple[FloatArray, int] | None:
    predicted = classify_batch(net, points)
    flipped = np.flatnonzero(predicted != label)
    if flipped.size == 0:
        return None

    return points[flipped[0]], int(predicted[flipped[0]])


def find_counterexample(
    *,
    net: Network,
    label: int,
    ball: Ball0Spec,
    domain: BoxDomain,
    corner_budget: int = DEFAULT_CORNER_BUDGET,
    sample_budget: int = DEFAULT_SAMPLE_BUDGET,
    seed: int = DEFAULT_SEED,
    candidates: FloatArray | None = None,
) -> tuple[FloatArray, int] | None:
    """Evaluates candidate points, then ball corners by increasing perturbation size, then random ball members.

    Returns the first point classified differently from `label`, with its predicted label.
    """
    if candidates is not None and len(candidates) > 0:
        found = _first_flip(net, candidates, label)
        if found is not None:
            return found

    corners = iter_corners(ball=ball, domain=domain)
    remaining = corner_budget
    while remaining > 0:
        batch = list(itertools.islice(corners, min(_BATCH, remaining)))
        if not batch:
            break
        remaining -= len(batch)
        found = _first_flip(net, np.stack(batch), label)
        if found is not None:
            return found

    if sample_budget > 0:
        points = sample_ball0_batch(ball=ball, domain=domain, count=sample_budget, seed=seed)
        for start in range(0, sample_budget, _BATCH):
            found = _first_flip(net, points[start : start + _BATCH], label)
            if found is not None:
                return found

    return None


def _margin_minimizers(
    margin_net: Network, bounds: NetworkBounds, ball: Ball0Spec, domain: BoxDomain, failing: list[int]
) -> FloatArray:
    linear = back_substitute(
        net=margin_net,
        stage_index=len(margin_net.stages) - 1,
        stage_bounds=[layer.bounds for layer in bounds.layers[:-1]],
        inputs=input_bounds(ball=ball, domain=domain),
    )
    return np.stack([topt_minimizer(expr=linear.row(row)[0], ball=ball, domain=domain) for row in failing])


def verify(
    query: Query,
    *,
    corner_budget: int = DEFAULT_CORNER_BUDGET,
    sample_budget: int = DEFAULT_SAMPLE_BUDGET,
    seed: int = DEFAULT_SEED,
) -> VerdictReport:
    started = time.perf_counter()
    net, label, ball, domain = query.net, query.labeled.label, query.ball, query.domain

    check_label(net, query.labeled)
    margin_net = net.with_margin_layer(label=label)
    bounds = compute_bounds(net=margin_net, ball=ball, domain=domain, strategy=query.strategy)
    margins = bounds.output.lower

    status = VerdictStatus.VERIFIED if bool(np.all(margins > 0)) else VerdictStatus.UNKNOWN
    counterexample: FloatArray | None = None
    counterexample_label: int | None = None
    if status == VerdictStatus.UNKNOWN and (corner_budget > 0 or sample_budget > 0):
        failing = [row for row, margin in enumerate(margins) if margin <= 0]
        candidates = _margin_minimizers(margin_net, bounds, ball, domain, failing) if corner_budget > 0 else None
        found = find_counterexample(
            net=net,
            label=label,
            ball=ball,
            domain=domain,
            corner_budget=corner_budget,
            sample_budget=sample_budget,
            seed=seed,
            candidates=candidates,
        )
        if found is not None:
            status = VerdictStatus.FALSIFIED
            counterexample, counterexample_label = found

    report = VerdictReport(
        status=status,
        label=label,
        strategy=query.strategy,
        adversarial_labels=[j for j in range(net.output_count) if j != label],
        margins=margins.tolist(),
        counterexample=None if counterexample is None else counterexample.tolist(),
        counterexample_label=counterexample_label,
        layers=[LayerBoundSummary.from_layer(layer) for layer in bounds.layers],
        elapsed_seconds=time.perf_counter() - started,
        seed=seed,
    )
    logger.info(
        "Label %d under %s with radius %d: %s (min margin %.6g)",
        label,
        query.strategy,
        ball.radius,
        report.status,
        report.min_margin,
    )
    return report


def _trial(
    trial: int,
    *,
    net: Network,
    labeled: LabeledInput,
    domain: BoxDomain,
    subset_size: int,
    radius: int,
    seed: int,
    strategies: tuple[Strategy, ...],
) -> dict[Strategy, bool]:
    rng = np.random.default_rng(derive_seed(seed, trial))
    subset = tuple(sorted(rng.choice(net.entries, size=subset_size, replace=False).tolist()))
    ball = Ball0Spec(center=labeled.center, radius=radius, perturbable=subset)

    outcome: dict[Strategy, bool] = {}
    for strategy in strategies:
        query = Query(net=net, labeled=labeled, ball=ball, domain=domain, strategy=strategy)
        report = verify(query, corner_budget=0, sample_budget=0, seed=seed)
        outcome[strategy] = report.status == VerdictStatus.VERIFIED

    return outcome


def success_rate_experiment(
    *,
    net: Network,
    labeled: LabeledInput,
    domain: BoxDomain,
    subset_size: int,
    radius: int,
    trials: int,
    seed: int = DEFAULT_SEED,
    strategies: tuple[Strategy, ...] = tuple(Strategy),
    jobs: int = 1,
) -> SuccessRates:
    """Fraction of `trials` uniformly drawn pixel subsets of size `subset_size` whose l0-ball of radius `radius`
    each strategy proves robust. Trial i draws its subset from a seed derived from (seed, i)."""
    if trials < 1:
        raise InvalidParameterError(message=f"An experiment needs at least one trial, got {trials}")
    if not 1 <= radius <= subset_size <= net.entries:
        raise InvalidParameterError(
            message=f"Expected 1 <= t <= k <= {net.entries}, got t={radius} and k={subset_size}"
        )

    check_label(net, labeled)
    run = functools.partial(
        _trial,
        net=net,
        labeled=labeled,
        domain=domain,
        subset_size=subset_size,
        radius=radius,
        seed=seed,
        strategies=strategies,
    )
    outcomes = parallel_map(run, range(trials), jobs=jobs)

    verified = {strategy: sum(outcome[strategy] for outcome in outcomes) for strategy in strategies}
    logger.info("k=%d t=%d over %d trials: %s", subset_size, radius, trials, verified)
    return SuccessRates(subset_size=subset_size, radius=radius, trials=trials, verified=verified)
