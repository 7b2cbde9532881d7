"""Complete verification of an l0-ball by covering its t-subsets with pixel blocks.

Every block is certified with top-t propagation restricted to its pixels. A block that fails is covered again by
smaller blocks, down to leaves whose t-subsets are checked one by one as box neighborhoods, with a search for a
concrete counterexample wherever the box check fails.
"""

import functools
import itertools
import logging
import math
import time
from collections.abc import Iterable, Sequence
from typing import Self

import numpy as np
from pydantic import BaseModel, model_validator

from l0cert._internal.network import Network
from l0cert._internal.parallel import parallel_map
from l0cert._internal.seeding import DEFAULT_SEED, derive_seed
from l0cert._internal.types.bounds import Strategy
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, LabeledInput
from l0cert._internal.types.report import CoverStats, Query, VerdictReport, VerdictStatus
from l0cert._internal.verifier import DEFAULT_CORNER_BUDGET, DEFAULT_SAMPLE_BUDGET, check_label, verify
from l0cert.errors import CapExceededError, InvalidParameterError

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_LIMIT = 6
DEFAULT_LEAF_SIZE = 8
NAIVE_SUBSET_CAP = 10**5

Block = tuple[int, ...]


class CoverPlan(BaseModel):
    indices: Block
    radius: int
    arity: int
    parts: list[Block]
    blocks: list[Block]
    depth_limit: int = DEFAULT_DEPTH_LIMIT

    @property
    def max_block_size(self) -> int:
        return max(len(block) for block in self.blocks)

    def covers(self, subset: Iterable[int]) -> bool:
        wanted = set(subset)
        return any(wanted.issubset(block) for block in self.blocks)


class CoverParams(BaseModel):
    arity: int | None = None
    leaf_size: int = DEFAULT_LEAF_SIZE
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    seed: int = DEFAULT_SEED
    jobs: int = 1
    corner_budget: int = DEFAULT_CORNER_BUDGET
    sample_budget: int = DEFAULT_SAMPLE_BUDGET

    @model_validator(mode="after")
    def positive(self) -> Self:
        if self.arity is not None and self.arity < 1:
            raise ValueError("Arity must be positive")
        if self.leaf_size < 1 or self.jobs < 1:
            raise ValueError("Leaf size and jobs must be positive")
        if self.depth_limit < 0 or self.corner_budget < 0 or self.sample_budget < 0:
            raise ValueError("Depth limit and falsification budgets can not be negative")

        return self

    def arity_for(self, radius: int) -> int:
        return self.arity if self.arity is not None else 2 * radius


def build_cover(
    *, indices: Sequence[int], radius: int, arity: int, depth_limit: int = DEFAULT_DEPTH_LIMIT
) -> CoverPlan:
    """Splits `indices` into `arity` near-equal parts and emits the union of every `radius` of them as a block.

    Any `radius` indices touch at most `radius` parts, so every such subset lies in some block.
    """
    if radius < 1 or arity < radius:
        raise InvalidParameterError(message=f"Expected 1 <= t <= p, got t={radius} and p={arity}")
    if len(indices) < arity:
        raise InvalidParameterError(message=f"Can not split {len(indices)} indices into {arity} parts")

    ordered = np.array(sorted(indices), dtype=np.intp)
    parts = [tuple(part.tolist()) for part in np.array_split(ordered, arity)]
    blocks = [tuple(sorted(itertools.chain.from_iterable(combo))) for combo in itertools.combinations(parts, radius)]

    return CoverPlan(
        indices=tuple(ordered.tolist()), radius=radius, arity=arity, parts=parts, blocks=blocks, depth_limit=depth_limit
    )


def _check_block(block: Block, *, net: Network, labeled: LabeledInput, domain: BoxDomain, radius: int) -> VerdictReport:
    ball = Ball0Spec(center=labeled.center, radius=radius, perturbable=block)
    query = Query(net=net, labeled=labeled, ball=ball, domain=domain, strategy=Strategy.TOP_T)
    return verify(query, corner_budget=0, sample_budget=0)


def _check_subset(
    subset: Block,
    *,
    net: Network,
    labeled: LabeledInput,
    domain: BoxDomain,
    seed: int,
    corner_budget: int,
    sample_budget: int,
) -> VerdictReport:
    # The seed depends only on the subset, so any caller checking the same subset searches the same points.
    ball = Ball0Spec(center=labeled.center, radius=len(subset), perturbable=subset)
    query = Query(net=net, labeled=labeled, ball=ball, domain=domain, strategy=Strategy.BOX)
    return verify(
        query, corner_budget=corner_budget, sample_budget=sample_budget, seed=derive_seed(seed, *subset)
    )


def _combine(
    *,
    labeled: LabeledInput,
    proofs: list[VerdictReport],
    subsets: list[VerdictReport],
    stats: CoverStats,
    seed: int,
    started: float,
) -> VerdictReport:
    falsified = [report for report in subsets if report.status == VerdictStatus.FALSIFIED]
    if falsified:
        status = VerdictStatus.FALSIFIED
    elif any(report.status == VerdictStatus.UNKNOWN for report in subsets):
        status = VerdictStatus.UNKNOWN
    else:
        status = VerdictStatus.VERIFIED

    considered = proofs + subsets
    margins = np.min(np.array([report.margins for report in considered]), axis=0)
    witness = falsified[0] if falsified else None

    return VerdictReport(
        status=status,
        label=labeled.label,
        strategy=None,
        adversarial_labels=considered[0].adversarial_labels,
        margins=margins.tolist(),
        counterexample=None if witness is None else witness.counterexample,
        counterexample_label=None if witness is None else witness.counterexample_label,
        elapsed_seconds=time.perf_counter() - started,
        seed=seed,
        cover_stats=stats.model_copy(update={"verdict": status}),
    )


def cover_verify(
    *, net: Network, labeled: LabeledInput, domain: BoxDomain, radius: int, params: CoverParams | None = None
) -> tuple[VerdictReport, CoverStats]:
    params = params or CoverParams()
    started = time.perf_counter()
    check_label(net, labeled)
    if not 1 <= radius <= net.entries:
        raise InvalidParameterError(message=f"Radius must lie in [1, {net.entries}], got {radius}")

    arity = params.arity_for(radius)
    check_block = functools.partial(_check_block, net=net, labeled=labeled, domain=domain, radius=radius)
    check_subset = functools.partial(
        _check_subset,
        net=net,
        labeled=labeled,
        domain=domain,
        seed=params.seed,
        corner_budget=params.corner_budget,
        sample_budget=params.sample_budget,
    )

    stats = CoverStats()
    proofs: list[VerdictReport] = []
    checked: dict[Block, VerdictReport] = {}
    pending: list[Block] = [tuple(range(net.entries))]

    for depth in itertools.count():
        if not pending:
            break

        leaves = [
            block
            for block in pending
            if len(block) <= params.leaf_size or len(block) < arity or depth >= params.depth_limit
        ]
        splits = [block for block in pending if block not in leaves]

        subsets = [
            subset
            for leaf in leaves
            for subset in itertools.combinations(leaf, radius)
            if subset not in checked
        ]
        subsets = list(dict.fromkeys(subsets))
        for subset, report in zip(subsets, parallel_map(check_subset, subsets, jobs=params.jobs), strict=True):
            checked[subset] = report
        stats = stats.merged(CoverStats(propagation_calls=len(subsets), leaf_enumerations=len(leaves)))
        if any(report.status == VerdictStatus.FALSIFIED for report in checked.values()):
            break

        blocks: list[Block] = []
        for block in splits:
            blocks.extend(build_cover(indices=block, radius=radius, arity=arity).blocks)
        blocks = list(dict.fromkeys(blocks))
        reports = parallel_map(check_block, blocks, jobs=params.jobs)

        pending = []
        for block, report in zip(blocks, reports, strict=True):
            if report.status == VerdictStatus.VERIFIED:
                proofs.append(report)
            else:
                pending.append(block)
        stats = stats.merged(
            CoverStats(
                blocks=len(blocks),
                propagation_calls=len(blocks),
                refinements=len(splits) if depth > 0 else 0,
            )
        )
        logger.debug("Depth %d: %d blocks, %d left to refine", depth, len(blocks), len(pending))

    report = _combine(
        labeled=labeled,
        proofs=proofs,
        subsets=list(checked.values()),
        stats=stats,
        seed=params.seed,
        started=started,
    )
    logger.info(
        "Cover verification with radius %d: %s after %d propagation calls",
        radius,
        report.status,
        stats.propagation_calls,
    )
    assert report.cover_stats is not None
    return report, report.cover_stats


def naive_complete_verify(
    *,
    net: Network,
    labeled: LabeledInput,
    domain: BoxDomain,
    radius: int,
    seed: int = DEFAULT_SEED,
    cap: int = NAIVE_SUBSET_CAP,
    jobs: int = 1,
    corner_budget: int = DEFAULT_CORNER_BUDGET,
    sample_budget: int = DEFAULT_SAMPLE_BUDGET,
) -> VerdictReport:
    started = time.perf_counter()
    check_label(net, labeled)
    if not 1 <= radius <= net.entries:
        raise InvalidParameterError(message=f"Radius must lie in [1, {net.entries}], got {radius}")

    count = math.comb(net.entries, radius)
    if count > cap:
        raise CapExceededError(what="t-subset", count=count, cap=cap)

    check_subset = functools.partial(
        _check_subset,
        net=net,
        labeled=labeled,
        domain=domain,
        seed=seed,
        corner_budget=corner_budget,
        sample_budget=sample_budget,
    )
    subsets = list(itertools.combinations(range(net.entries), radius))
    reports = parallel_map(check_subset, subsets, jobs=jobs)

    stats = CoverStats(propagation_calls=count, leaf_enumerations=1)
    return _combine(labeled=labeled, proofs=[], subsets=reports, stats=stats, seed=seed, started=started)
