import logging
import math
from collections.abc import Callable

import numpy as np
from numpy.typing import NDArray

from l0cert._internal.geometry import DEFAULT_CORNER_CAP, enumerate_corners
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, FloatArray, coerce_point
from l0cert._internal.types.estimates import FrankWolfeResult, McEstimate
from l0cert.errors import InvalidParameterError, ShapeMismatchError

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 1_000
MC_CHUNK = 1 << 16
FW_MAX_ITERS = 100_000
FW_TOLERANCE = 1e-8
HULL_MEMBERSHIP_THRESHOLD = 1e-6
_FW_RESYNC_EVERY = 256

MembershipPredicate = Callable[[FloatArray], NDArray[np.bool_]]


def mc_volume(*, predicate: MembershipPredicate, domain: BoxDomain, samples: int, seed: int) -> McEstimate:
    """Estimates vol({y in D : predicate(y)}) by uniform sampling over D.

    `predicate` receives a batch shaped (count, entries, channels) and returns one boolean per point.
    """
    if samples < MIN_MC_SAMPLES:
        raise InvalidParameterError(message=f"Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}")

    rng = np.random.default_rng(seed)
    hits = 0
    remaining = samples
    while remaining > 0:
        count = min(remaining, MC_CHUNK)
        points = rng.uniform(domain.lower, domain.upper, size=(count, *domain.lower.shape))
        hits += int(np.count_nonzero(predicate(points)))
        remaining -= count

    fraction = hits / samples
    volume = domain.volume
    return McEstimate(
        mean=volume * fraction,
        std_error=volume * math.sqrt(fraction * (1.0 - fraction) / samples),
        samples=samples,
        seed=seed,
    )


def min_linear_over_ball0(
    *, weights: FloatArray, bias: float, ball: Ball0Spec, domain: BoxDomain, cap: int = DEFAULT_CORNER_CAP
) -> tuple[float, FloatArray]:
    weights = coerce_point(weights, entries=ball.entries, channels=ball.channels)
    corners = enumerate_corners(ball=ball, domain=domain, cap=cap)
    values = np.einsum("nkd,kd->n", corners, weights) + bias
    best = int(np.argmin(values))

    return float(values[best]), corners[best]


def hull_distance_fw(
    *, point: FloatArray, vertices: FloatArray, max_iters: int = FW_MAX_ITERS, tol: float = FW_TOLERANCE
) -> FrankWolfeResult:
    """Euclidean distance from `point` to conv(vertices) by pairwise Frank-Wolfe over the vertex weights.

    Stops once the point is within `tol` of the hull, or once the duality gap bounds the distance error by `tol`.
    """
    target = np.ravel(np.asarray(point, dtype=np.float64))
    if len(vertices) == 0:
        raise InvalidParameterError(message="The vertex list is empty")
    matrix = np.asarray(vertices, dtype=np.float64).reshape(len(vertices), -1)
    if matrix.shape[1] != target.size:
        raise ShapeMismatchError(expected=matrix.shape[1], actual=target.size, what="point dimension")

    start = int(np.argmin(np.sum((matrix - target) ** 2, axis=1)))
    weights = np.zeros(matrix.shape[0])
    weights[start] = 1.0
    current = matrix[start].copy()

    objective, gap = math.inf, math.inf
    for iteration in range(1, max_iters + 1):
        if iteration % _FW_RESYNC_EVERY == 0:
            current = weights @ matrix

        residual = current - target
        objective = float(residual @ residual)
        if objective <= tol * tol:
            return FrankWolfeResult(
                distance=math.sqrt(objective), lower_bound=0.0, iterations=iteration, converged=True
            )

        scores = matrix @ residual
        toward = int(np.argmin(scores))
        gap = 2.0 * float(residual @ current - scores[toward])
        if gap <= tol * math.sqrt(objective):
            return FrankWolfeResult(
                distance=math.sqrt(objective),
                lower_bound=math.sqrt(max(objective - gap, 0.0)),
                iterations=iteration,
                converged=True,
            )

        active = np.flatnonzero(weights > 0.0)
        away = int(active[np.argmax(scores[active])])
        direction = matrix[toward] - matrix[away]
        curvature = float(direction @ direction)
        if curvature == 0.0:
            break

        step = min(max(-float(residual @ direction) / curvature, 0.0), float(weights[away]))
        if step == weights[away]:
            weights[away] = 0.0
        else:
            weights[away] -= step
        weights[toward] += step
        current = current + step * direction

    logger.debug("Frank-Wolfe stopped without converging: distance %.3e, gap %.3e", math.sqrt(objective), gap)
    return FrankWolfeResult(
        distance=math.sqrt(objective),
        lower_bound=math.sqrt(max(objective - gap, 0.0)),
        iterations=max_iters,
        converged=False,
    )


def sample_ball0_batch(*, ball: Ball0Spec, domain: BoxDomain, count: int, seed: int) -> FloatArray:
    """Random members of the l0-ball: a size uniform in [0, radius], then a uniform subset of that size, then
    uniform values in the box for the chosen entries."""
    ball.check_against(domain)
    rng = np.random.default_rng(seed)
    indices = ball.indices

    sizes = rng.integers(0, ball.radius + 1, size=count)
    ranks = np.argsort(np.argsort(rng.random((count, indices.size)), axis=1), axis=1)
    chosen = ranks < sizes[:, None]
    values = rng.uniform(domain.lower[indices], domain.upper[indices], size=(count, indices.size, ball.channels))

    points = np.repeat(ball.center[None], count, axis=0)
    points[:, indices, :] = np.where(chosen[:, :, None], values, ball.center[indices])
    return points


def sample_in_ball0(*, ball: Ball0Spec, domain: BoxDomain, seed: int) -> FloatArray:
    return sample_ball0_batch(ball=ball, domain=domain, count=1, seed=seed)[0]
