import itertools
import logging
import math
from collections.abc import Iterator
from fractions import Fraction

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from l0cert._internal.types.domain import Ball0Spec, BoxDomain, FloatArray, coerce_point, coerce_points
from l0cert.errors import CapExceededError, InvalidDomainError, InvalidParameterError, ShapeMismatchError

logger = logging.getLogger(__name__)

HULL_TOLERANCE = 1e-9
DEFAULT_CORNER_CAP = 10**6
DEFAULT_COEFFICIENT_CAP = 10**6


def scaled_distance(*, center: float, lower: float, upper: float, value: float) -> float:
    if lower > center or center > upper:
        raise InvalidDomainError(message=f"Center {center} lies outside [{lower}, {upper}]")

    if value > center:
        gap = upper - center
    elif value < center:
        gap = lower - center
    else:
        return 0.0

    if gap == 0.0:
        return math.inf

    return (value - center) / gap


def scaled_distance_multi(
    *, center: FloatArray, lower: FloatArray, upper: FloatArray, value: FloatArray
) -> float:
    shapes = {np.shape(center), np.shape(lower), np.shape(upper), np.shape(value)}
    if len(shapes) != 1:
        raise ShapeMismatchError(expected=np.shape(center), actual=sorted(shapes), what="channel count")

    return max(
        scaled_distance(center=float(c), lower=float(a), upper=float(b), value=float(y))
        for c, a, b, y in zip(np.ravel(center), np.ravel(lower), np.ravel(upper), np.ravel(value), strict=True)
    )


def scaled_distances(*, ball: Ball0Spec, domain: BoxDomain, points: FloatArray) -> FloatArray:
    ball.check_against(domain)
    diff = points - ball.center
    gap_up = domain.upper - ball.center
    gap_down = domain.lower - ball.center

    with np.errstate(divide="ignore", invalid="ignore"):
        above = np.where(gap_up > 0, diff / np.where(gap_up > 0, gap_up, 1.0), np.inf)
        below = np.where(gap_down < 0, diff / np.where(gap_down < 0, gap_down, -1.0), np.inf)

    return np.where(diff > 0, above, np.where(diff < 0, below, 0.0))


def _outside_fixed(ball: Ball0Spec, points: FloatArray) -> NDArray[np.bool_]:
    fixed = ball.fixed_mask
    if not fixed.any():
        return np.zeros(points.shape[0], dtype=np.bool_)

    return np.any(points[:, fixed, :] != ball.center[fixed], axis=(1, 2))


def in_ball0_batch(*, ball: Ball0Spec, domain: BoxDomain, points: FloatArray) -> NDArray[np.bool_]:
    ball.check_against(domain)
    points = coerce_points(points, entries=ball.entries, channels=ball.channels)
    changed = np.any(points != ball.center, axis=2)

    return domain.contains(points) & ~_outside_fixed(ball, points) & (changed.sum(axis=1) <= ball.radius)


def in_ball0(*, ball: Ball0Spec, domain: BoxDomain, point: FloatArray) -> bool:
    point = coerce_point(point, entries=ball.entries, channels=ball.channels)
    return bool(in_ball0_batch(ball=ball, domain=domain, points=point[None])[0])


def _distance_sums(ball: Ball0Spec, domain: BoxDomain, points: FloatArray) -> FloatArray:
    distances = scaled_distances(ball=ball, domain=domain, points=points)
    return distances[:, ball.indices, :].max(axis=2).sum(axis=1)


def in_scaled_l1_batch(*, ball: Ball0Spec, domain: BoxDomain, points: FloatArray) -> NDArray[np.bool_]:
    """Membership in the asymmetrically scaled l1-ball (channel maximum per entry when channels > 1)."""
    points = coerce_points(points, entries=ball.entries, channels=ball.channels)
    sums = _distance_sums(ball, domain, points)

    return ~_outside_fixed(ball, points) & np.isfinite(sums) & (sums <= ball.radius + HULL_TOLERANCE)


def in_scaled_l1(*, ball: Ball0Spec, domain: BoxDomain, point: FloatArray) -> bool:
    point = coerce_point(point, entries=ball.entries, channels=ball.channels)
    return bool(in_scaled_l1_batch(ball=ball, domain=domain, points=point[None])[0])


def in_hull_batch(*, ball: Ball0Spec, domain: BoxDomain, points: FloatArray) -> NDArray[np.bool_]:
    points = coerce_points(points, entries=ball.entries, channels=ball.channels)
    return domain.contains(points) & in_scaled_l1_batch(ball=ball, domain=domain, points=points)


def in_hull(*, ball: Ball0Spec, domain: BoxDomain, point: FloatArray) -> bool:
    point = coerce_point(point, entries=ball.entries, channels=ball.channels)
    return bool(in_hull_batch(ball=ball, domain=domain, points=point[None])[0])


def corner_count(*, ball: Ball0Spec, domain: BoxDomain) -> int:
    choices = 2**domain.channels
    return sum(math.comb(ball.perturbable_count, size) * choices**size for size in range(ball.radius + 1))


def _corner_batches(ball: Ball0Spec, domain: BoxDomain) -> Iterator[FloatArray]:
    ball.check_against(domain)
    channels = domain.channels
    for size in range(ball.radius + 1):
        assignments = list(itertools.product((False, True), repeat=size * channels))
        selectors = np.array(assignments, dtype=np.bool_).reshape(len(assignments), size, channels)
        for subset in itertools.combinations(ball.indices.tolist(), size):
            batch = np.repeat(ball.center[None], selectors.shape[0], axis=0)
            if size > 0:
                chosen = list(subset)
                batch[:, chosen, :] = np.where(selectors, domain.upper[chosen], domain.lower[chosen])
            yield batch


def iter_corners(*, ball: Ball0Spec, domain: BoxDomain) -> Iterator[FloatArray]:
    for batch in _corner_batches(ball, domain):
        yield from batch


def enumerate_corners(*, ball: Ball0Spec, domain: BoxDomain, cap: int = DEFAULT_CORNER_CAP) -> FloatArray:
    """Every point agreeing with the center outside a subset of at most `radius` perturbable entries, and at a
    bound on every channel of that subset. This is a superset of the hull's extreme points."""
    count = corner_count(ball=ball, domain=domain)
    if count > cap:
        raise CapExceededError(what="corner", count=count, cap=cap)

    return np.concatenate(list(_corner_batches(ball, domain)), axis=0)


def _check_radius(domain: BoxDomain, radius: int, *, single_channel: bool) -> None:
    if single_channel and domain.channels != 1:
        raise InvalidParameterError(message=f"Expected a single-channel domain, got {domain.channels} channels")
    if radius < 1 or radius > domain.entries:
        raise InvalidParameterError(message=f"Radius must lie in [1, {domain.entries}], got {radius}")


# Volume fractions are exact rationals; only the final product with vol(D) is rounded.
def _scale_volume(domain: BoxDomain, fraction: Fraction, log_fraction: float) -> float:
    try:
        value = float(fraction) * domain.volume
    except OverflowError:
        value = math.inf
    if value != 0.0 and math.isfinite(value):
        return value

    # Large entry counts leave the float range; fall back to the log domain.
    return math.exp(domain.log_volume + log_fraction)


def _log_fraction(fraction: Fraction) -> float:
    if fraction <= 0:
        return -math.inf

    return math.log(fraction.numerator) - math.log(fraction.denominator)


def irwin_hall_cdf(*, entries: int, radius: int) -> Fraction:
    """P(U_1 + ... + U_k <= t) for independent uniform U_i and integer t, as an exact fraction."""
    if radius >= entries:
        return Fraction(1)

    total = sum((-1) ** r * math.comb(entries, r) * (radius - r) ** entries for r in range(radius))
    return Fraction(total, math.factorial(entries))


def volume_scaled_l1(*, domain: BoxDomain, radius: int) -> float:
    if domain.channels != 1:
        raise InvalidParameterError(message="The scaled l1 volume is defined for single-channel domains")
    if radius < 1:
        raise InvalidParameterError(message=f"Radius must be positive, got {radius}")

    k = domain.entries
    log_fraction = k * math.log(radius) - float(gammaln(k + 1))
    return _scale_volume(domain, Fraction(radius**k, math.factorial(k)), log_fraction)


def volume_scaled_l1_multichannel(*, domain: BoxDomain, radius: int) -> float:
    if radius < 1:
        raise InvalidParameterError(message=f"Radius must be positive, got {radius}")

    k, d = domain.entries, domain.channels
    log_fraction = d * k * math.log(radius) + k * float(gammaln(d + 1)) - float(gammaln(d * k + 1))
    fraction = Fraction(radius ** (d * k) * math.factorial(d) ** k, math.factorial(d * k))
    return _scale_volume(domain, fraction, log_fraction)


def volume_hull(*, domain: BoxDomain, radius: int) -> float:
    """Volume of the convex hull of the l0-ball: vol(D) times the Irwin-Hall CDF at the radius."""
    _check_radius(domain, radius, single_channel=True)
    fraction = irwin_hall_cdf(entries=domain.entries, radius=radius)

    return _scale_volume(domain, fraction, _log_fraction(fraction))


def _multichannel_coefficient(entries: int, channels: int, radius: int, r: int) -> Fraction:
    k, d, t = entries, channels, radius
    total = Fraction(0)
    for orders in itertools.product(range(1, d + 1), repeat=r):
        exponent = d * (k - r) + sum(orders)
        denominator = math.factorial(exponent) * math.prod(math.factorial(d - m) for m in orders)
        total += Fraction((t - r) ** exponent, denominator)

    return (-1) ** r * math.comb(k, r) * Fraction(math.factorial(d * k), t ** (d * k)) * total


def volume_hull_multichannel(*, domain: BoxDomain, radius: int, cap: int = DEFAULT_COEFFICIENT_CAP) -> float:
    _check_radius(domain, radius, single_channel=False)
    k, d, t = domain.entries, domain.channels, radius

    terms = sum(d**r for r in range(1, t))
    if terms > cap:
        raise CapExceededError(what="channel-order tuple", count=terms, cap=cap)

    correction = 1 + sum((_multichannel_coefficient(k, d, t, r) for r in range(1, t)), Fraction(0))
    fraction = Fraction(t ** (d * k) * math.factorial(d) ** k, math.factorial(d * k)) * correction
    logger.debug("Multi-channel hull fraction for k=%d d=%d t=%d is %s", k, d, t, fraction)

    return _scale_volume(domain, fraction, _log_fraction(fraction))


def _single_channel_coefficients(entries: int, radius: int) -> list[Fraction]:
    return [(-1) ** r * math.comb(entries, r) * Fraction(radius - r, radius) ** entries for r in range(radius)]


def _to_float(fraction: Fraction) -> float:
    try:
        return float(fraction)
    except OverflowError:
        return math.inf if fraction > 0 else -math.inf


def relative_excess_volumes(*, domain: BoxDomain, radius: int) -> tuple[float, float]:
    _check_radius(domain, radius, single_channel=True)
    k, t = domain.entries, radius

    coefficients = _single_channel_coefficients(k, t)
    correction = sum(coefficients[1:], Fraction(0))
    denominator = 1 + correction

    excess_l1 = -correction / denominator
    excess_box = (Fraction(math.factorial(k), t**k) - sum(coefficients, Fraction(0))) / denominator
    return _to_float(excess_l1), _to_float(excess_box)
