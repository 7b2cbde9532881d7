import numpy as np
import pytest

from l0cert import (
    AffineExpr,
    Ball0Spec,
    BoxDomain,
    Network,
    Strategy,
    back_substitute,
    compute_bounds,
    concretize,
    concretize_box,
    concretize_topt,
    concretize_ttimestop,
    contributions,
    forward_trace,
    in_ball0,
    min_linear_over_ball0,
    relax_relu,
    sample_ball0_batch,
    topt_minimizer,
)
from l0cert._internal.propagation import input_bounds
from l0cert.errors import InvalidParameterError, ShapeMismatchError
from tests.factories import random_network

SOUNDNESS_SAMPLES = 10_000

TOY_INTERVALS = {
    Strategy.BOX: [(-12.0, 12.0), (-9.0, 9.0), (-1.0, 32.0)],
    Strategy.TOP_T: [(-10.6, 9.55), (-7.0, 7.95), (0.05, 31.15)],
    Strategy.T_TIMES_TOP: [(-19.15, 9.95), (-7.25, 8.75), (-0.75, 34.602920962199306)],
}


def _random_case(rng: np.random.Generator) -> tuple[AffineExpr, Ball0Spec, BoxDomain]:
    entries = int(rng.integers(1, 9))
    channels = int(rng.integers(1, 3))
    lower = rng.uniform(-2.0, 0.0, size=(entries, channels))
    upper = lower + rng.uniform(0.1, 3.0, size=(entries, channels))
    center = rng.uniform(lower, upper)
    perturbable = None
    if entries > 2 and rng.random() < 0.3:
        perturbable = tuple(sorted(rng.choice(entries, size=entries - 1, replace=False).tolist()))
    count = entries if perturbable is None else len(perturbable)
    radius = int(rng.integers(1, min(3, count) + 1))

    expr = AffineExpr(coefficients=rng.normal(size=(entries, channels)), bias=float(rng.normal()))
    ball = Ball0Spec(center=center, radius=radius, perturbable=perturbable)
    return expr, ball, BoxDomain(lower=lower, upper=upper)


def test_toy_contributions(toy_ball: Ball0Spec, toy_domain: BoxDomain) -> None:
    contribution = contributions(expr=AffineExpr(coefficients=[2.0, -3.0, 7.0]), ball=toy_ball, domain=toy_domain)

    assert contribution.indices == (0, 1, 2)
    assert contribution.d_minus == pytest.approx([-1.4, -3.0, -11.55])
    assert contribution.d_plus == pytest.approx([2.6, 3.0, 2.45])

    restricted = contributions(
        expr=AffineExpr(coefficients=[2.0, -3.0, 7.0]), ball=toy_ball.restricted_to((0, 2)), domain=toy_domain
    )
    assert restricted.indices == (0, 2)
    assert restricted.d_minus == pytest.approx([-1.4, -11.55])


def test_toy_first_layer_concretization(toy_ball: Ball0Spec, toy_domain: BoxDomain) -> None:
    expr = AffineExpr(coefficients=[2.0, -3.0, 7.0])

    assert concretize_box(expr=expr, ball=toy_ball, domain=toy_domain) == pytest.approx((-12.0, 12.0))
    assert concretize_topt(expr=expr, ball=toy_ball, domain=toy_domain) == pytest.approx((-10.6, 9.55))
    assert concretize_ttimestop(expr=expr, ball=toy_ball, domain=toy_domain) == pytest.approx((-19.15, 9.95))


@pytest.mark.parametrize("strategy", list(Strategy))
def test_toy_intervals(toy_net: Network, toy_ball: Ball0Spec, toy_domain: BoxDomain, strategy: Strategy) -> None:
    bounds = compute_bounds(net=toy_net, ball=toy_ball, domain=toy_domain, strategy=strategy)
    n1, n2, o1 = TOY_INTERVALS[strategy]

    assert [layer.kind for layer in bounds.layers] == ["affine", "relu", "affine"]
    assert bounds.layers[0].bounds.interval(0) == pytest.approx(n1, abs=1e-9)
    assert bounds.layers[0].bounds.interval(1) == pytest.approx(n2, abs=1e-9)
    assert bounds.output.interval(0) == pytest.approx(o1, abs=1e-9)
    assert bounds.output.interval(1) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert bounds.layers[1].bounds.interval(0) == pytest.approx((0.0, n1[1]), abs=1e-9)


def test_toy_back_substitution(toy_net: Network, toy_ball: Ball0Spec, toy_domain: BoxDomain) -> None:
    bounds = compute_bounds(net=toy_net, ball=toy_ball, domain=toy_domain, strategy=Strategy.TOP_T)
    linear = back_substitute(
        net=toy_net,
        stage_index=2,
        stage_bounds=[layer.bounds for layer in bounds.layers[:2]],
        inputs=input_bounds(ball=toy_ball, domain=toy_domain),
    )
    lower, _ = linear.row(0)

    chord = 7.95 / 14.95
    assert lower.coefficients.ravel() == pytest.approx([4 * chord, -2 * chord, -3 * chord], abs=1e-9)
    assert lower.bias == pytest.approx(8.0 - 7.0 * chord, abs=1e-9)
    assert lower.bias == pytest.approx(4.2776, abs=1e-4)

    value = concretize(expr=lower, ball=toy_ball, domain=toy_domain, strategy=Strategy.TOP_T)[0]
    assert value == pytest.approx(0.05, abs=1e-9)


def test_back_substitution_rejects_relu_stage(toy_net: Network, toy_ball: Ball0Spec, toy_domain: BoxDomain) -> None:
    with pytest.raises(InvalidParameterError):
        back_substitute(net=toy_net, stage_index=1, stage_bounds=[], inputs=input_bounds(ball=toy_ball, domain=toy_domain))


@pytest.mark.parametrize(
    ("lower", "upper", "expected"),
    [
        (1.0, 2.0, (1.0, 0.0, 1.0, 0.0)),
        (0.0, 2.0, (1.0, 0.0, 1.0, 0.0)),
        (-2.0, -1.0, (0.0, 0.0, 0.0, 0.0)),
        (-2.0, 0.0, (0.0, 0.0, 0.0, 0.0)),
        (-1.0, 3.0, (1.0, 0.0, 0.75, 0.75)),
        (-3.0, 1.0, (0.0, 0.0, 0.25, 0.75)),
        (-1.0, 1.0, (0.0, 0.0, 0.5, 0.5)),
    ],
)
def test_relax_relu(lower: float, upper: float, expected: tuple[float, float, float, float]) -> None:
    below, above = relax_relu(lower=lower, upper=upper)

    assert (float(below.coefficients[0]), below.bias, float(above.coefficients[0]), above.bias) == pytest.approx(expected)


def test_relax_relu_rejects_empty_interval() -> None:
    with pytest.raises(InvalidParameterError):
        relax_relu(lower=2.0, upper=1.0)


def test_relax_relu_treats_rounding_noise_as_a_tie() -> None:
    below, above = relax_relu(lower=-8.999999999999998, upper=9.0)

    assert float(below.coefficients[0]) == 0.0
    assert below.bias == 0.0
    assert float(above.coefficients[0]) == pytest.approx(0.5)

    below, _ = relax_relu(lower=-8.99, upper=9.0)
    assert float(below.coefficients[0]) == 1.0


def test_topt_is_exact_for_linear_expressions() -> None:
    rng = np.random.default_rng(101)
    for _ in range(1000):
        expr, ball, domain = _random_case(rng)
        lowest, _ = min_linear_over_ball0(weights=expr.coefficients, bias=expr.bias, ball=ball, domain=domain)
        highest, _ = min_linear_over_ball0(weights=-expr.coefficients, bias=-expr.bias, ball=ball, domain=domain)

        assert concretize_topt(expr=expr, ball=ball, domain=domain) == pytest.approx((lowest, -highest), rel=1e-9, abs=1e-12)


def test_topt_minimizer_attains_the_bound() -> None:
    rng = np.random.default_rng(202)
    for _ in range(200):
        expr, ball, domain = _random_case(rng)
        point = topt_minimizer(expr=expr, ball=ball, domain=domain)

        assert in_ball0(ball=ball, domain=domain, point=point)
        value = float(np.sum(expr.coefficients * point) + expr.bias)
        assert value == pytest.approx(concretize_topt(expr=expr, ball=ball, domain=domain)[0], rel=1e-9, abs=1e-12)


def test_first_layer_tightness_ordering() -> None:
    rng = np.random.default_rng(303)
    for _ in range(300):
        expr, ball, domain = _random_case(rng)
        box = concretize_box(expr=expr, ball=ball, domain=domain)
        topt = concretize_topt(expr=expr, ball=ball, domain=domain)
        ttimestop = concretize_ttimestop(expr=expr, ball=ball, domain=domain)

        assert box[0] <= topt[0] + 1e-12 and topt[1] <= box[1] + 1e-12
        assert ttimestop[0] <= topt[0] + 1e-12 and topt[1] <= ttimestop[1] + 1e-12


def test_topt_widens_with_the_radius() -> None:
    rng = np.random.default_rng(404)
    domain = BoxDomain.uniform(entries=8, lower=0.0, upper=1.0)
    center = rng.uniform(size=8)
    expr = AffineExpr(coefficients=rng.normal(size=8), bias=0.3)

    intervals = [
        concretize_topt(expr=expr, ball=Ball0Spec(center=center, radius=radius), domain=domain) for radius in range(1, 9)
    ]
    for narrower, wider in zip(intervals[:-1], intervals[1:], strict=True):
        assert wider[0] <= narrower[0] and narrower[1] <= wider[1]
    assert intervals[-1] == pytest.approx(concretize_box(expr=expr, ball=Ball0Spec(center=center, radius=1), domain=domain))


def test_box_and_ttimestop_are_incomparable(toy_ball: Ball0Spec, toy_domain: BoxDomain) -> None:
    n1 = AffineExpr(coefficients=[2.0, -3.0, 7.0])
    box = concretize_box(expr=n1, ball=toy_ball, domain=toy_domain)
    ttimestop = concretize_ttimestop(expr=n1, ball=toy_ball, domain=toy_domain)
    assert box[0] > ttimestop[0]
    assert box[1] > ttimestop[1]

    one_large = AffineExpr(coefficients=[10.0, 0.1, 0.1])
    ball = Ball0Spec(center=np.zeros(3), radius=2)
    domain = BoxDomain.uniform(entries=3, lower=-1.0, upper=1.0)
    assert concretize_box(expr=one_large, ball=ball, domain=domain)[0] == pytest.approx(-10.2)
    assert concretize_ttimestop(expr=one_large, ball=ball, domain=domain)[0] == pytest.approx(-20.0)

    spread = AffineExpr(coefficients=[1.0, 1.0, 1.0, 1.0])
    ball = Ball0Spec(center=np.zeros(4), radius=1)
    domain = BoxDomain.uniform(entries=4, lower=-1.0, upper=1.0)
    assert concretize_box(expr=spread, ball=ball, domain=domain)[0] == pytest.approx(-4.0)
    assert concretize_ttimestop(expr=spread, ball=ball, domain=domain)[0] == pytest.approx(-1.0)


def test_strategies_collapse_at_the_extreme_radii() -> None:
    rng = np.random.default_rng(505)
    for _ in range(10):
        net = random_network(rng, entries=7, widths=[6, 5, 3])
        domain = BoxDomain.uniform(entries=7, lower=0.0, upper=1.0)
        center = rng.uniform(size=7)

        single = Ball0Spec(center=center, radius=1)
        topt = compute_bounds(net=net, ball=single, domain=domain, strategy=Strategy.TOP_T)
        ttimestop = compute_bounds(net=net, ball=single, domain=domain, strategy=Strategy.T_TIMES_TOP)
        for left, right in zip(topt.layers, ttimestop.layers, strict=True):
            assert np.allclose(left.bounds.lower, right.bounds.lower, rtol=0.0, atol=1e-12)
            assert np.allclose(left.bounds.upper, right.bounds.upper, rtol=0.0, atol=1e-12)

        full = Ball0Spec(center=center, radius=7)
        topt = compute_bounds(net=net, ball=full, domain=domain, strategy=Strategy.TOP_T)
        box = compute_bounds(net=net, ball=full, domain=domain, strategy=Strategy.BOX)
        for left, right in zip(topt.layers, box.layers, strict=True):
            assert np.allclose(left.bounds.lower, right.bounds.lower, rtol=0.0, atol=1e-9)
            assert np.allclose(left.bounds.upper, right.bounds.upper, rtol=0.0, atol=1e-9)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_bounds_contain_every_reachable_value(strategy: Strategy) -> None:
    rng = np.random.default_rng(606)
    for trial in range(20):
        channels = 1 + trial % 2
        net = random_network(rng, entries=6, widths=[5, 4, 3], channels=channels)
        domain = BoxDomain.uniform(entries=6, lower=-1.0, upper=1.0, channels=channels)
        ball = Ball0Spec(center=rng.uniform(-1.0, 1.0, size=(6, channels)), radius=int(rng.integers(1, 4)))
        bounds = compute_bounds(net=net, ball=ball, domain=domain, strategy=strategy)

        if strategy == Strategy.BOX:
            points = rng.uniform(domain.lower, domain.upper, size=(SOUNDNESS_SAMPLES, 6, channels))
        else:
            points = sample_ball0_batch(ball=ball, domain=domain, count=SOUNDNESS_SAMPLES, seed=trial)

        for layer, values in zip(bounds.layers, forward_trace(net, points), strict=True):
            slack = 1e-9 * (1.0 + np.abs(values))
            assert np.all(values >= layer.bounds.lower - slack)
            assert np.all(values <= layer.bounds.upper + slack)


def test_compute_bounds_checks_the_input_shape(toy_net: Network) -> None:
    ball = Ball0Spec(center=np.zeros(4), radius=1)
    with pytest.raises(ShapeMismatchError):
        compute_bounds(
            net=toy_net, ball=ball, domain=BoxDomain.uniform(entries=4, lower=-1.0, upper=1.0), strategy=Strategy.BOX
        )
