import numpy as np
import pytest

from l0cert import (
    Ball0Spec,
    BoxDomain,
    enumerate_corners,
    hull_distance_fw,
    in_ball0_batch,
    in_hull_batch,
    in_scaled_l1_batch,
    mc_volume,
    min_linear_over_ball0,
    sample_ball0_batch,
    sample_in_ball0,
    volume_hull,
    volume_hull_multichannel,
)
from l0cert.errors import InvalidParameterError

MC_SAMPLES = 200_000
SIGMAS = 4.0


def _cube(entries: int, channels: int = 1) -> BoxDomain:
    return BoxDomain.uniform(entries=entries, lower=-1.0, upper=1.0, channels=channels)


def test_mc_volume_of_everything_is_exact() -> None:
    domain = _cube(3)
    estimate = mc_volume(predicate=lambda points: np.ones(len(points), dtype=bool), domain=domain, samples=5000, seed=1)

    assert estimate.mean == domain.volume
    assert estimate.std_error == 0.0
    assert estimate.samples == 5000


def test_mc_volume_needs_enough_samples() -> None:
    with pytest.raises(InvalidParameterError):
        mc_volume(predicate=lambda points: np.ones(len(points), dtype=bool), domain=_cube(2), samples=10, seed=1)


def test_mc_volume_is_seed_deterministic() -> None:
    ball = Ball0Spec(center=np.zeros(3), radius=2)
    domain = _cube(3)

    def predicate(points: np.ndarray) -> np.ndarray:
        return in_hull_batch(ball=ball, domain=domain, points=points)

    first = mc_volume(predicate=predicate, domain=domain, samples=10_000, seed=5)
    second = mc_volume(predicate=predicate, domain=domain, samples=10_000, seed=5)
    assert first == second


def test_hull_volume_matches_monte_carlo() -> None:
    domain = _cube(3)
    ball = Ball0Spec(center=np.zeros(3), radius=2)
    estimate = mc_volume(
        predicate=lambda points: in_hull_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=MC_SAMPLES,
        seed=17,
    )

    assert estimate.agrees_with(20 / 3, sigmas=SIGMAS)


def test_scaled_l1_inside_the_domain_is_the_hull() -> None:
    domain = _cube(3)
    ball = Ball0Spec(center=np.array([0.2, -0.4, 0.1]), radius=2)

    hull = mc_volume(
        predicate=lambda points: in_hull_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=50_000,
        seed=23,
    )
    l1 = mc_volume(
        predicate=lambda points: in_scaled_l1_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=50_000,
        seed=23,
    )
    assert hull.mean == l1.mean


@pytest.mark.parametrize(
    "center",
    [np.zeros(4), np.array([0.5, -0.5, 0.9, 0.0]), np.array([-0.8, 0.8, -0.2, 0.3])],
)
def test_hull_volume_does_not_depend_on_the_center(center: np.ndarray) -> None:
    domain = _cube(4)
    ball = Ball0Spec(center=center, radius=2)
    estimate = mc_volume(
        predicate=lambda points: in_hull_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=MC_SAMPLES,
        seed=29,
    )

    assert estimate.agrees_with(volume_hull(domain=domain, radius=2), sigmas=SIGMAS)


@pytest.mark.parametrize(("entries", "channels", "radius"), [(2, 2, 1), (3, 2, 2), (4, 2, 3)])
def test_multichannel_hull_volume_matches_monte_carlo(entries: int, channels: int, radius: int) -> None:
    domain = BoxDomain.uniform(entries=entries, lower=0.0, upper=1.0, channels=channels)
    ball = Ball0Spec(center=np.full((entries, channels), 0.3), radius=radius)
    estimate = mc_volume(
        predicate=lambda points: in_hull_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=MC_SAMPLES,
        seed=31,
    )

    assert estimate.agrees_with(volume_hull_multichannel(domain=domain, radius=radius), sigmas=SIGMAS)


def test_l0_ball_has_no_volume() -> None:
    domain = _cube(4)
    ball = Ball0Spec(center=np.zeros(4), radius=3)
    estimate = mc_volume(
        predicate=lambda points: in_ball0_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=100_000,
        seed=37,
    )

    assert estimate.mean == 0.0


def test_min_linear_over_ball0_examples() -> None:
    domain = _cube(3)
    center = np.array([-0.3, 0.0, 0.65])

    value, argmin = min_linear_over_ball0(
        weights=np.array([2.0, -3.0, 7.0]), bias=0.0, ball=Ball0Spec(center=center, radius=2), domain=domain
    )
    assert value == pytest.approx(-10.6, abs=1e-12)
    assert argmin.ravel().tolist() == [-0.3, 1.0, -1.0]

    value, _ = min_linear_over_ball0(
        weights=np.array([2.0, -3.0, 7.0]), bias=1.5, ball=Ball0Spec(center=center, radius=3), domain=domain
    )
    assert value == pytest.approx(1.5 - 2.0 - 3.0 - 7.0, abs=1e-12)

    value, _ = min_linear_over_ball0(
        weights=np.zeros(3), bias=4.0, ball=Ball0Spec(center=center, radius=2), domain=domain
    )
    assert value == 4.0


def test_frank_wolfe_examples() -> None:
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    assert hull_distance_fw(point=np.array([1.0, 0.0]), vertices=vertices).distance == 0.0
    midpoint = hull_distance_fw(point=np.array([0.5, 0.5]), vertices=vertices)
    assert midpoint.converged
    assert midpoint.distance < 1e-6

    outside = hull_distance_fw(point=np.array([1.0, 1.0]), vertices=vertices)
    assert outside.converged
    assert outside.distance == pytest.approx(np.sqrt(0.5), abs=1e-6)
    assert 0.0 < outside.lower_bound <= outside.distance


def test_frank_wolfe_on_the_cube_ball() -> None:
    domain = _cube(3)
    vertices = enumerate_corners(ball=Ball0Spec(center=np.zeros(3), radius=2), domain=domain)

    assert hull_distance_fw(point=np.full(3, 0.9), vertices=vertices).lower_bound > 1e-6
    assert hull_distance_fw(point=np.full(3, 0.5), vertices=vertices).distance < 1e-6


def test_frank_wolfe_needs_vertices() -> None:
    with pytest.raises(InvalidParameterError):
        hull_distance_fw(point=np.zeros(2), vertices=np.zeros((0, 2)))
    with pytest.raises(InvalidParameterError):
        hull_distance_fw(point=np.zeros((2, 1)), vertices=np.zeros((0, 2, 1)))


def test_sampled_points_are_ball_members() -> None:
    domain = BoxDomain(lower=[-1.0, -2.0, 0.0, -0.5, -1.0], upper=[1.0, 0.5, 3.0, 0.5, 2.0])
    ball = Ball0Spec(center=[0.0, 0.0, 1.0, 0.25, -1.0], radius=2, perturbable=(0, 2, 4))

    points = sample_ball0_batch(ball=ball, domain=domain, count=100_000, seed=41)
    assert in_ball0_batch(ball=ball, domain=domain, points=points).all()

    changed = (points != ball.center).any(axis=2)
    assert not changed[:, [1, 3]].any()
    assert set(changed.sum(axis=1).tolist()) == {0, 1, 2}


def test_full_radius_samples_cover_the_domain() -> None:
    domain = _cube(3)
    ball = Ball0Spec(center=np.zeros(3), radius=3)
    points = sample_ball0_batch(ball=ball, domain=domain, count=5000, seed=43)

    assert (points != 0.0).all(axis=(1, 2)).any()


def test_sample_in_ball0_is_seed_deterministic() -> None:
    domain = _cube(6)
    ball = Ball0Spec(center=np.zeros(6), radius=2)

    first = sample_in_ball0(ball=ball, domain=domain, seed=47)
    assert np.array_equal(first, sample_in_ball0(ball=ball, domain=domain, seed=47))
    assert first.shape == (6, 1)
