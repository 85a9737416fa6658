import numpy as np
import pytest

from pydcf import integrate_ode, ode_stationary_point, solve_bianchi_fp
from pydcf.meanfield import MeanFieldState, meanfield_gamma, ode_rhs, stage_rates
from pydcf.schedule import preset_schedule


def test_rhs_conserves_mass():
    rng = np.random.default_rng(3)
    for _ in range(20):
        K = rng.integers(1, 8)
        mu = rng.random(K + 1)
        mu /= mu.sum()
        p = rng.random(K + 1) + 0.01
        assert abs(ode_rhs(mu, p).sum()) < 1e-14


def test_single_stage_is_stationary():
    for p0 in (0.1, 1.0, 3.0):
        assert ode_rhs([1.0], [p0]) == pytest.approx([0.0], abs=1e-14)


@pytest.mark.parametrize('name', ['ts1', 'ts2', 'ts3', 'ts4', '80211b'])
def test_stationary_point(name):
    p = stage_rates(preset_schedule(name))
    mu, beta, gamma = ode_stationary_point(p)
    assert mu.sum() == pytest.approx(1.0)
    assert np.max(np.abs(ode_rhs(mu, p))) < 1e-8
    assert gamma == pytest.approx(1.0 - np.exp(-beta), abs=1e-12)


def test_single_stage_closed_form():
    _, beta, gamma = ode_stationary_point([1.0])
    assert beta == pytest.approx(1.0)
    assert gamma == pytest.approx(1.0 - np.exp(-1.0))


@pytest.mark.parametrize('name', ['ts2', 'ts3', '80211b'])
def test_matches_poisson_fixed_point(name):
    schedule = preset_schedule(name)
    for n in (2, 10, 50):
        # n - 1 competitors at rate 1/b_k act like one aggregate at rate (n - 1)/b_k
        p = (n - 1) / np.asarray(schedule.means)
        gamma = ode_stationary_point(p)[2]
        assert gamma == pytest.approx(solve_bianchi_fp(schedule, n, variant='poisson')[1], abs=1e-10)


def test_meanfield_gamma():
    schedule = preset_schedule('ts3')
    assert meanfield_gamma(schedule) == pytest.approx(ode_stationary_point(stage_rates(schedule))[2])


def test_trajectory_from_stationary_point_stays_put():
    p = stage_rates(preset_schedule('ts4'))
    mu_star = ode_stationary_point(p)[0]
    trajectory = integrate_ode(mu_star, p, 500.0)
    assert np.max(trajectory.norm_diff) < 1e-7


def test_trajectories_converge_and_stay_on_simplex():
    p = stage_rates(preset_schedule('ts3'))
    for mu0 in ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5]):
        trajectory = integrate_ode(mu0, p, 3000.0)
        assert np.max(np.abs(trajectory.mu.sum(axis=1) - 1.0)) < 1e-6
        assert trajectory.norm_diff[-1] < 1e-4
        assert trajectory.norm_diff[-1] < trajectory.norm_diff[0]


def test_rejects_points_off_the_simplex():
    with pytest.raises(ValueError):
        integrate_ode([0.7, 0.7], [1.0, 0.5], 10.0)
    with pytest.raises(ValueError):
        MeanFieldState(mu=np.array([0.5, 0.5]), p=np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        ode_stationary_point([1.0, 0.0])


@pytest.mark.slow
def test_geometric_schedule_trajectories_converge():
    p = stage_rates(preset_schedule('ts1'))
    starts = [np.eye(8)[0], np.eye(8)[7], np.full(8, 1 / 8)]
    for mu0 in starts:
        trajectory = integrate_ode(mu0, p, 200_000.0, n_points=400)
        assert trajectory.norm_diff[-1] < 1e-4
