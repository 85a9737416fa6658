import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .exceptions import ConvergenceError
from .schedule import BackoffSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanFieldState:
    mu: np.ndarray      # fraction of nodes per backoff stage
    p: np.ndarray       # per-stage attempt rates p_k = 1 / b_k

    def __post_init__(self):
        check_simplex(self.mu)
        if len(self.mu) != len(self.p):
            raise ValueError("mu and p must have one entry per stage")
        if np.any(np.asarray(self.p) <= 0):
            raise ValueError("Attempt rates p_k must be positive")


class Trajectory(NamedTuple):
    t: np.ndarray
    mu: np.ndarray          # time points x stages
    norm_diff: np.ndarray   # euclidean distance to the stationary point


def check_simplex(mu, tol=1e-9):
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < -tol) or abs(mu.sum() - 1.0) > tol:
        raise ValueError(f"Stage occupancy must be a probability vector, got {mu}")


def stage_rates(schedule: BackoffSchedule):
    return 1.0 / np.asarray(schedule.means)


def ode_rhs(mu, p):
    mu = np.asarray(mu, dtype=float)
    p = np.asarray(p, dtype=float)
    a = float(np.dot(p, mu))
    collide = 1.0 - np.exp(-a)

    flow = mu * p
    dmu = -flow
    dmu[0] += a * np.exp(-a) + flow[-1] * collide
    dmu[1:] += flow[:-1] * collide
    return dmu


def _beta_of_gamma(gamma, p):
    powers = np.power(gamma, np.arange(len(p)))
    return powers.sum() / np.sum(powers / p)


def ode_stationary_point(p, tol=1e-12):
    """
    Unique stationary point of the mean-field ODE.

    Returns:
    tuple: (mu*, beta, gamma)
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("Attempt rates p_k must be positive")

    f = lambda g: g - (1.0 - np.exp(-_beta_of_gamma(g, p)))
    try:
        gamma = brentq(f, 0.0, 1.0, xtol=1e-15, maxiter=500)
    except (ValueError, RuntimeError) as e:
        raise ConvergenceError(f"Mean-field stationary point not found: {e}") from e
    if abs(f(gamma)) > tol:
        raise ConvergenceError("Mean-field stationary point residual above tolerance", residual=abs(f(gamma)))

    mu = np.power(gamma, np.arange(len(p))) / p
    mu /= mu.sum()
    return mu, float(_beta_of_gamma(gamma, p)), float(gamma)


def meanfield_gamma(schedule: BackoffSchedule):
    return ode_stationary_point(stage_rates(schedule))[2]


def integrate_ode(mu0, p, t_end, tol=1e-9, n_points=200, method='RK45'):
    """Integrate the mean-field ODE from mu0 and track the distance to the stationary point."""
    check_simplex(mu0)
    p = np.asarray(p, dtype=float)
    mu_star = ode_stationary_point(p)[0]

    t_eval = np.linspace(0.0, t_end, n_points)
    solution = solve_ivp(lambda t, mu: ode_rhs(mu, p), (0.0, t_end), np.asarray(mu0, dtype=float),
                         method=method, t_eval=t_eval, atol=tol, rtol=1e-8)
    if not solution.success:
        raise ConvergenceError(f"ODE integration failed: {solution.message}")

    mu = solution.y.T
    drift = np.max(np.abs(mu.sum(axis=1) - 1.0))
    if drift > 1e-6:
        logger.warning(f"Mean-field trajectory left the simplex by {drift:.3e}")

    norm_diff = np.linalg.norm(mu - mu_star, axis=1)
    logger.info(f"ODE integrated to t={t_end}, final distance {norm_diff[-1]:.3e}")
    return Trajectory(solution.t, mu, norm_diff)
