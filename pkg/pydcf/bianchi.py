import logging

import numpy as np
from scipy.optimize import brentq

from .exceptions import ConvergenceError
from .rates import AttemptRates, PerformanceReport
from .schedule import BackoffSchedule
from .timing import PhyTiming, collision_cycle_overhead, success_cycle_overhead

logger = logging.getLogger(__name__)


def attempt_rate_G(gamma, schedule: BackoffSchedule):
    """Attempt rate of a node whose attempts collide independently with probability gamma."""
    powers = np.power(float(gamma), np.arange(schedule.K + 1))
    return float(powers.sum() / np.dot(powers, schedule.means))


def collision_prob_Gamma(beta, n, variant='binomial'):
    if variant == 'binomial':
        return 1.0 - (1.0 - beta) ** (n - 1)
    elif variant == 'poisson':
        return 1.0 - np.exp(-(n - 1) * beta)
    else:
        raise ValueError("Invalid variant. Choose 'binomial' or 'poisson'.")


def fixed_point_residual(gamma, schedule, n, variant='binomial'):
    return gamma - collision_prob_Gamma(attempt_rate_G(gamma, schedule), n, variant)


def solve_bianchi_fp(schedule: BackoffSchedule, n, tol=1e-12, variant='binomial'):
    """
    Solve gamma = Gamma(G(gamma)) by bracketing on [0, 1].

    Returns:
    tuple: (beta, gamma)
    """
    if n < 2:
        raise ValueError(f"The fixed point needs n >= 2, got {n}")
    if not schedule.is_nondecreasing():
        logger.warning(f"{schedule} is not nondecreasing; the fixed point may not be unique")

    f = lambda g: fixed_point_residual(g, schedule, n, variant)
    try:
        gamma = brentq(f, 0.0, 1.0, xtol=1e-15, maxiter=500)
    except (ValueError, RuntimeError) as e:
        raise ConvergenceError(f"Bianchi fixed point not found: {e}") from e

    res = abs(f(gamma))
    if res > tol:
        raise ConvergenceError("Bianchi fixed point residual above tolerance", residual=res)
    return attempt_rate_G(gamma, schedule), gamma


def bianchi_throughput(beta, n, timing: PhyTiming):
    # normalized throughput of n nodes each attempting with probability beta per slot
    p_tr = 1.0 - (1.0 - beta) ** n
    if p_tr == 0:
        return 0.0
    p_s = n * beta * (1.0 - beta) ** (n - 1) / p_tr
    t_s = success_cycle_overhead(timing, delayed=True)
    t_c = collision_cycle_overhead(timing, delayed=True)
    mean_cycle = timing.sigma + p_tr * p_s * t_s + p_tr * (1.0 - p_s) * t_c
    return p_tr * p_s * timing.t_d / mean_cycle


def analyze_bianchi(schedule: BackoffSchedule, n, timing: PhyTiming, variant='binomial'):
    beta, gamma = solve_bianchi_fp(schedule, n, variant=variant)
    rates = AttemptRates(beta_d=beta, beta_s=beta, beta_c=beta, beta=beta)
    return PerformanceReport(gamma=gamma, theta=bianchi_throughput(beta, n, timing), rates=rates, source='bianchi')
