import logging
from dataclasses import replace
from typing import List, NamedTuple, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import root
from scipy.special import comb

from .exceptions import ConvergenceError, NumericalError
from .markov import stationary_distribution
from .rates import AttemptRates, PerformanceReport
from .schedule import BackoffSchedule
from .timing import PhyTiming, collision_cycle_overhead, success_cycle_overhead

logger = logging.getLogger(__name__)

SUCCESS_STATE = (0, 1)

# smallest fraction of a substitution step taken by the damped iteration
MIN_DAMPING = 1.0 / 64


def _binomial_pmf(count, rate):
    k = np.arange(count + 1)
    return comb(count, k) * np.power(rate, k) * np.power(1.0 - rate, count - k)


def attempt_count_pmf(a, alpha, d, delta):
    """Probability that exactly y of a nodes at rate alpha and d nodes at rate delta attempt in one slot."""
    return np.convolve(_binomial_pmf(a, alpha), _binomial_pmf(d, delta))


def _cycle_pmf(n_a, rates: AttemptRates, n):
    # attempts in one slot given n_a attackers in the previous cycle
    return attempt_count_pmf(n_a, rates.x_rate(n_a), n - n_a, rates.beta_d)


def joint_attempt_prob(n_a, n_a_next, rates: AttemptRates, n):
    """Probability that exactly n_a_next nodes attempt together in a backoff slot."""
    if not (1 <= n_a <= n and 0 <= n_a_next <= n):
        raise ValueError(f"Invalid attacker counts ({n_a}, {n_a_next}) for n={n}")
    return float(_cycle_pmf(n_a, rates, n)[n_a_next])


def cycle_transition_matrix(rates: AttemptRates, n):
    """Transition matrix of the number of attackers per cycle, states n_a = 1..n."""
    P = np.zeros((n, n))
    for n_a in range(1, n + 1):
        q = _cycle_pmf(n_a, rates, n)
        if 1.0 - q[0] <= 0:
            raise ValueError("Attempt rates are all zero; no transmission cycle can end.")
        P[n_a - 1] = q[1:] / (1.0 - q[0])
    return P


def performance_zero_delay(rates: AttemptRates, n, timing: PhyTiming):
    """
    Collision probability and normalized throughput from the attacker-count chain.

    Returns:
    tuple: (gamma, theta)
    """
    pi = stationary_distribution(cycle_transition_matrix(rates, n))

    t_s = timing.in_slots(success_cycle_overhead(timing, delayed=False))
    t_c = timing.in_slots(collision_cycle_overhead(timing, delayed=False))
    t_d = timing.in_slots(timing.t_d)
    k = np.arange(n + 1)

    collisions = np.zeros(n)
    attempts = np.zeros(n)
    payload = np.zeros(n)
    length = np.zeros(n)
    for n_a in range(1, n + 1):
        q = _cycle_pmf(n_a, rates, n)
        denominator = 1.0 - q[0]
        collisions[n_a - 1] = np.dot(k[2:], q[2:]) / denominator
        attempts[n_a - 1] = np.dot(k[1:], q[1:]) / denominator
        payload[n_a - 1] = q[1] * t_d / denominator
        length[n_a - 1] = (1.0 + q[1] * t_s + q[2:].sum() * t_c) / denominator

    gamma = np.dot(pi, collisions) / np.dot(pi, attempts)
    theta = np.dot(pi, payload) / np.dot(pi, length)
    return float(gamma), float(theta)


def tagged_states(schedule: BackoffSchedule, n) -> List[Tuple[int, int]]:
    """(s, n_a) states of the tagged node right after its own attempt; (0, 1) first."""
    return [SUCCESS_STATE] + [(s, n_a) for s in range(schedule.K + 1) for n_a in range(2, n + 1)]


def _no_interrupt_prob(n_a, rates: AttemptRates, n):
    # per-slot probability that none of the other nodes attempts during the first segment
    return (1.0 - rates.beta_c) ** (n_a - 1) * (1.0 - rates.beta_d) ** (n - n_a)


def _segment_stats(W, rho):
    """Interruption probability, mean residual and mean counted backoff of a fresh backoff U{1..W}."""
    l = np.arange(1, W + 1)
    w = np.arange(1, W)
    interrupt_at = np.power(rho, w - 1) * (1.0 - rho)
    p_i = np.mean(1.0 - np.power(rho, l - 1))
    eb_r = np.sum(interrupt_at * (W - w) * (W - w + 1) / 2) / W
    eb_first = (np.sum(l * np.power(rho, l - 1)) + np.sum(w * interrupt_at * (W - w))) / W
    return float(p_i), float(eb_r), float(eb_first)


def interruption_probability(s, n_a, rates: AttemptRates, schedule: BackoffSchedule, n):
    return _segment_stats(schedule.get_window(s), _no_interrupt_prob(n_a, rates, n))[0]


def residual_backoff_mean(s, n_a, rates: AttemptRates, schedule: BackoffSchedule, n):
    return _segment_stats(schedule.get_window(s), _no_interrupt_prob(n_a, rates, n))[1]


def first_segment_backoff_mean(state, rates: AttemptRates, schedule: BackoffSchedule, n):
    s, n_a = state
    return _segment_stats(schedule.get_window(s), _no_interrupt_prob(n_a, rates, n))[2]


class AuxChain(NamedTuple):
    Q: sparse.csr_matrix
    states: List[Tuple[int, int, int]]  # (s, n_a, b), the b = 0 states first
    n_tagged: int


def _contexts(rates: AttemptRates, n):
    """
    Single-slot attempt-count distributions of the other n - 1 nodes.

    Rows 0..n-1 follow the tagged node's own attempt with n_a = row + 1
    attackers; rows n..2n-2 follow an interruption by y = row - n + 1 nodes.
    """
    pmfs = np.zeros((2 * n - 1, n))
    for n_a in range(1, n + 1):
        pmfs[n_a - 1] = attempt_count_pmf(n_a - 1, rates.beta_c, n - n_a, rates.beta_d)
    for y in range(1, n):
        pmfs[n - 1 + y] = attempt_count_pmf(y, rates.x_rate(y), n - 1 - y, rates.beta_d)
    return pmfs


def aux_transition_matrix(rates: AttemptRates, schedule: BackoffSchedule, n):
    """Tagged-node chain with the residual backoff b as part of the state."""
    pmfs = _contexts(rates, n)
    states = [(s, n_a, 0) for s, n_a in tagged_states(schedule, n)]
    n_tagged = len(states)
    states += [(s, y, b) for s in range(schedule.K + 1) for y in range(1, n)
               for b in range(1, schedule.get_window(s))]
    index = {state: i for i, state in enumerate(states)}

    rows, cols, vals = [], [], []

    def add(src, dst, value):
        if value > 0:
            rows.append(index[src])
            cols.append(index[dst])
            vals.append(value)

    for state in states:
        s, n_a, b = state
        s_next = schedule.next_stage(s)
        if b == 0:
            pmf = pmfs[n_a - 1]
            W = schedule.get_window(s)
            silent = np.power(pmf[0], np.arange(W))     # nobody attempted in the slots before
            add(state, (0, 1, 0), np.sum(silent * pmf[0]) / W)
            for y in range(1, n):
                add(state, (s_next, y + 1, 0), np.sum(silent) * pmf[y] / W)
                # interrupted at slot t < l, leaving residual l - t
                tail = np.cumsum(silent)
                for residual in range(1, W):
                    add(state, (s, y, residual), tail[W - residual - 1] * pmf[y] / W)
        else:
            pmf = pmfs[n - 1 + n_a]
            add(state, (0, 1, 0), pmf[0] ** b)
            for y in range(1, n):
                add(state, (s_next, y + 1, 0), pmf[0] ** (b - 1) * pmf[y])
                for residual in range(1, b):
                    add(state, (s, y, residual), pmf[0] ** (b - residual - 1) * pmf[y])

    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return AuxChain(Q, states, n_tagged)


def tagged_stationary(chain: AuxChain):
    """Stationary law of the tagged node restricted to the instants right after its attempts."""
    phi = stationary_distribution(chain.Q)
    psi = phi[:chain.n_tagged]
    return psi / psi.sum()


def censored_tagged_matrix(rates: AttemptRates, schedule: BackoffSchedule, n):
    """
    Tagged-node chain observed only right after the tagged node's attempts.

    V[c, :] holds, for the current residual b and context c, the law of how the
    backoff ends: column 1 is a success, column k >= 2 a collision with k attackers.
    """
    pmfs = _contexts(rates, n)
    contexts = pmfs.shape[0]

    step = np.zeros((contexts, contexts))
    step[np.arange(contexts), np.arange(contexts)] = pmfs[:, 0]
    step[:, n:] += pmfs[:, 1:]

    V = np.zeros((contexts, n + 1))
    V[:, 1] = pmfs[:, 0]
    V[:, 2:] = pmfs[:, 1:]

    needed = set(schedule.windows)
    sums = {}
    total = V.copy()
    for b in range(1, schedule.max_window() + 1):
        if b > 1:
            V = step @ V
            total += V
        if b in needed:
            sums[b] = total.copy()

    states = tagged_states(schedule, n)
    index = {state: i for i, state in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for i, (s, n_a) in enumerate(states):
        W = schedule.get_window(s)
        outcome = sums[W][n_a - 1] / W
        s_next = schedule.next_stage(s)
        P[i, index[SUCCESS_STATE]] += outcome[1]
        for k in range(2, n + 1):
            P[i, index[(s_next, k)]] += outcome[k]
    return P


def tagged_distribution(rates: AttemptRates, schedule: BackoffSchedule, n, chain='censored'):
    if chain == 'censored':
        return stationary_distribution(censored_tagged_matrix(rates, schedule, n))
    elif chain == 'aux':
        return tagged_stationary(aux_transition_matrix(rates, schedule, n))
    else:
        raise ValueError("Invalid chain. Choose 'censored' or 'aux'.")


def _beta_s_update(rates: AttemptRates, schedule: BackoffSchedule, n):
    p_i, _, eb_s = _segment_stats(schedule.get_window(0), _no_interrupt_prob(1, rates, n))
    return (1.0 - p_i) / eb_s


def rate_update(psi, rates: AttemptRates, schedule: BackoffSchedule, n):
    """One application of the attempt-rate map given the tagged-node law psi."""
    states = tagged_states(schedule, n)
    psi = np.asarray(psi, dtype=float)
    _, hi = schedule.rate_box()

    stats = np.array([_segment_stats(schedule.get_window(s), _no_interrupt_prob(n_a, rates, n))
                      for s, n_a in states])
    p_i, eb_r, eb_first = stats[:, 0], stats[:, 1], stats[:, 2]
    means = np.array([schedule.get_mean(s) for s, _ in states])

    beta_d_defined = np.dot(psi, eb_r) > 0
    beta_d = np.dot(psi, p_i) / np.dot(psi, eb_r) if beta_d_defined else hi
    beta_s = (1.0 - p_i[0]) / eb_first[0]

    collided = np.dot(psi[1:], eb_first[1:])
    beta_c = np.dot(psi[1:], 1.0 - p_i[1:]) / collided if collided > 0 else rates.beta_c
    beta = 1.0 / np.dot(psi, means)

    return AttemptRates(beta_d=float(beta_d), beta_s=float(beta_s), beta_c=float(beta_c), beta=float(beta),
                        beta_d_defined=bool(beta_d_defined))


def require_converged(rates: AttemptRates):
    """Raise ConvergenceError unless the fixed-point solve converged."""
    if not rates.converged:
        raise ConvergenceError(f"Attempt rates did not converge after {rates.iterations} iterations",
                               residual=rates.residual)
    return rates


def _polish(update, lo, hi, start, tol):
    """Solve T(x) = x with a hybrid Powell root finder from the best damped iterate."""
    def residual_map(x):
        x = np.clip(x, lo, hi)
        new, _ = update(x[0], x[1])
        return np.array([new.beta_d, new.beta_c]) - x

    sol = root(residual_map, np.asarray(start, dtype=float), method='hybr', options={'xtol': tol})
    x = np.clip(sol.x, lo, hi)
    new, psi = update(x[0], x[1])
    residual = float(max(abs(new.beta_d - x[0]), abs(new.beta_c - x[1])))
    return new, psi, residual, sol.nfev


def iterate_rates(update, schedule: BackoffSchedule, tol, max_iter, initial):
    """
    Damped successive substitution on (beta_d, beta_c). The step is halved
    each time the iterates oscillate without contracting; when max_iter is
    exhausted a root finder is started from the best iterate.

    update maps (beta_d, beta_c) to (new AttemptRates, psi).
    """
    lo, hi = schedule.rate_box()
    beta_d, beta_c = (min(max(v, lo), hi) for v in initial)
    damping = 1.0
    previous_step = None
    previous_residual = np.inf
    best = (np.inf, beta_d, beta_c)

    for iteration in range(1, max_iter + 1):
        new, psi = update(beta_d, beta_c)
        step = np.array([new.beta_d - beta_d, new.beta_c - beta_c])
        residual = float(np.max(np.abs(step)))
        logger.debug(f"iteration {iteration}: beta_d {new.beta_d:.10f}, beta_c {new.beta_c:.10f}, residual {residual:.3e}")

        if residual <= tol:
            logger.info(f"Attempt rates converged after {iteration} iterations (residual {residual:.3e})")
            return replace(new, iterations=iteration, residual=residual, converged=True), psi
        if residual < best[0]:
            best = (residual, beta_d, beta_c)

        if (previous_step is not None and np.any(step * previous_step < 0)
                and residual > 0.9 * previous_residual and damping > MIN_DAMPING):
            damping /= 2
            logger.info(f"Oscillation at iteration {iteration}, damping the step to {damping:g}")

        beta_d = min(max(beta_d + damping * step[0], lo), hi)
        beta_c = min(max(beta_c + damping * step[1], lo), hi)
        previous_step = step
        previous_residual = residual

    if tol > 0:
        try:
            polished, polished_psi, polished_residual, evaluations = _polish(update, lo, hi, best[1:], tol)
        except NumericalError as e:
            logger.warning(f"Root-finding polish failed: {e}")
            polished_residual = np.inf
        if polished_residual <= tol:
            logger.info(f"Attempt rates converged by root finding after {max_iter} iterations "
                        f"(residual {polished_residual:.3e})")
            return replace(polished, iterations=max_iter + evaluations, residual=polished_residual,
                           converged=True), polished_psi

    logger.warning(f"Attempt rates did not converge in {max_iter} iterations (residual {residual:.3e})")
    return replace(new, iterations=max_iter, residual=residual, converged=False), psi


def spread_initial_points(schedule: BackoffSchedule):
    lo, hi = schedule.rate_box()
    near, far = lo + 0.05 * (hi - lo), lo + 0.95 * (hi - lo)
    middle = 0.5 * (lo + hi)
    return [(near, near), (far, far), (near, far), (far, near), (middle, middle)]


def solve_rates_zero_delay(schedule: BackoffSchedule, n, tol=1e-8, max_iter=1000, initial=None, chain='censored'):
    """
    Fixed point of the attempt-rate map without propagation delay.

    Returns:
    tuple: (AttemptRates, psi over tagged_states(schedule, n))
    """
    if n < 2:
        raise ValueError(f"The analysis needs n >= 2, got {n}")
    if initial is None:
        initial = spread_initial_points(schedule)[-1]

    def update(beta_d, beta_c):
        rates = AttemptRates(beta_d=beta_d, beta_s=None, beta_c=beta_c)
        rates = AttemptRates(beta_d=beta_d, beta_s=_beta_s_update(rates, schedule, n), beta_c=beta_c)
        psi = tagged_distribution(rates, schedule, n, chain)
        return rate_update(psi, rates, schedule, n), psi

    return iterate_rates(update, schedule, tol, max_iter, initial)


def distinct_fixed_points(solutions: List[AttemptRates], tol):
    distinct = []
    for rates in solutions:
        if not any(abs(rates.beta_d - other.beta_d) <= tol and abs(rates.beta_c - other.beta_c) <= tol
                   for other in distinct):
            distinct.append(rates)
    if len(distinct) > 1:
        logger.warning(f"Found {len(distinct)} distinct fixed points from {len(solutions)} initial points")
    return distinct


def find_fixed_points_zero_delay(schedule: BackoffSchedule, n, tol=1e-8, max_iter=1000):
    """Solve from spread initial points and report every distinct solution."""
    solutions = [solve_rates_zero_delay(schedule, n, tol, max_iter, initial=start)[0]
                 for start in spread_initial_points(schedule)]
    return distinct_fixed_points(solutions, 10 * tol)


def analyze_zero_delay(schedule: BackoffSchedule, n, timing: PhyTiming, tol=1e-8, max_iter=1000):
    rates, _ = solve_rates_zero_delay(schedule, n, tol, max_iter)
    require_converged(rates)
    gamma, theta = performance_zero_delay(rates, n, timing)
    return PerformanceReport(gamma=gamma, theta=theta, rates=rates, source='mrp-analysis')
