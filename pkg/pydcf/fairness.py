import logging
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.stats import entropy

from .exceptions import NumericalError
from .mrp import attempt_count_pmf
from .rates import AttemptRates

logger = logging.getLogger(__name__)

EU1_CAP = 1e9


class SuccessRun(NamedTuple):
    r11: float      # probability that the next success is again by the last winner
    eu1: float      # mean number of consecutive successes, capped at EU1_CAP
    capped: bool


def identity_states(n):
    """(n_a, z) with z = 1 when Node 1 attempted in the last cycle."""
    return [(n_a, 0) for n_a in range(1, n)] + [(n_a, 1) for n_a in range(1, n + 1)]


def identity_chain(rates: AttemptRates, n):
    """Attacker count chain that also tracks whether Node 1 took part, for m = 0."""
    if n < 2:
        raise ValueError(f"Identity chain needs n >= 2, got {n}")
    states = identity_states(n)
    index = {state: i for i, state in enumerate(states)}
    P = np.zeros((len(states), len(states)))

    for i, (n_a, z) in enumerate(states):
        beta_x = rates.x_rate(n_a)
        if z == 1:
            own = beta_x
            others = attempt_count_pmf(n_a - 1, beta_x, n - n_a, rates.beta_d)
        else:
            own = rates.beta_d
            others = attempt_count_pmf(n_a, beta_x, n - 1 - n_a, rates.beta_d)

        denominator = 1.0 - (1.0 - own) * others[0]
        if denominator <= 0:
            raise ValueError("Attempt rates are all zero; no transmission cycle can end.")
        for k in range(1, n):
            P[i, index[(k, 0)]] = (1.0 - own) * others[k] / denominator
        for k in range(1, n + 1):
            P[i, index[(k, 1)]] = own * others[k - 1] / denominator
    return P


def expected_success_counts(rates: AttemptRates, n, L):
    """
    Expected successes of Node 1 within L cycles, from every identity state.

    Returns an array of shape (L, 2n - 1); row l - 1 holds ES_1(l; .).
    """
    if L < 1:
        raise ValueError(f"Frame length L must be >= 1, got {L}")
    P = identity_chain(rates, n)
    into_success = P[:, identity_states(n).index((1, 1))]

    table = np.zeros((L, P.shape[0]))
    table[0] = into_success
    for l in range(1, L):
        table[l] = into_success + P @ table[l - 1]
    return table


def jain_index(rates: AttemptRates, n, L):
    """Jain index of the successes per node over a frame of L cycles that starts right after a success by Node 1."""
    states = identity_states(n)
    es = expected_success_counts(rates, n, L)[-1]
    winner = es[states.index((1, 1))]
    loser = es[states.index((1, 0))]
    er = np.array([winner] + [loser] * (n - 1))
    if np.all(er == 0):
        raise ValueError("Jain index undefined: no node is expected to succeed in the frame.")
    return float(er.sum() ** 2 / (n * np.sum(er ** 2)))


def _hit_first(P, transient, start, target):
    """Probability to reach `target` before any other non-transient state when leaving `start`."""
    r = np.zeros(0)
    if transient:
        A = np.eye(len(transient)) - P[np.ix_(transient, transient)]
        try:
            r = linalg.solve(A, P[transient, target])
        except (linalg.LinAlgError, ValueError) as e:
            raise NumericalError(f"Success-run system is singular: {e}") from e
        if not np.all(np.isfinite(r)):
            raise NumericalError("Success-run system is singular")
    return float(P[start, target] + (P[start, transient] @ r if transient else 0.0))


def _success_run(r11):
    r11 = min(max(r11, 0.0), 1.0)
    if r11 > 1.0 - 1e-9:
        logger.warning(f"Success runs are effectively unbounded (r11={r11:.12f}), EU1 capped at {EU1_CAP:g}")
        return SuccessRun(r11, EU1_CAP, True)
    return SuccessRun(r11, 1.0 / (1.0 - r11), False)


def success_run_zero_delay(rates: AttemptRates, n):
    if n < 2:
        raise ValueError(f"Success runs need n >= 2, got {n}")
    states = identity_states(n)
    P = identity_chain(rates, n)
    wins, loses = states.index((1, 1)), states.index((1, 0))
    transient = [i for i in range(len(states)) if i not in (wins, loses)]
    return _success_run(_hit_first(P, transient, wins, wins))


def success_states_delay(m):
    return ['0s1', '0s2', '0c'] + [f'+{k}' for k in range(1, m + 1)] + [f'-{k}' for k in range(1, m + 1)]


def success_chain_delay(rates: AttemptRates, m):
    """
    Two-node misalignment chain that remembers which node won the last success.
    +k: Node 1 starts counting k slots after Node 2; -k the other way round.
    """
    bd, bs, bc = rates.beta_d, rates.beta_s, rates.beta_c
    d1 = 1.0 - (1.0 - bd) * (1.0 - bs)
    d2 = 1.0 - (1.0 - bc) ** 2
    if d1 <= 0 or d2 <= 0:
        raise ValueError("Attempt rates are all zero; no transmission cycle can end.")

    size = 2 * m + 3
    plus = lambda k: 2 + k
    minus = lambda k: 2 + m + k
    P = np.zeros((size, size))

    # after a success by Node 1: Node 1 counts at beta_s, Node 2 at beta_d
    P[0, 0] = bs * (1 - bd) ** (m + 1) / d1
    P[0, 1] = bd * (1 - bs) ** (m + 1) / d1
    P[0, 2] = bs * bd / d1
    for k in range(1, m + 1):
        P[0, plus(k)] = bs * (1 - bd) ** k * bd / d1
        P[0, minus(k)] = bd * (1 - bs) ** k * bs / d1

    P[1, 0], P[1, 1], P[1, 2] = P[0, 1], P[0, 0], P[0, 2]
    for k in range(1, m + 1):
        P[1, plus(k)], P[1, minus(k)] = P[0, minus(k)], P[0, plus(k)]

    nu = 1.0 - bc
    P[2, 0] = P[2, 1] = bc * nu ** (m + 1) / d2
    P[2, 2] = bc ** 2 / d2
    for k in range(1, m + 1):
        P[2, plus(k)] = P[2, minus(k)] = bc ** 2 * nu ** k / d2

    for k in range(1, m + 1):
        j = np.arange(1, k + 1)
        lead_wins = np.sum(nu ** (j - 1) * bc * nu ** (j + m - k))
        row = nu ** k * P[2]
        row[1] += lead_wins
        for k_next in range(1, m + 1):
            j_next = j[j >= max(k + 1 - k_next, 1)]
            row[minus(k_next)] += np.sum(nu ** (j_next - 1) * bc * nu ** (j_next + k_next - k - 1) * bc)
        P[plus(k)] = row

        mirrored = np.empty(size)
        mirrored[0], mirrored[1], mirrored[2] = row[1], row[0], row[2]
        mirrored[plus(1):minus(1)] = row[minus(1):]
        mirrored[minus(1):] = row[plus(1):minus(1)]
        P[minus(k)] = mirrored
    return P


def success_run_delay(rates: AttemptRates, m):
    """Success runs of two nodes with delay m."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    P = success_chain_delay(rates, m)
    return _success_run(_hit_first(P, list(range(2, P.shape[0])), 0, 0))


def success_chain_divergence(r11, n):
    """Kullback-Leibler distance of the winner chain row (r11, (1 - r11)/(n - 1), ...) to uniform winners."""
    row = np.array([r11] + [(1.0 - r11) / (n - 1)] * (n - 1))
    return float(entropy(row, np.full(n, 1.0 / n)))


def switching_probability(beta_d, beta_s):
    """Probability that the next success of two nodes (m = 0) goes to the node that did not just win."""
    return beta_d * (1.0 - beta_s / 2) / (beta_s + beta_d * (1.0 - beta_s))


def switching_ratio_bounds(eps, beta_s):
    """Interval of beta_d / beta_s that keeps the switching probability within 1/2 +- eps."""
    low = (0.5 - eps) / (0.5 + eps - eps * beta_s)
    high = (0.5 + eps) / (0.5 - eps + eps * beta_s)
    return low, high
