"""
Two-node analysis with a propagation delay of m backoff slots.

States of the tagged node carry its misalignment x relative to the peer:
'0s' after its own success, '0c' after an aligned collision, +k when the
tagged node starts counting k slots after the peer and -k when it starts
k slots before it.
"""
import logging

import numpy as np
from scipy.signal import lfilter

from .markov import stationary_distribution
from .mrp import iterate_rates, require_converged, spread_initial_points
from .rates import AttemptRates, PerformanceReport
from .schedule import BackoffSchedule
from .timing import PhyTiming, collision_cycle_overhead, success_cycle_overhead

logger = logging.getLogger(__name__)

ZERO_S = '0s'
ZERO_C = '0c'


def misalign_states(m):
    return [ZERO_S, ZERO_C] + list(range(1, m + 1))


def relative_misalignments(m):
    """x values in matrix order: 0s, 0c, +1..+m, -1..-m."""
    return [ZERO_S, ZERO_C] + list(range(1, m + 1)) + [-k for k in range(1, m + 1)]


def tagged_delay_states(schedule: BackoffSchedule, m):
    rest = [x for x in relative_misalignments(m) if x != ZERO_S]
    return [(0, ZERO_S)] + [(s, x) for s in range(schedule.K + 1) for x in rest]


def _check_m(m):
    if m < 0 or int(m) != m:
        raise ValueError(f"m must be a non-negative integer, got {m}")


def _offsets(x):
    # start offsets of the tagged node and of its peer, in slots
    if x in (ZERO_S, ZERO_C):
        return 0, 0
    if x > 0:
        return x, 0
    return 0, -x


def _peer_rate(x, rates: AttemptRates):
    return rates.beta_d if x == ZERO_S else rates.beta_c


def misalign_transition_matrix(rates: AttemptRates, m):
    _check_m(m)
    bd, bs, bc = rates.beta_d, rates.beta_s, rates.beta_c
    d1 = 1.0 - (1.0 - bd) * (1.0 - bs)
    d2 = 1.0 - (1.0 - bc) ** 2
    if d1 <= 0 or d2 <= 0:
        raise ValueError("Attempt rates are all zero; no transmission cycle can end.")

    k = np.arange(1, m + 1)
    P = np.zeros((m + 2, m + 2))
    P[0, 0] = (bs * (1 - bd) ** (m + 1) + bd * (1 - bs) ** (m + 1)) / d1
    P[0, 1] = bs * bd / d1
    P[0, 2:] = (bs * (1 - bd) ** k * bd + bd * (1 - bs) ** k * bs) / d1

    P[1, 0] = 2 * bc * (1 - bc) ** (m + 1) / d2
    P[1, 1] = bc ** 2 / d2
    P[1, 2:] = 2 * bc ** 2 * (1 - bc) ** k / d2

    nu = 1.0 - bc
    for lead in range(1, m + 1):
        # the leading node counts alone for `lead` slots
        j = np.arange(1, lead + 1)
        lone = nu ** (j - 1) * bc
        p_j = 1.0 - nu ** (j + m - lead)
        row = nu ** lead * P[1]
        row[0] += np.sum(lone * (1.0 - p_j))
        for k_next in range(1, m + 1):
            j_next = j[j >= max(1, lead - k_next + 1)]
            row[k_next + 1] += np.sum(nu ** (j_next - 1) * bc * nu ** (j_next + k_next - lead - 1) * bc)
        P[lead + 1] = row
    return P


def _cycle_rewards(rates: AttemptRates, m, t_s, t_c, t_d):
    """Expected collisions, attempts, payload time and cycle length from every misalignment state."""
    bd, bs, bc = rates.beta_d, rates.beta_s, rates.beta_c
    d1 = 1.0 - (1.0 - bd) * (1.0 - bs)
    d2 = 1.0 - (1.0 - bc) ** 2
    q_d, q_s, q_c = (1.0 - (1.0 - b) ** m for b in (bd, bs, bc))

    size = m + 2
    ec, ea, et, ex = (np.zeros(size) for _ in range(4))

    lone_s = bs * (1 - bd)
    lone_d = bd * (1 - bs)
    ec[0] = (2 * lone_s * q_d + 2 * lone_d * q_s + 2 * bs * bd) / d1
    ea[0] = (lone_s * (1 + q_d) + lone_d * (1 + q_s) + 2 * bs * bd) / d1
    succeed = lone_s * (1 - q_d) + lone_d * (1 - q_s)
    ex[0] = (1 + (bs * bd + lone_s * q_d + lone_d * q_s) * t_c + succeed * t_s) / d1
    et[0] = succeed * t_d / d1

    lone_c = bc * (1 - bc)
    ec[1] = (4 * lone_c * q_c + 2 * bc ** 2) / d2
    ea[1] = (2 * lone_c * (1 + q_c) + 2 * bc ** 2) / d2
    ex[1] = (1 + (bc ** 2 + 2 * lone_c * q_c) * t_c + 2 * lone_c * (1 - q_c) * t_s) / d2
    et[1] = 2 * lone_c * (1 - q_c) * t_d / d2

    nu = 1.0 - bc
    for lead in range(1, m + 1):
        j = np.arange(1, lead + 1)
        first = nu ** (j - 1) * bc
        p_j = 1.0 - nu ** (j + m - lead)
        idle = nu ** lead
        ec[lead + 1] = idle * ec[1] + np.sum(first * 2 * p_j)
        ea[lead + 1] = idle * ea[1] + np.sum(first * (1 + p_j))
        ex[lead + 1] = idle * (lead + ex[1]) + np.sum(first * (j + (1 - p_j) * t_s + p_j * t_c))
        et[lead + 1] = idle * et[1] + np.sum(first * (1 - p_j) * t_d)
    return ec, ea, et, ex


def performance_delay(rates: AttemptRates, m, timing: PhyTiming):
    """
    Collision probability and throughput of two nodes with delay m.

    Returns:
    tuple: (gamma, theta)
    """
    pi = stationary_distribution(misalign_transition_matrix(rates, m))
    t_s = timing.in_slots(success_cycle_overhead(timing, delayed=True))
    t_c = timing.in_slots(collision_cycle_overhead(timing, delayed=True))
    ec, ea, et, ex = _cycle_rewards(rates, m, t_s, t_c, timing.in_slots(timing.t_d))
    return float(np.dot(pi, ec) / np.dot(pi, ea)), float(np.dot(pi, et) / np.dot(pi, ex))


def residual_outcome_distribution(b, m, beta_s):
    """
    How a frozen backoff with residual b ends when the peer just succeeded.

    Returns the row h(b, .) over relative_misalignments(m).
    """
    if b < 1:
        raise ValueError(f"Residual backoff must be >= 1, got {b}")
    return _residual_outcome_table(b, m, beta_s)[b - 1]


def _residual_outcome_table(b_max, m, beta_s):
    """h(b, .) for b = 1..b_max, one row per b."""
    _check_m(m)
    nu = 1.0 - beta_s
    b = np.arange(1, b_max + 1)[:, None]
    k = np.arange(1, m + 1)[None, :]

    base = np.zeros((b_max, 2 * m + 2))
    base[:, 0] = nu ** (b[:, 0] + m)
    base[:, 1] = nu ** (b[:, 0] - 1) * beta_s
    base[:, 2:m + 2] = nu ** (b + k - 1) * beta_s
    base[:, m + 2:] = np.where(b >= k + 1, nu ** np.maximum(b - k - 1, 0) * beta_s, 0.0)

    # the peer succeeds again before the tagged node: restart with a shorter residual
    h = base
    reinterrupt = np.zeros(2 * m + 2)
    for i in range(b_max):
        h[i] += reinterrupt
        if i + 1 - m >= 1:
            reinterrupt = beta_s * h[i - m] + nu * reinterrupt
    return h


def _interrupt_mass(h, beta):
    """Cumulative sums over L of C(L) = sum_w (1 - beta)^(w-1) beta h(L + 1 - w)."""
    C = lfilter([beta], [1.0, -(1.0 - beta)], h, axis=0)
    return np.vstack([np.zeros((1, h.shape[1])), np.cumsum(C, axis=0)])


def _segment_terms(W, x, beta_o, m):
    """Per-draw quantities of a fresh backoff l = 1..W started in relative misalignment x."""
    k_t, k_o = _offsets(x)
    l = np.arange(1, W + 1)
    L = np.maximum(l + k_t - k_o - m - 1, 0)       # peer slots that interrupt the tagged node
    nu = 1.0 - beta_o

    w = np.arange(1, W + 1)
    hit = np.power(nu, w - 1) * beta_o
    s0 = np.concatenate([[0.0], np.cumsum(hit)])[L]
    s1 = np.concatenate([[0.0], np.cumsum(w * hit)])[L]

    p_i = np.mean(s0)
    eb_r = np.mean((L + 1) * s0 - s1)
    eb_first = np.mean(np.power(nu, L) * l + s1 + (k_o + m - k_t) * s0)
    return float(p_i), float(eb_r), float(eb_first)


def interruption_probability_delay(s, x, rates: AttemptRates, schedule: BackoffSchedule, m):
    _check_m(m)
    return _segment_terms(schedule.get_window(s), x, _peer_rate(x, rates), m)[0]


def segment_means_delay(s, x, rates: AttemptRates, schedule: BackoffSchedule, m):
    """
    Returns:
    tuple: (mean residual after an interruption, mean backoff counted in the first segment)
    """
    _check_m(m)
    return _segment_terms(schedule.get_window(s), x, _peer_rate(x, rates), m)[1:]


def _geometric_mass(nu, first, last):
    """sum_{w=first}^{last} nu^(w-1) (1 - nu) over w >= 1."""
    first = max(first, 1)
    if last < first:
        return 0.0
    return nu ** (first - 1) - nu ** last


def tagged_transition_matrix_delay(rates: AttemptRates, schedule: BackoffSchedule, m):
    """Tagged-node chain observed right after its attempts, over tagged_delay_states(schedule, m)."""
    _check_m(m)
    states = tagged_delay_states(schedule, m)
    index = {state: i for i, state in enumerate(states)}
    labels = relative_misalignments(m)

    b_max = max(schedule.max_window() - 1, 1)
    h = _residual_outcome_table(b_max, m, rates.beta_s)
    mass = {rates.beta_d: _interrupt_mass(h, rates.beta_d), rates.beta_c: _interrupt_mass(h, rates.beta_c)}

    Q = np.zeros((len(states), len(states)))
    for i, (s, x) in enumerate(states):
        W = schedule.get_window(s)
        beta_o = _peer_rate(x, rates)
        nu = 1.0 - beta_o
        k_t, k_o = _offsets(x)
        s_next = schedule.next_stage(s)

        def land(label, prob):
            if label == ZERO_S:
                Q[i, index[(0, ZERO_S)]] += prob
            else:
                Q[i, index[(s_next, label)]] += prob

        # the peer stays silent until the tagged attempt is heard
        silent = W if nu == 1.0 else nu * (1.0 - nu ** W) / (1.0 - nu)
        land(ZERO_S, nu ** (k_t + m - k_o) * silent / W)

        # the peer attempts within m slots of the tagged node: collision
        for label in labels[1:]:
            shift = k_t - k_o + (0 if label == ZERO_C else label)
            land(label, _geometric_mass(nu, 1 + shift, W + shift) / W)

        last = W + k_t - k_o - m - 1
        if last >= 1:
            interrupted = mass[beta_o][last] / W
            for label, prob in zip(labels, interrupted):
                land(label, prob)
    return Q


def rate_update_delay(psi, rates: AttemptRates, schedule: BackoffSchedule, m):
    states = tagged_delay_states(schedule, m)
    psi = np.asarray(psi, dtype=float)
    _, hi = schedule.rate_box()

    stats = np.array([_segment_terms(schedule.get_window(s), x, _peer_rate(x, rates), m) for s, x in states])
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


def solve_rates_delay(schedule: BackoffSchedule, m, tol=1e-8, max_iter=1000, initial=None):
    """
    Fixed point of the two-node attempt-rate map with delay m.

    Returns:
    tuple: (AttemptRates, psi over tagged_delay_states(schedule, m))
    """
    _check_m(m)
    if initial is None:
        initial = spread_initial_points(schedule)[-1]

    def update(beta_d, beta_c):
        p_i, _, eb_s = _segment_terms(schedule.get_window(0), ZERO_S, beta_d, m)
        rates = AttemptRates(beta_d=beta_d, beta_s=(1.0 - p_i) / eb_s, beta_c=beta_c)
        psi = stationary_distribution(tagged_transition_matrix_delay(rates, schedule, m))
        return rate_update_delay(psi, rates, schedule, m), psi

    return iterate_rates(update, schedule, tol, max_iter, initial)


def analyze_delay(schedule: BackoffSchedule, timing: PhyTiming, n=2, tol=1e-8, max_iter=1000):
    """Rates from the integer delay m = floor(delta / sigma), durations from the exact delays."""
    if n != 2:
        raise ValueError("delay analysis supports n=2 only")
    rates, _ = solve_rates_delay(schedule, timing.m, tol, max_iter)
    require_converged(rates)
    gamma, theta = performance_delay(rates, timing.m, timing)
    return PerformanceReport(gamma=gamma, theta=theta, rates=rates, source='mrp-analysis')
