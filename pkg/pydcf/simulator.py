import csv
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .rates import AttemptRates
from .schedule import BackoffSchedule
from .timing import PhyTiming, collision_cycle_overhead, success_cycle_overhead

logger = logging.getLogger(__name__)

SUCCESS = 'success'
COLLISION = 'collision'

# contexts of a backoff segment: after an interruption, own success, own collision
CONTEXTS = ('d', 's', 'c')
_NO_CONTEXT = -1


class NodeState(NamedTuple):
    S: int      # backoff stage
    B: int      # residual backoff in slots
    Z: int      # misalignment in slots


@dataclass(frozen=True)
class SystemState:
    stages: Tuple[int, ...]
    backoffs: Tuple[int, ...]
    misalignments: Tuple[int, ...]
    idle: int = 0       # slots counted since the last activity (slot-level stepper only)

    @property
    def n(self):
        return len(self.stages)

    def node(self, i):
        return NodeState(self.stages[i], self.backoffs[i], self.misalignments[i])


@dataclass(frozen=True)
class CycleOutcome:
    kind: str
    attackers: Tuple[int, ...]
    winner: Optional[int]
    idle_slots: int                 # backoff slots elapsed until the first attempt
    misalignment: int = 0           # common misalignment handed out after a collision
    counted: Tuple[int, ...] = ()   # backoff slots each node counted in this cycle

    def duration_us(self, timing: PhyTiming, delayed=True):
        if self.kind == SUCCESS:
            return self.idle_slots * timing.sigma + success_cycle_overhead(timing, delayed)
        return self.idle_slots * timing.sigma + collision_cycle_overhead(timing, delayed)


def make_node_streams(seed, n):
    """One independent generator per node, spawned from the run seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _draw(rng, schedule, stage):
    return int(rng.integers(1, schedule.get_window(stage) + 1))


def initial_state(schedule: BackoffSchedule, rngs):
    n = len(rngs)
    return SystemState(stages=(0,) * n,
                       backoffs=tuple(_draw(rng, schedule, 0) for rng in rngs),
                       misalignments=(0,) * n)


def advance_cycle_with_delay(state: SystemState, schedule: BackoffSchedule, m, rngs):
    """
    Advance the system by one transmission cycle when the propagation delay
    spans m backoff slots.

    Every node whose attempt instant B + Z falls within m slots of the
    earliest one attacks. The others freeze with residual B + Z - (min + m).
    """
    if m < 0:
        raise ValueError(f"Misalignment bound must be >= 0, got {m}")

    n = state.n
    starts = [b + z for b, z in zip(state.backoffs, state.misalignments)]
    first = min(starts)
    horizon = first + m
    attackers = tuple(i for i in range(n) if starts[i] <= horizon)

    stages = list(state.stages)
    backoffs = list(state.backoffs)
    counted = [0] * n
    for i in range(n):
        if starts[i] <= horizon:
            counted[i] = state.backoffs[i]
        else:
            counted[i] = horizon - state.misalignments[i]
            backoffs[i] = starts[i] - horizon

    if len(attackers) == 1:
        winner = attackers[0]
        stages[winner] = 0
        backoffs[winner] = _draw(rngs[winner], schedule, 0)
        new_state = SystemState(tuple(stages), tuple(backoffs), (0,) * n)
        return new_state, CycleOutcome(SUCCESS, attackers, winner, first, 0, tuple(counted))

    for i in attackers:
        stages[i] = schedule.next_stage(stages[i])
        backoffs[i] = _draw(rngs[i], schedule, stages[i])

    # the last attacker to start is the reference; everyone else lags by the gap
    # between the two latest attempt instants
    instants = sorted(starts[i] for i in attackers)
    z_plus = instants[-1] - instants[-2]
    last = max(attackers, key=lambda i: starts[i])
    misalignments = [z_plus] * n
    misalignments[last] = 0

    new_state = SystemState(tuple(stages), tuple(backoffs), tuple(misalignments))
    return new_state, CycleOutcome(COLLISION, attackers, None, first, z_plus, tuple(counted))


def advance_cycle_zero_delay(state: SystemState, schedule: BackoffSchedule, rngs):
    """One transmission cycle without propagation delay: the nodes with the least residual backoff attempt."""
    return advance_cycle_with_delay(state, schedule, 0, rngs)


def slot_level_reference_step(state: SystemState, schedule: BackoffSchedule, rngs):
    """
    Advance the slot-level chain by one backoff slot (no propagation delay).

    Returns the new state and the cycle outcome when the slot ends with an
    attempt, otherwise None.
    """
    if any(state.misalignments):
        raise ValueError("The slot-level reference stepper supports m=0 only.")

    backoffs = [b - 1 for b in state.backoffs]
    idle = state.idle + 1
    attackers = tuple(i for i, b in enumerate(backoffs) if b == 0)
    if not attackers:
        return SystemState(state.stages, tuple(backoffs), state.misalignments, idle), None

    stages = list(state.stages)
    counted = tuple([idle] * state.n)
    if len(attackers) == 1:
        winner = attackers[0]
        stages[winner] = 0
        backoffs[winner] = _draw(rngs[winner], schedule, 0)
        outcome = CycleOutcome(SUCCESS, attackers, winner, idle, 0, counted)
    else:
        for i in attackers:
            stages[i] = schedule.next_stage(stages[i])
            backoffs[i] = _draw(rngs[i], schedule, stages[i])
        outcome = CycleOutcome(COLLISION, attackers, None, idle, 0, counted)

    return SystemState(tuple(stages), tuple(backoffs), state.misalignments, 0), outcome


class SimStats:
    def __init__(self, n, timing: PhyTiming):
        self.n = n
        self.timing = timing
        self.cycles = 0
        self.attempts = np.zeros(n, dtype=np.int64)
        self.collisions = np.zeros(n, dtype=np.int64)
        self.successes = np.zeros(n, dtype=np.int64)
        self.counted_slots = np.zeros(n, dtype=np.int64)
        self.ctx_attempts = np.zeros((n, len(CONTEXTS)), dtype=np.int64)
        self.ctx_slots = np.zeros((n, len(CONTEXTS)), dtype=np.int64)
        self.elapsed_us = 0.0
        self.success_time_us = 0.0
        self.winners: List[int] = []
        self.trace: Optional[List[CycleOutcome]] = None

    def node_gamma(self):
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(self.attempts > 0, self.collisions / np.maximum(self.attempts, 1), np.nan)

    def gamma(self):
        """Mean over nodes of the per-node collision probability C_i / A_i."""
        gammas = self.node_gamma()
        if np.all(np.isnan(gammas)):
            return float('nan')
        return float(np.nanmean(gammas))

    def theta(self):
        if self.elapsed_us <= 0:
            return 0.0
        return self.success_time_us / self.elapsed_us

    def __str__(self):
        return f"SimStats: n {self.n}, cycles {self.cycles}, gamma {self.gamma():.6f}, theta {self.theta():.6f}"


def run_sim(schedule: BackoffSchedule, timing: PhyTiming, n, cycles, seed, keep_trace=False):
    """
    Run the exact cycle-level simulator.

    Parameters:
    schedule (BackoffSchedule): Contention windows per stage.
    timing (PhyTiming): Durations; the misalignment bound is m = floor(delta / sigma).
    n (int): Number of saturated nodes.
    cycles (int): Number of transmission cycles.
    seed (int): Seed for the per-node random streams.
    keep_trace (bool): Keep every CycleOutcome for trace export and windowed diagnostics.

    Returns:
    SimStats: Accumulated counters.
    """
    if n < 1:
        raise ValueError(f"Number of nodes must be >= 1, got {n}")
    if cycles < 1:
        raise ValueError(f"Number of cycles must be >= 1, got {cycles}")

    m = timing.m
    rngs = make_node_streams(seed, n)
    state = initial_state(schedule, rngs)
    stats = SimStats(n, timing)
    if keep_trace:
        stats.trace = []

    context = np.full(n, _NO_CONTEXT)
    attempted = np.zeros(n, dtype=bool)
    counted = np.zeros(n, dtype=np.int64)
    progress_step = max(cycles // 10, 1)
    d_idx, s_idx, c_idx = (CONTEXTS.index(x) for x in ('d', 's', 'c'))

    for u in range(cycles):
        state, outcome = advance_cycle_with_delay(state, schedule, m, rngs)

        attempted[:] = False
        attempted[list(outcome.attackers)] = True
        counted[:] = outcome.counted

        tallied = context != _NO_CONTEXT
        rows = np.nonzero(tallied)[0]
        stats.ctx_slots[rows, context[rows]] += counted[rows]
        stats.ctx_attempts[rows, context[rows]] += attempted[rows]

        stats.attempts += attempted
        stats.counted_slots += counted
        stats.elapsed_us += outcome.duration_us(timing)

        if outcome.kind == SUCCESS:
            stats.successes[outcome.winner] += 1
            stats.success_time_us += timing.t_d
            stats.winners.append(outcome.winner)
            context[:] = d_idx
            context[outcome.winner] = s_idx
        else:
            stats.collisions += attempted
            stats.winners.append(-1)
            context[:] = d_idx
            context[attempted] = c_idx

        if keep_trace:
            stats.trace.append(outcome)
        if (u + 1) % progress_step == 0:
            logger.debug(f"simulated {u + 1}/{cycles} cycles")

    stats.cycles = cycles
    return stats


def estimate_conditional_rates(stats: SimStats):
    """
    Attempt rates measured by the simulator: attempts in each context over the
    backoff slots counted in that context, averaged over nodes. A rate with no
    samples is None.
    """
    def averaged(attempts, slots):
        mask = slots > 0
        if not np.any(mask):
            return None
        return float(np.mean(attempts[mask] / slots[mask]))

    beta_d, beta_s, beta_c = (averaged(stats.ctx_attempts[:, k], stats.ctx_slots[:, k])
                              for k in range(len(CONTEXTS)))
    beta = averaged(stats.attempts, stats.counted_slots)
    return AttemptRates(beta_d=beta_d, beta_s=beta_s, beta_c=beta_c, beta=beta,
                        iterations=stats.cycles, beta_d_defined=beta_d is not None)


def success_sequence(stats: SimStats, last=None):
    """Winning node of each successful cycle, oldest first."""
    winners = np.asarray(stats.winners, dtype=np.int64)
    winners = winners[winners >= 0]
    if last is not None:
        winners = winners[-last:]
    return winners


class UnfairnessSeries(NamedTuple):
    series: np.ndarray      # windows x nodes, nan where a node did not attempt
    mean: float             # long-run (1/n) sum C_i / A_i


def windowed_unfairness(trace: List[CycleOutcome], n, window):
    """Short-term collision probability of every node over consecutive windows of cycles."""
    if len(trace) == 0:
        raise ValueError("Trace is empty.")
    if window < 1:
        raise ValueError(f"Window must be >= 1, got {window}")

    attempts = np.zeros((len(trace), n), dtype=np.int64)
    collisions = np.zeros((len(trace), n), dtype=np.int64)
    for u, outcome in enumerate(trace):
        attackers = list(outcome.attackers)
        attempts[u, attackers] = 1
        if outcome.kind == COLLISION:
            collisions[u, attackers] = 1

    starts = np.arange(0, len(trace), window)
    window_attempts = np.add.reduceat(attempts, starts, axis=0)
    window_collisions = np.add.reduceat(collisions, starts, axis=0)
    with np.errstate(invalid='ignore', divide='ignore'):
        series = np.where(window_attempts > 0, window_collisions / np.maximum(window_attempts, 1), np.nan)

    total_attempts = attempts.sum(axis=0)
    total_collisions = collisions.sum(axis=0)
    seen = total_attempts > 0
    mean = float(np.mean(total_collisions[seen] / total_attempts[seen])) if np.any(seen) else float('nan')
    return UnfairnessSeries(series, mean)


def write_trace_csv(trace: List[CycleOutcome], timing: PhyTiming, path):
    with open(path, mode='w', newline='') as file:
        writer = csv.writer(file)
        writer.writerow(['cycle', 'kind', 'winner', 'attackers', 'duration_us', 'misalignment'])
        for u, outcome in enumerate(trace):
            writer.writerow([u, outcome.kind,
                             '' if outcome.winner is None else outcome.winner,
                             ';'.join(str(i) for i in outcome.attackers),
                             int(round(outcome.duration_us(timing))),
                             outcome.misalignment])
    logger.info(f"Trace written to {path}")
