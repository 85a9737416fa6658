import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

from .fairness import success_run_delay
from .mrp import require_converged
from .mrp_delay import analyze_delay, performance_delay, solve_rates_delay
from .rates import PerformanceReport
from .schedule import BackoffSchedule
from .timing import PhyTiming

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepPoint:
    decision: int                           # m or minBE
    sigma_us: Optional[float] = None
    schedule: Optional[BackoffSchedule] = None
    report: Optional[PerformanceReport] = None
    feasible: bool = True
    eu1: Optional[float] = None

    @property
    def theta(self):
        return None if self.report is None else self.report.theta


def least_slot_for_m(delta_us, m):
    """Smallest integer slot duration sigma (in us) with floor(delta / sigma) = m."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if delta_us <= 0:
        raise ValueError(f"Propagation delay must be positive, got {delta_us}")
    return int(math.floor(delta_us / (m + 1))) + 1


def is_attainable(delta_us, m):
    return math.floor(delta_us / least_slot_for_m(delta_us, m)) == m


def map_points(function, arguments, workers=1):
    """Evaluate sweep points, in parallel when workers > 1; results keep the input order."""
    if workers > 1 and len(arguments) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(function, arguments))
    return [function(a) for a in arguments]


def _slot_point(arguments):
    delta_us, m, schedule, timing_template = arguments
    sigma = least_slot_for_m(delta_us, m)
    if not is_attainable(delta_us, m):
        logger.info(f"m={m} cannot be reached with delay {delta_us} us")
        return SweepPoint(decision=m, sigma_us=sigma, schedule=schedule, feasible=False)
    timing = replace(timing_template, sigma=float(sigma), delta=float(delta_us))
    return SweepPoint(decision=m, sigma_us=sigma, schedule=schedule, report=analyze_delay(schedule, timing))


def throughput_vs_m(delta_us, m_max, schedule: BackoffSchedule, timing_template: PhyTiming, workers=1) -> List[SweepPoint]:
    """Throughput of two nodes for every m = 0..m_max, each at the least slot duration that yields it."""
    arguments = [(delta_us, m, schedule, timing_template) for m in range(m_max + 1)]
    return map_points(_slot_point, arguments, workers)


def best_point(points: List[SweepPoint]):
    """Feasible point with the largest throughput; ties go to the smaller decision variable."""
    best = None
    for point in sorted(points, key=lambda p: p.decision):
        if not point.feasible or point.report is None:
            continue
        if best is None or point.theta > best.theta:
            best = point
    return best


def _minbe_point(arguments):
    min_be, p, max_be, K, m, timing, eu1_max = arguments
    schedule = BackoffSchedule.from_exponents(min_be, p, max_be, K, name=f'minBE={min_be}')
    rates, _ = solve_rates_delay(schedule, m)
    require_converged(rates)
    gamma, theta = performance_delay(rates, m, timing)
    run = success_run_delay(rates, m)
    report = PerformanceReport(gamma=gamma, theta=theta, rates=rates, source='mrp-analysis',
                               fairness={'r11': run.r11, 'eu1': run.eu1, 'capped': run.capped})
    return SweepPoint(decision=min_be, schedule=schedule, report=report, feasible=run.eu1 < eu1_max, eu1=run.eu1)


def optimize_minbe(eu1_max, minbe_range, p, max_be, K, m, timing: PhyTiming, workers=1):
    """
    Throughput-maximizing minBE among the schedules whose mean success run stays below eu1_max.

    Returns:
    tuple: (best minBE or None when no candidate is feasible, list of SweepPoint)
    """
    candidates = list(minbe_range)
    if not candidates:
        raise ValueError("minBE range is empty.")
    arguments = [(min_be, p, max_be, K, m, timing, eu1_max) for min_be in candidates]
    points = map_points(_minbe_point, arguments, workers)

    best = best_point(points)
    if best is None:
        logger.warning(f"No minBE in {candidates[0]}..{candidates[-1]} keeps EU1 below {eu1_max}")
        return None, points
    logger.info(f"Best minBE {best.decision} with throughput {best.theta:.6f}")
    return best.decision, points
