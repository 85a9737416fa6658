# __init__.py in the pydcf package

# Domain types
from .schedule import BackoffSchedule, preset_schedule, window_for_stage
from .timing import PhyTiming, success_cycle_overhead, collision_cycle_overhead
from .rates import AttemptRates, PerformanceReport
from .exceptions import ConfigError, ConvergenceError, NumericalError
from .markov import stationary_distribution

# Simulators and analyses
from .simulator import run_sim, estimate_conditional_rates, windowed_unfairness
from .bianchi import solve_bianchi_fp, analyze_bianchi
from .meanfield import integrate_ode, ode_stationary_point
from .mrp import analyze_zero_delay, solve_rates_zero_delay
from .mrp_delay import analyze_delay, solve_rates_delay
from .fairness import jain_index, success_run_delay, success_run_zero_delay
from .optimize import least_slot_for_m, optimize_minbe, throughput_vs_m

# Run orchestration
from .config import RunConfig, parse_config
from .pydcf import PyDcf

__all__ = ['BackoffSchedule', 'preset_schedule', 'window_for_stage', 'PhyTiming', 'success_cycle_overhead',
           'collision_cycle_overhead', 'AttemptRates', 'PerformanceReport', 'ConfigError', 'ConvergenceError',
           'NumericalError', 'stationary_distribution', 'run_sim', 'estimate_conditional_rates',
           'windowed_unfairness', 'solve_bianchi_fp', 'analyze_bianchi', 'integrate_ode', 'ode_stationary_point',
           'analyze_zero_delay', 'solve_rates_zero_delay', 'analyze_delay', 'solve_rates_delay', 'jain_index',
           'success_run_delay', 'success_run_zero_delay', 'least_slot_for_m', 'optimize_minbe', 'throughput_vs_m',
           'RunConfig', 'parse_config', 'PyDcf']
