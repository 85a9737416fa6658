import csv
import logging
import math
import os
from typing import List

import numpy as np

from .bianchi import solve_bianchi_fp
from .config import RunConfig
from .exceptions import NumericalError
from .fairness import jain_index, success_chain_divergence, success_run_delay, success_run_zero_delay
from .meanfield import integrate_ode, meanfield_gamma, ode_stationary_point, stage_rates
from .mrp import analyze_zero_delay, require_converged, solve_rates_zero_delay
from .mrp_delay import analyze_delay, solve_rates_delay
from .optimize import best_point, map_points, optimize_minbe, throughput_vs_m
from .schedule import BackoffSchedule
from .simulator import estimate_conditional_rates, run_sim, windowed_unfairness, write_trace_csv

logger = logging.getLogger(__name__)


def fmt_prob(value):
    """Six decimals; empty for quantities that are unavailable."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return f"{value:.6f}"


def fmt_us(value):
    return int(round(value))


def relative_error(estimate, reference):
    if estimate is None or reference is None or reference == 0 or math.isnan(reference):
        return None
    return (estimate - reference) / reference


def analyze(schedule: BackoffSchedule, timing, n, tol=1e-8, max_iter=1000):
    """Zero-delay analysis for m = 0, the two-node delay analysis otherwise."""
    if timing.m == 0:
        return analyze_zero_delay(schedule, n, timing, tol, max_iter)
    return analyze_delay(schedule, timing, n, tol, max_iter)


def _compare_point(arguments):
    schedule, timing, n, cycles, seed, tol, max_iter, variant = arguments
    stats = run_sim(schedule, timing, n, cycles, seed)
    report = analyze(schedule, timing, n, tol, max_iter)
    _, gamma_fp = solve_bianchi_fp(schedule, n, variant=variant)
    return n, stats.gamma(), stats.theta(), report, gamma_fp, meanfield_gamma(schedule)


def _success_run_point(arguments):
    min_be, p, max_be, K, n, m, tol, max_iter = arguments
    schedule = BackoffSchedule.from_exponents(min_be, p, max_be, K, name=f'minBE={min_be}')
    if m == 0:
        rates, _ = solve_rates_zero_delay(schedule, n, tol, max_iter)
        return min_be, success_run_zero_delay(require_converged(rates), n)
    rates, _ = solve_rates_delay(schedule, m, tol, max_iter)
    require_converged(rates)
    return min_be, success_run_delay(rates, m)


class PyDcf:
    """Runs one configured mode and writes its CSV tables into config.out."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.written: List[str] = []

    def save_csv(self, name, header, rows):
        os.makedirs(self.config.out, exist_ok=True)
        path = os.path.join(self.config.out, name)
        with open(path, mode='w', newline='') as file:
            writer = csv.writer(file)
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
        self.written.append(path)
        logger.info(f"{len(rows)} rows written to {path}")
        print(f"Data saved to {path}")
        return path

    def run(self):
        modes = {
            'simulate': self.simulate,
            'analyze-zero': self.analyze_zero,
            'analyze-delay': self.analyze_delay,
            'bianchi': self.bianchi,
            'meanfield': self.meanfield,
            'fairness': self.fairness,
            'sweep-slot': self.sweep_slot,
            'sweep-minbe': self.sweep_minbe,
            'compare': self.compare,
        }
        logger.info(f"Running {self.config.mode} with {self.config.schedule}")
        modes[self.config.mode]()
        return self.written

    def simulate(self):
        c = self.config
        rows = []
        for n in c.n_values:
            stats = run_sim(c.schedule, c.timing, n, c.cycles, c.seed, keep_trace=c.trace)
            rates = estimate_conditional_rates(stats)
            logger.info(f"{stats}")
            rows.append([n, fmt_prob(stats.gamma()), fmt_prob(stats.theta()),
                         fmt_prob(rates.beta_d), fmt_prob(rates.beta_s), fmt_prob(rates.beta_c), fmt_prob(rates.beta)])

            if c.trace:
                os.makedirs(c.out, exist_ok=True)
                path = os.path.join(c.out, c.output_name(f"trace_n{n}"))
                write_trace_csv(stats.trace, c.timing, path)
                self.written.append(path)
                print(f"Data saved to {path}")

                unfairness = windowed_unfairness(stats.trace, n, c.window)
                short_term = [[w, i, fmt_prob(float(g))]
                              for w, window in enumerate(unfairness.series)
                              for i, g in enumerate(window) if not np.isnan(g)]
                logger.info(f"n={n}: long-run collision probability {unfairness.mean:.6f}, "
                            f"short-term spread {np.nanstd(unfairness.series):.6f}")
                self.save_csv(c.output_name(f"unfairness_n{n}"), ['window', 'node', 'gamma'], short_term)

        self.save_csv(c.output_name(), ['n', 'gamma', 'theta', 'beta_d', 'beta_s', 'beta_c', 'beta'], rows)

    def analyze_zero(self):
        c = self.config
        rows = []
        for n in c.n_values:
            report = analyze_zero_delay(c.schedule, n, c.timing, c.tol, c.max_iter)
            r = report.rates
            rows.append([n, fmt_prob(report.gamma), fmt_prob(report.theta),
                         fmt_prob(r.beta_d), fmt_prob(r.beta_s), fmt_prob(r.beta_c), fmt_prob(r.beta)])
        self.save_csv(c.output_name(), ['n', 'gamma', 'theta', 'beta_d', 'beta_s', 'beta_c', 'beta'], rows)

    def analyze_delay(self):
        c = self.config
        report = analyze_delay(c.schedule, c.timing, c.n, c.tol, c.max_iter)
        r = report.rates
        row = [c.m, fmt_us(c.timing.delta), fmt_us(c.timing.sigma), fmt_prob(report.gamma), fmt_prob(report.theta),
               fmt_prob(r.beta_d), fmt_prob(r.beta_s), fmt_prob(r.beta_c), fmt_prob(r.beta)]
        self.save_csv(c.output_name(),
                      ['m', 'delta_us', 'sigma_us', 'gamma', 'theta', 'beta_d', 'beta_s', 'beta_c', 'beta'], [row])

    def bianchi(self):
        c = self.config
        rows = []
        for n in c.n_values:
            _, gamma = solve_bianchi_fp(c.schedule, n, variant=c.variant)
            rows.append([n, fmt_prob(gamma)])
        self.save_csv(c.output_name(), ['n', 'gamma_fp'], rows)

    def meanfield(self):
        c = self.config
        p = stage_rates(c.schedule)
        _, beta, gamma = ode_stationary_point(p)
        logger.info(f"Mean-field stationary point: beta {beta:.6f}, gamma {gamma:.6f}")

        # every node starts a fresh packet at stage 0
        mu0 = np.zeros(len(p))
        mu0[0] = 1.0
        trajectory = integrate_ode(mu0, p, c.t_end)
        rows = [[f"{t:.6f}", f"{d:.6e}"] for t, d in zip(trajectory.t, trajectory.norm_diff)]
        self.save_csv(c.output_name(), ['t', 'norm_diff'], rows)

    def fairness(self):
        c = self.config
        n, m = c.n, c.m
        if m == 0:
            rates, _ = solve_rates_zero_delay(c.schedule, n, c.tol, c.max_iter)
            require_converged(rates)
            rows = [[L, fmt_prob(jain_index(rates, n, L))] for L in c.L]
            self.save_csv(c.output_name('jain'), ['L', 'J'], rows)
        else:
            logger.info(f"Jain index needs m=0; skipping it for m={m}")

        arguments = [(min_be, c.p, c.max_be, c.K, n, m, c.tol, c.max_iter) for min_be in c.minbe_range]
        rows = []
        for min_be, run in map_points(_success_run_point, arguments, c.workers):
            if m == 0:
                logger.info(f"minBE={min_be}: success-chain divergence {success_chain_divergence(run.r11, n):.6f}")
            rows.append([min_be, fmt_prob(run.r11), fmt_prob(run.eu1)])
        self.save_csv(c.output_name(), ['param', 'r11', 'EU1'], rows)

    def sweep_slot(self):
        c = self.config
        points = throughput_vs_m(c.timing.delta, c.m_max, c.schedule, c.timing, c.workers)
        rows = [[pt.decision, pt.sigma_us, fmt_prob(pt.theta)] for pt in points if pt.feasible]
        best = best_point(points)
        if best is not None:
            print(f"Best m {best.decision} at slot {best.sigma_us} us, throughput {best.theta:.6f}")
        self.save_csv(c.output_name(), ['m', 'sigma_us', 'theta'], rows)

    def sweep_minbe(self):
        c = self.config
        best, points = optimize_minbe(c.eu1_max, c.minbe_range, c.p, c.max_be, c.K, c.m, c.timing, c.workers)
        rows = [[pt.decision, fmt_prob(pt.eu1), int(pt.feasible), fmt_prob(pt.theta)] for pt in points]
        self.save_csv(c.output_name(), ['minBE', 'EU1', 'feasible', 'theta'], rows)
        if best is None:
            raise NumericalError(f"No minBE keeps EU1 below {c.eu1_max}")
        print(f"Best minBE {best}")

    def compare(self):
        c = self.config
        arguments = [(c.schedule, c.timing, n, c.cycles, c.seed, c.tol, c.max_iter, c.variant) for n in c.n_values]
        rows = []
        for n, gamma_sim, theta_sim, report, gamma_fp, gamma_mf in map_points(_compare_point, arguments, c.workers):
            r = report.rates
            rows.append([n, fmt_prob(gamma_sim), fmt_prob(report.gamma), fmt_prob(gamma_fp), fmt_prob(gamma_mf),
                         fmt_prob(theta_sim), fmt_prob(report.theta),
                         fmt_prob(r.beta_d), fmt_prob(r.beta_s), fmt_prob(r.beta_c), fmt_prob(r.beta),
                         fmt_prob(relative_error(report.gamma, gamma_sim)),
                         fmt_prob(relative_error(report.theta, theta_sim))])
        self.save_csv(c.output_name(),
                      ['n', 'gamma_sim', 'gamma_mrp', 'gamma_bianchi', 'gamma_meanfield', 'theta_sim', 'theta_mrp',
                       'beta_d', 'beta_s', 'beta_c', 'beta', 'gamma_rel_err', 'theta_rel_err'], rows)
