import numpy as np
import pytest
from scipy import sparse
from scipy.special import comb

from pydcf import AttemptRates, BackoffSchedule, ConvergenceError, NumericalError, PhyTiming, run_sim
from pydcf.mrp import (AuxChain, analyze_zero_delay, aux_transition_matrix, censored_tagged_matrix,
                       cycle_transition_matrix, find_fixed_points_zero_delay, first_segment_backoff_mean,
                       interruption_probability, iterate_rates, joint_attempt_prob, performance_zero_delay,
                       rate_update, require_converged, residual_backoff_mean, solve_rates_zero_delay,
                       spread_initial_points, tagged_distribution, tagged_states, tagged_stationary)
from pydcf.schedule import preset_schedule

HALF = AttemptRates(0.5, 0.5, 0.5)


def random_rates(rng):
    return AttemptRates(*(float(v) for v in rng.uniform(0.05, 1.0, 3)))


def test_joint_attempt_probability():
    assert joint_attempt_prob(1, 1, HALF, 2) == pytest.approx(0.5)
    ones = AttemptRates(1.0, 1.0, 1.0)
    for n_a in range(1, 5):
        assert joint_attempt_prob(n_a, 4, ones, 4) == pytest.approx(1.0)
        assert joint_attempt_prob(n_a, 2, ones, 4) == pytest.approx(0.0)
    rates = AttemptRates(0.2, 0.7, 0.4)
    for n_a in range(1, 6):
        assert sum(joint_attempt_prob(n_a, k, rates, 5) for k in range(6)) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        joint_attempt_prob(0, 1, rates, 5)


def test_cycle_matrix_hand_values():
    P = cycle_transition_matrix(HALF, 2)
    assert P[0, 0] == pytest.approx(2 / 3)
    assert P[0, 1] == pytest.approx(1 / 3)


def test_cycle_matrix_equal_rates_rows_are_identical():
    beta, n = 0.3, 4
    P = cycle_transition_matrix(AttemptRates(beta, beta, beta), n)
    k = np.arange(1, n + 1)
    expected = comb(n, k) * beta ** k * (1 - beta) ** (n - k) / (1 - (1 - beta) ** n)
    for row in P:
        assert row == pytest.approx(expected, abs=1e-14)


def test_cycle_matrix_row_sums():
    rng = np.random.default_rng(1)
    for _ in range(20):
        P = cycle_transition_matrix(random_rates(rng), 6)
        assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-12


def test_cycle_matrix_rejects_zero_rates():
    with pytest.raises(ValueError):
        cycle_transition_matrix(AttemptRates(0.0, 0.0, 0.0), 3)


def test_equal_rates_collapse_to_fixed_point_formula():
    timing = PhyTiming()
    for n in range(2, 11):
        for beta in np.arange(0.05, 0.951, 0.05):
            gamma, _ = performance_zero_delay(AttemptRates(beta, beta, beta), n, timing)
            assert abs(gamma - (1 - (1 - beta) ** (n - 1))) <= 1e-12


def test_lone_winner_repeats():
    gamma, _ = performance_zero_delay(AttemptRates(1e-6, 1.0, 1e-6), 3, PhyTiming())
    assert gamma < 1e-4


def test_no_payload_no_throughput():
    _, theta = performance_zero_delay(AttemptRates(0.2, 0.5, 0.1), 4, PhyTiming(t_d=0))
    assert theta == 0.0


def test_aux_chain_with_unit_window():
    rates = AttemptRates(0.3, 0.6, 0.4)
    chain = aux_transition_matrix(rates, BackoffSchedule([1]), 2)
    assert chain.states == [(0, 1, 0), (0, 2, 0)]
    Q = chain.Q.toarray()
    assert Q[0, 0] == pytest.approx(0.7)
    assert Q[0, 1] == pytest.approx(0.3)


def test_aux_chain_structure():
    rng = np.random.default_rng(2)
    schedule = BackoffSchedule([2, 4, 8])
    n = 3
    for _ in range(5):
        rates = random_rates(rng)
        chain = aux_transition_matrix(rates, schedule, n)
        Q = chain.Q.toarray()
        assert np.max(np.abs(Q.sum(axis=1) - 1.0)) < 1e-12
        assert len(chain.states) == (n - 1) * sum(w - 1 for w in schedule.windows) + (n - 1) * 3 + 1

        index = {state: i for i, state in enumerate(chain.states)}
        for (s, y, b), i in index.items():
            if b == 0:
                continue
            beta_x = rates.x_rate(y)
            expected = ((1 - rates.beta_d) ** (n - 1 - y) * (1 - beta_x) ** y) ** b
            assert Q[i, index[(0, 1, 0)]] == pytest.approx(expected)


def test_tagged_stationary_single_state():
    chain = AuxChain(sparse.csr_matrix(np.ones((1, 1))), [(0, 1, 0)], 1)
    assert tagged_stationary(chain) == pytest.approx([1.0])


def test_censored_chain_matches_aux_chain():
    rng = np.random.default_rng(3)
    for schedule, n in ((BackoffSchedule([2, 4, 8]), 3), (preset_schedule('ts4'), 4), (BackoffSchedule([5]), 2)):
        for _ in range(3):
            rates = random_rates(rng)
            P = censored_tagged_matrix(rates, schedule, n)
            assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-12
            psi_aux = tagged_distribution(rates, schedule, n, chain='aux')
            psi_censored = tagged_distribution(rates, schedule, n, chain='censored')
            assert psi_censored.sum() == pytest.approx(1.0)
            assert psi_censored == pytest.approx(psi_aux, abs=1e-9)
    with pytest.raises(ValueError):
        tagged_distribution(HALF, schedule, 2, chain='dense')


def simulate_tagged(rates, schedule, n, attempts, seed):
    """Tagged node whose n - 1 peers attempt independently per slot at their context rates."""
    rng = np.random.default_rng(seed)
    states = tagged_states(schedule, n)
    counts = dict.fromkeys(states, 0)
    s, n_a = 0, 1
    for _ in range(attempts):
        # peers: n_a - 1 collided with the tagged node, the rest were interrupted
        group, group_rate = n_a - 1, rates.beta_c
        residual = int(rng.integers(1, schedule.get_window(s) + 1))
        while True:
            y = rng.binomial(group, group_rate) + rng.binomial(n - 1 - group, rates.beta_d)
            residual -= 1
            if residual == 0:
                break
            if y > 0:
                group, group_rate = y, rates.x_rate(y)
        if y == 0:
            s, n_a = 0, 1
        else:
            s, n_a = schedule.next_stage(s), y + 1
        counts[(s, n_a)] += 1
    return np.array([counts[state] for state in states]) / attempts


@pytest.mark.parametrize('rates, n', [(HALF, 2), (AttemptRates(0.3, 0.6, 0.4), 3)])
def test_tagged_law_matches_approximated_process(rates, n):
    schedule = BackoffSchedule([2, 4])
    psi = tagged_distribution(rates, schedule, n)
    empirical = simulate_tagged(rates, schedule, n, 100_000, seed=5)
    assert empirical == pytest.approx(psi, abs=0.01)


def test_interruption_probability():
    assert interruption_probability(0, 2, HALF, BackoffSchedule([1]), 2) == 0.0
    ones = AttemptRates(1.0, 1.0, 1.0)
    assert interruption_probability(0, 2, ones, BackoffSchedule([2]), 2) == pytest.approx(0.5)

    schedule = BackoffSchedule([2, 4, 8, 16, 32])
    rates = AttemptRates(0.2, 0.5, 0.3)
    values = [interruption_probability(s, 2, rates, schedule, 4) for s in range(5)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_residual_backoff_mean():
    assert residual_backoff_mean(0, 2, HALF, BackoffSchedule([1]), 2) == 0.0
    ones = AttemptRates(1.0, 1.0, 1.0)
    assert residual_backoff_mean(0, 2, ones, BackoffSchedule([2]), 2) == pytest.approx(0.5)

    schedule = BackoffSchedule([2, 5, 9, 32])
    for beta in (0.05, 0.3, 0.9):
        rates = AttemptRates(beta, 0.5, beta / 2)
        for s in range(4):
            for n_a in (1, 2, 3):
                p_i = interruption_probability(s, n_a, rates, schedule, 3)
                assert residual_backoff_mean(s, n_a, rates, schedule, 3) <= (schedule.get_window(s) - 1) * p_i + 1e-12


def test_first_segment_backoff_mean():
    assert first_segment_backoff_mean((0, 1), HALF, BackoffSchedule([1]), 2) == pytest.approx(1.0)
    silent = AttemptRates(0.0, 0.5, 0.5)
    assert first_segment_backoff_mean((0, 1), silent, BackoffSchedule([16]), 3) == pytest.approx(8.5)

    schedule = BackoffSchedule([2, 7, 30])
    rates = AttemptRates(0.4, 0.8, 0.2)
    for s in range(3):
        for n_a in (1, 2, 3):
            assert first_segment_backoff_mean((s, n_a), rates, schedule, 3) <= schedule.get_mean(s) + 1e-12


def test_rate_update_hand_example():
    schedule = BackoffSchedule([2])
    psi = tagged_distribution(HALF, schedule, 2)
    assert interruption_probability(0, 1, HALF, schedule, 2) == pytest.approx(0.25)
    assert first_segment_backoff_mean((0, 1), HALF, schedule, 2) == pytest.approx(1.25)
    assert rate_update(psi, HALF, schedule, 2).beta_s == pytest.approx(0.6)


def test_rate_update_unit_first_window():
    schedule = BackoffSchedule([1, 16])
    rates = AttemptRates(0.3, 0.5, 0.2)
    psi = tagged_distribution(rates, schedule, 3)
    assert rate_update(psi, rates, schedule, 3).beta_s == 1.0


def test_rate_update_without_interruptions():
    schedule = BackoffSchedule([1])
    psi = tagged_distribution(HALF, schedule, 2)
    updated = rate_update(psi, HALF, schedule, 2)
    assert not updated.beta_d_defined
    assert updated.beta_d == 1.0


@pytest.mark.parametrize('name, n', [('ts2', 3), ('ts3', 2), ('ts4', 3), ('80211b', 3), ('example4', 2)])
def test_rate_update_keeps_the_box(name, n):
    schedule = preset_schedule(name)
    lo, hi = schedule.rate_box()
    grid = np.linspace(lo, hi, 5)
    for beta_d in grid:
        for beta_c in grid:
            rates = AttemptRates(beta_d, 0.5, beta_c)
            updated = rate_update(tagged_distribution(rates, schedule, n), rates, schedule, n)
            for value in (updated.beta_d, updated.beta_s, updated.beta_c):
                assert lo - 1e-12 <= value <= hi + 1e-12


def test_solver_rejects_single_node():
    with pytest.raises(ValueError):
        solve_rates_zero_delay(preset_schedule('ts3'), 1)


@pytest.mark.parametrize('name, n', [('ts2', 3), ('ts3', 2), ('ts3', 6), ('ts4', 4), ('80211b', 5), ('example4', 2)])
def test_fixed_point_is_unique_from_spread_starts(name, n):
    schedule = preset_schedule(name)
    lo, hi = schedule.rate_box()
    solutions = [solve_rates_zero_delay(schedule, n, tol=1e-10, max_iter=5000, initial=start)[0]
                 for start in spread_initial_points(schedule)]
    for rates in solutions:
        assert rates.converged
        assert lo <= rates.beta_d <= hi and lo <= rates.beta_c <= hi
    for rates in solutions[1:]:
        assert abs(rates.beta_d - solutions[0].beta_d) < 1e-8
        assert abs(rates.beta_c - solutions[0].beta_c) < 1e-8
    assert len(find_fixed_points_zero_delay(schedule, n)) == 1


def test_both_chains_give_the_same_fixed_point():
    schedule = BackoffSchedule([2, 8, 32])
    censored, _ = solve_rates_zero_delay(schedule, 3, tol=1e-11)
    aux, _ = solve_rates_zero_delay(schedule, 3, tol=1e-11, chain='aux')
    assert censored.converged and aux.converged
    assert aux.beta_d == pytest.approx(censored.beta_d, abs=1e-9)
    assert aux.beta_c == pytest.approx(censored.beta_c, abs=1e-9)


def test_iteration_limit_is_reported_not_raised():
    rates, psi = solve_rates_zero_delay(preset_schedule('ts3'), 4, tol=0.0, max_iter=2)
    assert not rates.converged
    assert rates.iterations == 2
    assert psi.sum() == pytest.approx(1.0)


def steep_map(beta_d, beta_c):
    # fixed point at beta_c = 0.6, slope -4.6 around it
    new_c = 0.6 - 4.6 * (beta_c - 0.6)
    return AttemptRates(0.5, 0.5, new_c, beta=0.5), np.ones(1)


def test_damping_tames_a_steep_map():
    rates, _ = iterate_rates(steep_map, BackoffSchedule([19]), 1e-10, 1000, (0.5, 0.5))
    assert rates.converged
    assert rates.iterations < 200
    assert rates.beta_c == pytest.approx(0.6, abs=1e-9)
    assert rates.beta_d == pytest.approx(0.5)


def test_root_finder_takes_over_after_the_iteration_limit():
    rates, _ = iterate_rates(steep_map, BackoffSchedule([19]), 1e-10, 3, (0.5, 0.5))
    assert rates.converged
    assert rates.iterations > 3
    assert rates.beta_c == pytest.approx(0.6, abs=1e-9)


def test_analysis_refuses_unconverged_rates():
    with pytest.raises(ConvergenceError):
        analyze_zero_delay(preset_schedule('ts3'), 4, PhyTiming(), tol=0.0, max_iter=2)
    with pytest.raises(NumericalError):
        require_converged(AttemptRates(0.2, 0.5, 0.3, converged=False))
    rates = AttemptRates(0.2, 0.5, 0.3)
    assert require_converged(rates) is rates


def test_short_first_stage_favours_the_winner():
    rates, psi = solve_rates_zero_delay(preset_schedule('ts3'), 2)
    assert rates.converged
    assert rates.beta_s > 5 * rates.beta_d
    assert psi.sum() == pytest.approx(1.0)
    assert 0 < rates.beta <= 1


def test_report():
    report = analyze_zero_delay(preset_schedule('80211b'), 5, PhyTiming())
    assert report.source == 'mrp-analysis'
    assert 0 < report.gamma < 1
    assert 0 < report.theta < 1


def test_example4_collision_probability():
    report = analyze_zero_delay(preset_schedule('example4'), 2, PhyTiming())
    assert report.rates.converged
    assert report.gamma == pytest.approx(0.7754, abs=0.002)
    assert report.rates.beta_s > report.rates.beta_d


@pytest.mark.slow
@pytest.mark.parametrize('name', ['ts2', 'ts3', 'ts4'])
def test_agrees_with_simulation(name):
    schedule = preset_schedule(name)
    timing = PhyTiming()
    for n in (2, 5, 10):
        stats = run_sim(schedule, timing, n, 500_000, seed=n)
        report = analyze_zero_delay(schedule, n, timing)
        assert report.gamma == pytest.approx(stats.gamma(), rel=0.05)
        assert report.theta == pytest.approx(stats.theta(), rel=0.05)


@pytest.mark.slow
def test_geometric_schedule_agrees_with_simulation():
    schedule = preset_schedule('ts1')
    timing = PhyTiming()
    for n in (2, 10, 20):
        stats = run_sim(schedule, timing, n, 500_000, seed=n)
        report = analyze_zero_delay(schedule, n, timing)
        assert report.gamma == pytest.approx(stats.gamma(), rel=0.12)
