import numpy as np
import pytest

from pydcf import AttemptRates, jain_index, success_run_delay, success_run_zero_delay
from pydcf.fairness import (EU1_CAP, expected_success_counts, identity_chain, identity_states,
                            success_chain_delay, success_chain_divergence, switching_probability,
                            switching_ratio_bounds)
from pydcf.mrp import cycle_transition_matrix, solve_rates_zero_delay
from pydcf.schedule import preset_schedule


def random_rates(rng):
    return AttemptRates(*(float(v) for v in rng.uniform(0.05, 1.0, 3)))


def test_identity_chain_marginal_is_the_cycle_chain():
    rng = np.random.default_rng(1)
    for n in (2, 3, 6):
        states = identity_states(n)
        assert len(states) == 2 * n - 1
        rates = random_rates(rng)
        P = identity_chain(rates, n)
        C = cycle_transition_matrix(rates, n)
        assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-12
        for i, (n_a, _) in enumerate(states):
            marginal = [sum(P[i, j] for j, (k, _) in enumerate(states) if k == n_next) for n_next in range(1, n + 1)]
            assert marginal == pytest.approx(C[n_a - 1], abs=1e-12)


def test_identity_chain_captured_channel():
    P = identity_chain(AttemptRates(0.0, 0.4, 0.3), 4)
    i = identity_states(4).index((1, 1))
    assert P[i, i] == pytest.approx(1.0)


def test_identity_chain_needs_two_nodes():
    with pytest.raises(ValueError):
        identity_chain(AttemptRates(0.2, 0.5, 0.3), 1)
    with pytest.raises(ValueError):
        jain_index(AttemptRates(0.2, 0.5, 0.3), 1, 5)


def test_expected_success_counts():
    rates = AttemptRates(0.1, 0.6, 0.3)
    n = 3
    table = expected_success_counts(rates, n, 30)
    P = identity_chain(rates, n)
    assert table[0] == pytest.approx(P[:, identity_states(n).index((1, 1))])
    assert np.all(table >= 0)
    assert np.all(table <= np.arange(1, 31)[:, None] + 1e-12)
    assert np.all(np.diff(table, axis=0) >= -1e-15)
    with pytest.raises(ValueError):
        expected_success_counts(rates, n, 0)


def test_equal_rates_are_fair():
    for n in (2, 4, 7):
        for beta in (0.05, 0.4, 0.9):
            rates = AttemptRates(beta, beta, beta)
            for L in (1, 2, 5, 20):
                assert jain_index(rates, n, L) == pytest.approx(1.0, abs=1e-12)


def test_long_frames_are_fair():
    rates, _ = solve_rates_zero_delay(preset_schedule('ts3'), 2)
    assert rates.converged
    assert jain_index(rates, 2, 1) < jain_index(rates, 2, 10_000)
    assert jain_index(rates, 2, 10_000) > 0.99


def test_captured_channel_halves_the_index():
    rates = AttemptRates(1e-9, 1.0, 0.5)
    assert jain_index(rates, 2, 5) == pytest.approx(0.5, abs=1e-6)


def test_two_node_success_run_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(10):
        rates = random_rates(rng)
        run = success_run_zero_delay(rates, 2)
        assert run.r11 == pytest.approx(1 - switching_probability(rates.beta_d, rates.beta_s), abs=1e-12)
        assert run.eu1 == pytest.approx(1 / (1 - run.r11))
        assert not run.capped


def test_equal_first_rates_give_even_runs():
    for beta_c in (0.1, 0.5, 0.9):
        run = success_run_zero_delay(AttemptRates(0.3, 0.3, beta_c), 2)
        assert run.r11 == pytest.approx(0.5, abs=1e-12)
        assert run.eu1 == pytest.approx(2.0)


def test_equal_rates_many_nodes():
    for n in (3, 5):
        run = success_run_zero_delay(AttemptRates(0.2, 0.2, 0.2), n)
        assert run.r11 == pytest.approx(1 / n, abs=1e-12)
        assert success_chain_divergence(run.r11, n) == pytest.approx(0.0, abs=1e-12)
    assert success_chain_divergence(0.9, 3) > 0


def test_unbounded_runs_are_capped(caplog):
    run = success_run_zero_delay(AttemptRates(1e-12, 0.9, 0.5), 2)
    assert run.capped
    assert run.eu1 == EU1_CAP
    assert 'capped' in caplog.text


def test_success_run_grows_with_the_rate_ratio():
    beta_s = 0.5
    runs = [success_run_zero_delay(AttemptRates(beta_s / ratio, beta_s, 0.2), 3).r11 for ratio in (1, 2, 4, 8, 16)]
    assert all(b >= a for a, b in zip(runs, runs[1:]))
    assert all(0 <= r <= 1 for r in runs)


def test_switching_interval():
    for eps in (0.01, 0.1, 0.25, 0.4, 0.5):
        for beta_s in (0.05, 0.2, 0.5):
            low, high = switching_ratio_bounds(eps, beta_s)
            assert low <= 1 - 2 * eps + 1e-12
            assert high >= 1 + 2 * eps - 1e-12
            assert switching_probability(low * beta_s, beta_s) == pytest.approx(0.5 - eps)
            assert switching_probability(high * beta_s, beta_s) == pytest.approx(0.5 + eps)
            for ratio in np.linspace(1 - 2 * eps, 1 + 2 * eps, 9):
                p12 = switching_probability(ratio * beta_s, beta_s)
                assert 0.5 - eps - 1e-12 <= p12 <= 0.5 + eps + 1e-12


def test_delay_success_chain_rows():
    rng = np.random.default_rng(3)
    for m in (0, 1, 4):
        for _ in range(5):
            P = success_chain_delay(random_rates(rng), m)
            assert P.shape == (2 * m + 3, 2 * m + 3)
            assert np.all(P >= 0)
            assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-12


def test_delay_success_run_reductions():
    rng = np.random.default_rng(4)
    for _ in range(5):
        rates = random_rates(rng)
        assert success_run_delay(rates, 0).r11 == pytest.approx(success_run_zero_delay(rates, 2).r11, abs=1e-12)
    for m in (0, 2, 5):
        assert success_run_delay(AttemptRates(0.3, 0.3, 0.3), m).r11 == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        success_run_delay(AttemptRates(0.3, 0.3, 0.3), -1)
