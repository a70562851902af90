import numpy as np
import pytest

from chanprice.client_mdp import GameConfig, PriceSchedule, value_iteration
from chanprice.errors import ConfigurationError
from chanprice.estimation import SystemModel, build_ladder, steady_state
from chanprice.game_sim import (
    SimConfig,
    batch_uniforms,
    play_equilibrium,
    run_uniforms,
    simulate,
    simulate_full_state,
)

from .conftest import STUDY1, STUDY2

WL1 = PriceSchedule.constant(STUDY1.WL)


@pytest.fixture(scope="module")
def client1(ladder1):
    return value_iteration(ladder1, STUDY1, WL1)


def test_run_uniforms_match_batch():
    batch = batch_uniforms(7, 0, 9, 5)
    for r in range(9):
        assert np.array_equal(run_uniforms(7, 0, r, 5), batch[r])
    assert not np.array_equal(batch_uniforms(7, 1, 9, 5), batch)
    assert not np.array_equal(batch_uniforms(8, 0, 9, 5), batch)


def test_deterministic(ladder1, client1):
    sim = SimConfig(runs=500, seed=11)
    a = simulate(ladder1, STUDY1, client1, WL1, sim)
    b = simulate(ladder1, STUDY1, client1, WL1, sim)
    assert (a.mean_JC, a.se_JC, a.mean_JS, a.se_JS) == (b.mean_JC, b.se_JC, b.mean_JS, b.se_JS)
    assert np.array_equal(a.occupancy, b.occupancy)


def test_prefix_runs_agree(ladder1, client1):
    small = simulate(ladder1, STUDY1, client1, WL1, SimConfig(runs=50, seed=3, record_traces=True))
    large = simulate(ladder1, STUDY1, client1, WL1, SimConfig(runs=200, seed=3, record_traces=True))
    assert np.array_equal(small.states, large.states[:50])


def test_bookkeeping(ladder1, client1):
    res = simulate(ladder1, STUDY1, client1, WL1, SimConfig(runs=1000, seed=1, record_traces=True))
    assert (res.occupancy.sum(axis=1) == 1000).all()
    assert res.transitions.sum() == 1000 * STUDY1.N
    assert res.mean_JS >= STUDY1.N * STUDY1.W0
    paid = np.where(res.gammas == 1, res.prices, STUDY1.W0)
    assert paid.sum(axis=1).mean() == pytest.approx(res.mean_JS, rel=1e-12)
    t = np.asarray(ladder1.traces)
    jc = -(STUDY1.zeta * t[res.states[:, 1:]] + (1 - STUDY1.zeta) * paid).sum(axis=1)
    assert jc.mean() == pytest.approx(res.mean_JC, rel=1e-12)


def test_single_run_has_zero_se(ladder1, client1):
    res = simulate(ladder1, STUDY1, client1, WL1, SimConfig(runs=1, seed=0))
    assert res.se_JC == 0.0 and res.se_JS == 0.0


def test_mean_matches_value(ladder2):
    prices = PriceSchedule.constant(STUDY2.WH)
    client = value_iteration(ladder2, STUDY2, prices)
    res = simulate(ladder2, STUDY2, client, prices, SimConfig(runs=40_000, seed=5))
    assert abs(res.mean_JC - client.V[0, 0]) <= 3 * res.se_JC


def test_transition_frequencies(ladder1, client1):
    res = simulate(ladder1, STUDY1, client1, WL1, SimConfig(runs=20_000, seed=2))
    for s in range(STUDY1.N + 1):
        for a, lam in ((0, STUDY1.lambda2), (1, STUDY1.lambda1)):
            n = res.transitions[s, a].sum()
            if n < 100:
                continue
            freq = res.transitions[s, a, 0] / n
            assert abs(freq - lam) <= 3 * np.sqrt(lam * (1 - lam) / n) + 1e-12


def test_full_state_agrees_with_ladder_game(model, ladder2):
    prices = PriceSchedule.constant(STUDY2.WL)
    client = value_iteration(ladder2, STUDY2, prices)
    sim = SimConfig(runs=2000, seed=9)
    a = simulate(ladder2, STUDY2, client, prices, sim)
    b = simulate_full_state(model, ladder2, STUDY2, client, prices, sim)
    assert a.mean_JC == b.mean_JC and a.mean_JS == b.mean_JS


def test_full_state_mse(model, ladder2):
    prices = PriceSchedule.constant(STUDY2.WL)
    client = value_iteration(ladder2, STUDY2, prices)
    res = simulate_full_state(model, ladder2, STUDY2, client, prices, SimConfig(runs=100_000, seed=4))
    assert np.allclose(res.empirical_mse, res.predicted_mse, rtol=0.05)


def test_forced_delivery_mse_is_floor(model, ladder2):
    prices = PriceSchedule.constant(STUDY2.WL)
    client = value_iteration(ladder2, STUDY2, prices)
    res = simulate_full_state(model, ladder2, STUDY2, client, prices, SimConfig(runs=50_000, seed=8),
                              force_delivery=True)
    assert np.allclose(res.empirical_mse, ladder2.traces[0], rtol=0.05)
    assert (res.occupancy[1:, 0] == 50_000).all()


def test_noise_free_scalar_is_exact():
    m = SystemModel.scalar(0.9, 1.0, 0.0, 1.0, pi0=0.0)
    cfg = GameConfig(0.9, 0.5, 1.0, 2.0, 3.0, 0.5, 3)
    ladder = build_ladder(m, steady_state(m), cfg.N)
    prices = PriceSchedule.constant(cfg.WL)
    client = value_iteration(ladder, cfg, prices)
    res = simulate_full_state(m, ladder, cfg, client, prices, SimConfig(runs=100, seed=0))
    assert np.abs(res.empirical_mse).max() < 1e-12


def test_scalar_model_mse(scalar_model):
    cfg = GameConfig(0.8, 0.3, 1.0, 2.0, 3.0, 0.5, 4)
    ladder = build_ladder(scalar_model, steady_state(scalar_model), cfg.N)
    prices = PriceSchedule.constant(cfg.WL)
    client = value_iteration(ladder, cfg, prices)
    res = simulate_full_state(scalar_model, ladder, cfg, client, prices, SimConfig(runs=100_000, seed=1))
    assert np.allclose(res.empirical_mse, res.predicted_mse, rtol=0.05)


def test_horizon_mismatch(ladder1, ladder2, client1):
    with pytest.raises(ConfigurationError):
        simulate(ladder2, STUDY1, client1, WL1, SimConfig(runs=10))
    with pytest.raises(ConfigurationError):
        simulate(ladder1, STUDY1, client1, np.zeros((2, 2)), SimConfig(runs=10))
    with pytest.raises(ConfigurationError):
        simulate(ladder1, STUDY1, client1, WL1, SimConfig(runs=10, start_state=99))


def test_bad_sim_config():
    with pytest.raises(ConfigurationError):
        SimConfig(runs=0)
    with pytest.raises(ConfigurationError):
        SimConfig(seed=-1)


@pytest.mark.parametrize("construction", ["standard", "consistent"])
def test_play_equilibrium(ladder2, construction):
    server, client, res = play_equilibrium(ladder2, STUDY2, SimConfig(runs=5000, seed=0), construction)
    assert server.is_discretized
    assert abs(res.mean_JC - client.V[0, 0]) <= 4 * res.se_JC
    with pytest.raises(ConfigurationError):
        play_equilibrium(ladder2, STUDY2, SimConfig(runs=1), "other")


def test_near_certain_channel_resets(ladder2):
    cfg = GameConfig(0.999999, 0.2, 0.0, 0.1, 0.2, 0.9, STUDY2.N)
    prices = PriceSchedule.constant(cfg.WL)
    client = value_iteration(ladder2, cfg, prices)
    assert (client.gamma == 1).all()
    res = simulate(ladder2, cfg, client, prices, SimConfig(runs=10_000, seed=0))
    assert (res.occupancy[1:, 0] >= 9_990).all()
