"""
Monte Carlo play of the pricing game.

All runs are simulated together as numpy arrays. Random numbers come from
numpy's Philox counter-based generator keyed by ``(seed, stream)``; run ``r``
owns a fixed, block-aligned slice of the counter space, so any single run can
be regenerated on its own with :func:`run_uniforms` and results do not depend
on how runs are batched.

Stream 0 drives packet arrivals (one uniform per stage). Stream 1 drives the
process and measurement noise of :func:`simulate_full_state`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .client_mdp import ClientSolution, GameConfig, PriceSchedule, value_iteration
from .errors import ConfigurationError
from .estimation import CovarianceLadder, SystemModel, kalman_gain, lyapunov_h
from .server_pricing import ServerSolution, backward_thresholds, consistent_thresholds, discretize_policy

ARRIVAL_STREAM = 0
NOISE_STREAM = 1
_PHILOX_BLOCK = 4  # 64-bit outputs per Philox counter increment


@dataclass(frozen=True)
class SimConfig:
    runs: int = 10_000
    seed: int = 0
    record_traces: bool = False
    start_state: int = 0

    def __post_init__(self):
        if int(self.runs) != self.runs or self.runs < 1:
            raise ConfigurationError("runs must be a positive integer")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")


@dataclass
class SimResult:
    mean_JC: float
    se_JC: float
    mean_JS: float
    se_JS: float
    runs: int
    # occupancy[j, s]: runs sitting in state s after j stages (row 0 is the start)
    occupancy: np.ndarray
    # transitions[s, a, outcome]: outcome 0 = reset to state 0, 1 = advance
    transitions: np.ndarray
    states: Optional[np.ndarray] = None
    prices: Optional[np.ndarray] = None
    gammas: Optional[np.ndarray] = None
    deltas: Optional[np.ndarray] = None
    # filled by simulate_full_state only
    empirical_mse: Optional[np.ndarray] = None
    predicted_mse: Optional[np.ndarray] = None


def _padded(count: int) -> int:
    return -(-count // _PHILOX_BLOCK) * _PHILOX_BLOCK


def _philox(seed: int, stream: int, counter_offset: int = 0) -> np.random.Generator:
    key = (int(stream) << 64) | int(seed)
    return np.random.Generator(np.random.Philox(key=key, counter=counter_offset))


def batch_uniforms(seed: int, stream: int, runs: int, per_run: int) -> np.ndarray:
    width = _padded(per_run)
    return _philox(seed, stream).random((runs, width))[:, :per_run]


def run_uniforms(seed: int, stream: int, run: int, per_run: int) -> np.ndarray:
    """The uniforms :func:`batch_uniforms` assigns to a single run."""
    width = _padded(per_run)
    return _philox(seed, stream, counter_offset=run * (width // _PHILOX_BLOCK)).random(width)[:per_run]


def _price_table(prices, cfg: GameConfig) -> np.ndarray:
    if isinstance(prices, ServerSolution):
        return prices.posted_prices(cfg)
    if isinstance(prices, PriceSchedule):
        return prices.table(cfg.N)
    table = np.asarray(prices, dtype=float)
    if table.shape != (cfg.N, cfg.N + 1):
        raise ConfigurationError(f"price table must be {cfg.N}x{cfg.N + 1}, got {table.shape}")
    return table


def _check_horizons(ladder: CovarianceLadder, cfg: GameConfig, client: ClientSolution) -> None:
    if ladder.N != cfg.N:
        raise ConfigurationError(f"ladder horizon {ladder.N} does not match config horizon {cfg.N}")
    if client.N != cfg.N or client.gamma.shape[1] != cfg.N + 1:
        raise ConfigurationError(f"client solution horizon {client.N} does not match config horizon {cfg.N}")


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _play(ladder, cfg, client, table, sim, force_delivery=False, on_stage=None) -> SimResult:
    N, runs = cfg.N, sim.runs
    if not 0 <= sim.start_state <= N:
        raise ConfigurationError(f"start_state must lie in 0..{N}")
    traces = np.asarray(ladder.traces)
    u = batch_uniforms(sim.seed, ARRIVAL_STREAM, runs, N)

    state = np.full(runs, sim.start_state, dtype=np.int64)
    JC = np.zeros(runs)
    JS = np.zeros(runs)
    occupancy = np.zeros((N + 1, N + 1), dtype=np.int64)
    occupancy[0] = np.bincount(state, minlength=N + 1)
    transitions = np.zeros((N + 1, 2, 2), dtype=np.int64)
    rec = sim.record_traces
    states = np.empty((runs, N + 1), dtype=np.int64) if rec else None
    prices = np.empty((runs, N)) if rec else None
    gammas = np.empty((runs, N), dtype=np.int8) if rec else None
    deltas = np.empty((runs, N), dtype=np.int8) if rec else None
    if rec:
        states[:, 0] = state

    for k in range(1, N + 1):
        price = table[k - 1, state]
        g = client.gamma[k - 1, state].astype(bool)
        p = np.where(g, cfg.lambda1, cfg.lambda2)
        delta = np.ones(runs, dtype=bool) if force_delivery else u[:, k - 1] < p
        np.add.at(transitions, (state, g.astype(np.int64), (~delta).astype(np.int64)), 1)
        paid = np.where(g, price, cfg.W0)
        state = np.where(delta, 0, np.minimum(state + 1, N))
        JC -= cfg.zeta * traces[state] + (1.0 - cfg.zeta) * paid
        JS += paid
        occupancy[k] = np.bincount(state, minlength=N + 1)
        if on_stage is not None:
            on_stage(k, delta, state)
        if rec:
            states[:, k] = state
            prices[:, k - 1] = price
            gammas[:, k - 1] = g
            deltas[:, k - 1] = delta

    mjc, sjc = _mean_se(JC)
    mjs, sjs = _mean_se(JS)
    return SimResult(mjc, sjc, mjs, sjs, runs, occupancy, transitions, states, prices, gammas, deltas)


def simulate(ladder: CovarianceLadder, cfg: GameConfig, client: ClientSolution,
             prices: Union[ServerSolution, PriceSchedule, np.ndarray], sim: SimConfig,
             force_delivery: bool = False) -> SimResult:
    """Play the game on the trace ladder only (no physical state)."""
    _check_horizons(ladder, cfg, client)
    return _play(ladder, cfg, client, _price_table(prices, cfg), sim, force_delivery)


def _matrix_sqrt(P: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((P + P.T) / 2)
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_full_state(model: SystemModel, ladder: CovarianceLadder, cfg: GameConfig,
                        client: ClientSolution, prices, sim: SimConfig,
                        force_delivery: bool = False) -> SimResult:
    """Same game, plus the process, the sensor filter and the remote estimate.

    The sensor starts at steady state: its estimate is 0 and the true state is
    drawn from N(0, Pbar). ``empirical_mse[k]`` is the run average of
    ``|x_k - xhat_k|^2`` at the remote estimator, ``predicted_mse[k]`` the run
    average of the ladder trace of the state each run is in.
    """
    _check_horizons(ladder, cfg, client)
    table = _price_table(prices, cfg)
    N, runs, n, m = cfg.N, sim.runs, model.n, model.m
    A = np.array(model.A.to_rows())
    C = np.array(model.C.to_rows())
    sqQ = _matrix_sqrt(np.array(model.Q.to_rows()))
    sqR = _matrix_sqrt(np.array(model.R.to_rows()))
    Pbar = ladder.Pbar

    # Sensor covariance and gain are deterministic; compute them once per stage.
    gains = []
    P_sensor = Pbar
    for _ in range(N):
        P_prior = lyapunov_h(model, P_sensor)
        K = kalman_gain(model, P_prior)
        P_sensor = (P_prior - K @ model.C @ P_prior).symmetrized()
        gains.append(np.array(K.to_rows()))

    count = n + N * (n + m)
    pairs = -(-count // 2)
    u = batch_uniforms(sim.seed, NOISE_STREAM, runs, 2 * pairs)
    u1, u2 = 1.0 - u[:, 0::2], u[:, 1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)], axis=1)[:, :count]

    x = z[:, :n] @ _matrix_sqrt(np.array(Pbar.to_rows())).T
    xs = np.zeros((runs, n))
    xr = xs.copy()
    traces = np.asarray(ladder.traces)
    emp = np.zeros(N + 1)
    pred = np.zeros(N + 1)
    emp[0] = float(np.mean(np.sum((x - xr) ** 2, axis=1)))
    pred[0] = traces[sim.start_state]

    def on_stage(k, delta, state):
        nonlocal x, xs, xr
        off = n + (k - 1) * (n + m)
        w = z[:, off:off + n] @ sqQ.T
        v = z[:, off + n:off + n + m] @ sqR.T
        x = x @ A.T + w
        y = x @ C.T + v
        prior = xs @ A.T
        xs = prior + (y - prior @ C.T) @ gains[k - 1].T
        xr = np.where(delta[:, None], xs, xr @ A.T)
        emp[k] = float(np.mean(np.sum((x - xr) ** 2, axis=1)))
        pred[k] = float(np.mean(traces[state]))

    res = _play(ladder, cfg, client, table, sim, force_delivery, on_stage)
    res.empirical_mse = emp
    res.predicted_mse = pred
    return res


def play_equilibrium(ladder: CovarianceLadder, cfg: GameConfig, sim: SimConfig,
                     construction: str = "standard") -> tuple[ServerSolution, ClientSolution, SimResult]:
    """Server thresholds, discrete prices, client best response, then simulation.

    ``construction="consistent"`` swaps in :func:`consistent_thresholds`.
    """
    if construction == "standard":
        server = discretize_policy(backward_thresholds(ladder, cfg), cfg)
    elif construction == "consistent":
        server = consistent_thresholds(ladder, cfg)
    else:
        raise ConfigurationError(f"unknown server construction {construction!r}")
    client = value_iteration(ladder, cfg, server.price_schedule(cfg))
    result = simulate(ladder, cfg, client, server, sim)
    return server, client, result
