"""
The client's finite-horizon channel-selection MDP.

States are ladder indices ``i`` (``i`` consecutive losses, trace
``traces[i]``), actions are ``1`` (premium channel) or ``0`` (cheap channel).
A delivered packet resets the state to 0, a lost one moves it to
``min(i + 1, N)``.

Stage ``k`` (1-based, as in the model) lives in row ``k - 1`` of every table.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ConsistencyError, StructuralPropertyError
from .estimation import CovarianceLadder

ORACLE_MAX_N = 6


@dataclass(frozen=True)
class GameConfig:
    lambda1: float
    lambda2: float
    W0: float
    WL: float
    WH: float
    zeta: float
    N: int

    def __post_init__(self):
        if not 0.0 < self.lambda2 < self.lambda1 < 1.0:
            if not self.lambda1 > self.lambda2:
                raise ConfigurationError("lambda1 must exceed lambda2")
            raise ConfigurationError("channel success probabilities must satisfy 1 > lambda1 > lambda2 > 0")
        if not self.WH > self.WL:
            raise ConfigurationError("WH must exceed WL")
        if not self.WL > self.W0:
            raise ConfigurationError("WL must exceed W0")
        if not 0.0 < self.zeta < 1.0:
            raise ConfigurationError("zeta must lie strictly between 0 and 1")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError("horizon N must be a positive integer")


class PriceSchedule:
    """Channel-1 price as a function of ``(stage, state_index)``."""

    def __init__(self, fn: Callable[[int, int], float], name: str = "custom"):
        self._fn = fn
        self.name = name

    def __call__(self, k: int, s: int) -> float:
        return self._fn(k, s)

    @classmethod
    def constant(cls, price: float, name: str | None = None) -> "PriceSchedule":
        return cls(lambda k, s: price, name or f"constant-{price:g}")

    @classmethod
    def from_table(cls, table, name: str = "table") -> "PriceSchedule":
        """``table[k - 1][s]`` is the price at stage ``k``, state ``s``."""
        arr = np.asarray(table, dtype=float)
        return cls(lambda k, s: float(arr[k - 1, s]), name)

    def table(self, N: int) -> np.ndarray:
        return np.array([[self(k, s) for s in range(N + 1)] for k in range(1, N + 1)], dtype=float)

    def is_state_constant(self, k: int, N: int) -> bool:
        first = self(k, 0)
        return all(self(k, s) == first for s in range(1, N + 1))


@dataclass
class ClientSolution:
    """Value table ``V`` (``N + 1`` rows, last one zero) and policy ``gamma``."""

    V: np.ndarray
    gamma: np.ndarray
    thresholds: list = field(default_factory=list)
    # False where a row is not monotone (possible only when prices vary
    # with the state); the threshold entry is then None.
    monotone: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.gamma.shape[0]

    def value(self, k: int, s: int) -> float:
        return float(self.V[k - 1, s])

    def action(self, k: int, s: int) -> int:
        return int(self.gamma[k - 1, s])


def kernel(gamma: int, cfg: GameConfig) -> tuple[float, float]:
    """(P[reset to state 0], P[advance one rung]) for the chosen channel."""
    p_reset = cfg.lambda1 if gamma else cfg.lambda2
    return p_reset, 1.0 - p_reset


def stage_reward(state_index: int, gamma: int, price: float,
                 ladder: CovarianceLadder, cfg: GameConfig) -> float:
    p_reset, p_adv = kernel(gamma, cfg)
    expected_trace = p_reset * ladder.traces[0] + p_adv * ladder.traces[ladder.succ(state_index)]
    cost = price if gamma else cfg.W0
    return -(cfg.zeta * expected_trace + (1.0 - cfg.zeta) * cost)


def _check_inputs(ladder: CovarianceLadder, cfg: GameConfig) -> int:
    N = cfg.N
    if ladder.N < N:
        raise ConfigurationError(f"ladder has {ladder.N + 1} rungs, horizon {N} needs {N + 1}")
    if ladder.N != N:
        raise ConfigurationError(f"ladder was built for horizon {ladder.N}, config says {N}")
    return N


def q_values(k: int, s: int, V_next: np.ndarray, ladder: CovarianceLadder,
             cfg: GameConfig, prices: PriceSchedule) -> tuple[float, float]:
    out = []
    for a in (0, 1):
        p_reset, p_adv = kernel(a, cfg)
        price = prices(k, s) if a else cfg.W0
        cont = p_reset * V_next[0] + p_adv * V_next[ladder.succ(s)]
        out.append(stage_reward(s, a, price, ladder, cfg) + cont)
    return out[0], out[1]


def value_iteration(ladder: CovarianceLadder, cfg: GameConfig, prices: PriceSchedule) -> ClientSolution:
    """Backward induction; ties go to the premium channel."""
    N = _check_inputs(ladder, cfg)
    V = np.zeros((N + 1, N + 1))
    gamma = np.zeros((N, N + 1), dtype=np.int8)
    for k in range(N, 0, -1):
        V_next = V[k]
        for s in range(N + 1):
            price = prices(k, s)
            if price < cfg.W0:
                raise ConfigurationError(f"price {price} at stage {k}, state {s} is below W0={cfg.W0}")
            q0, q1 = q_values(k, s, V_next, ladder, cfg, prices)
            if q1 >= q0:
                gamma[k - 1, s] = 1
                V[k - 1, s] = q1
            else:
                V[k - 1, s] = q0
    sol = ClientSolution(V, gamma)
    sol.monotone = [bool(np.all(np.diff(gamma[k]) >= 0)) for k in range(N)]
    sol.thresholds = [extract_threshold(sol, k) if sol.monotone[k - 1] else None
                      for k in range(1, N + 1)]
    return sol


def extract_threshold(solution: ClientSolution, k: int) -> Optional[int]:
    return row_threshold(solution.gamma[k - 1], stage=k)


def row_threshold(row, stage: int | None = None) -> Optional[int]:
    row = [int(v) for v in row]
    if any(b < a for a, b in zip(row, row[1:])):
        where = f" at stage {stage}" if stage is not None else ""
        raise ConsistencyError(f"policy row{where} is not monotone: {row}")
    for i, g in enumerate(row):
        if g == 1:
            return i
    return None


@dataclass
class SuperadditivityReport:
    checked: int = 0
    skipped_stages: list = field(default_factory=list)
    min_continuation_gap: float = float("inf")
    max_reward_identity_error: float = 0.0

    @property
    def ok(self) -> bool:
        return self.checked > 0


def check_superadditivity(ladder: CovarianceLadder, cfg: GameConfig, prices: PriceSchedule,
                          solution: ClientSolution, rtol: float = 1e-12,
                          slack: float = 1e-12) -> SuperadditivityReport:
    """Check the reward and continuation parts of the Q-function separately.

    For adjacent states ``(s - 1, s)`` at every stage:

    * the reward cross-difference equals ``zeta (l1 - l2) (t[succ s] - t[s])``
      (only for stages whose price does not depend on the state);
    * the continuation cross-difference equals
      ``(l2 - l1) (V[k+1][succ s] - V[k+1][s])`` and is nonnegative.
    """
    N = _check_inputs(ladder, cfg)
    report = SuperadditivityReport()
    dlam = cfg.lambda1 - cfg.lambda2
    t = ladder.traces
    for k in range(1, N + 1):
        V_next = solution.V[k]
        reward_check = prices.is_state_constant(k, N)
        if not reward_check:
            report.skipped_stages.append(k)
        for s in range(1, N + 1):
            lo = s - 1
            if reward_check:
                terms = [
                    stage_reward(s, 1, prices(k, s), ladder, cfg),
                    stage_reward(lo, 0, cfg.W0, ladder, cfg),
                    stage_reward(s, 0, cfg.W0, ladder, cfg),
                    stage_reward(lo, 1, prices(k, lo), ladder, cfg),
                ]
                lhs = (terms[0] + terms[1]) - (terms[2] + terms[3])
                rhs = cfg.zeta * dlam * (t[ladder.succ(s)] - t[s])
                scale = max(1.0, max(abs(x) for x in terms))
                err = abs(lhs - rhs)
                report.max_reward_identity_error = max(report.max_reward_identity_error, err / scale)
                if err > rtol * scale:
                    raise StructuralPropertyError(
                        f"reward superadditivity identity fails at stage {k}, state {s}: "
                        f"{lhs!r} != {rhs!r}", location=(k, s))

            def cont(i, a):
                p_reset, p_adv = kernel(a, cfg)
                return p_reset * V_next[0] + p_adv * V_next[ladder.succ(i)]

            terms = [cont(s, 1), cont(lo, 0), cont(s, 0), cont(lo, 1)]
            lhs = (terms[0] + terms[1]) - (terms[2] + terms[3])
            closed = (cfg.lambda2 - cfg.lambda1) * (V_next[ladder.succ(s)] - V_next[s])
            scale = max(1.0, max(abs(x) for x in terms))
            if abs(lhs - closed) > rtol * scale:
                raise StructuralPropertyError(
                    f"continuation cross-difference at stage {k}, state {s} is {lhs!r}, "
                    f"closed form gives {closed!r}", location=(k, s))
            report.min_continuation_gap = min(report.min_continuation_gap, closed)
            if closed < -slack:
                raise StructuralPropertyError(
                    f"continuation part is not superadditive at stage {k}, state {s}: {closed!r}",
                    location=(k, s))
            report.checked += 1
    return report


def check_value_monotone(solution: ClientSolution, slack: float = 0.0) -> None:
    """Every value row must be nonincreasing in the state index."""
    for k in range(1, solution.N + 1):
        row = solution.V[k - 1]
        for s in range(len(row) - 1):
            if row[s + 1] > row[s] + slack:
                raise StructuralPropertyError(
                    f"value function increases at stage {k} between states {s} and {s + 1}",
                    location=(k, s + 1))


def _enumerate_values(ladder: CovarianceLadder, cfg: GameConfig, price_table: np.ndarray,
                      bits: np.ndarray) -> np.ndarray:
    """Expected total reward of each policy encoded in ``bits``.

    ``bits`` has one column per (stage k, reachable state s < k) pair, in
    stage-major order. Distributions are pushed forward from state 0.
    """
    N = cfg.N
    t = np.asarray(ladder.traces)
    P = bits.shape[0]
    dist = np.zeros((P, N + 1))
    dist[:, 0] = 1.0
    total = np.zeros(P)
    col = 0
    for k in range(1, N + 1):
        new = np.zeros_like(dist)
        for s in range(k):
            g = bits[:, col].astype(bool)
            col += 1
            mass = dist[:, s]
            p_reset = np.where(g, cfg.lambda1, cfg.lambda2)
            cost = np.where(g, price_table[k - 1, s], cfg.W0)
            nxt = min(s + 1, N)
            reward = -(cfg.zeta * (p_reset * t[0] + (1 - p_reset) * t[nxt]) + (1 - cfg.zeta) * cost)
            total += mass * reward
            new[:, 0] += mass * p_reset
            new[:, nxt] += mass * (1 - p_reset)
        dist = new
    return total


def evaluate_policy(ladder: CovarianceLadder, cfg: GameConfig, prices: PriceSchedule,
                    gamma: np.ndarray) -> float:
    """Expected total reward of a Markov policy from state 0 by forward propagation."""
    N = _check_inputs(ladder, cfg)
    bits = np.array([[gamma[k - 1][s] for k in range(1, N + 1) for s in range(k)]], dtype=np.int8)
    return float(_enumerate_values(ladder, cfg, prices.table(N), bits)[0])


def brute_force_oracle(ladder: CovarianceLadder, cfg: GameConfig, prices: PriceSchedule,
                       chunk: int = 1 << 16) -> tuple[float, np.ndarray]:
    """Enumerate every deterministic Markov policy over reachable states.

    Only states ``0..k-1`` can occur at stage ``k``, so there are
    ``2 ** (N (N + 1) / 2)`` policies. Unreachable entries of the returned
    table are 0.
    """
    N = _check_inputs(ladder, cfg)
    if N > ORACLE_MAX_N:
        raise ConfigurationError(
            f"brute-force enumeration is limited to N <= {ORACLE_MAX_N} "
            f"(N={N} would mean 2**{N * (N + 1) // 2} policies)")
    nbits = N * (N + 1) // 2
    table = prices.table(N)
    shifts = np.arange(nbits, dtype=np.int64)
    best_value, best_code = -np.inf, 0
    for start in range(0, 1 << nbits, chunk):
        codes = np.arange(start, min(start + chunk, 1 << nbits), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(np.int8)
        values = _enumerate_values(ladder, cfg, table, bits)
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_code = float(values[i]), int(codes[i])

    policy = np.zeros((N, N + 1), dtype=np.int8)
    pairs = [(k, s) for k in range(1, N + 1) for s in range(k)]
    for b, (k, s) in enumerate(pairs):
        policy[k - 1, s] = (best_code >> b) & 1
    return best_value, policy


__all__ = [
    "GameConfig", "PriceSchedule", "ClientSolution", "SuperadditivityReport",
    "kernel", "stage_reward", "q_values", "value_iteration", "extract_threshold", "row_threshold",
    "check_superadditivity", "check_value_monotone", "evaluate_policy", "brute_force_oracle",
]
