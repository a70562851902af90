"""
The server's side of the game: the highest channel-1 price the client will
still accept at each (stage, state), and its projection onto the two posted
price levels WL and WH.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .client_mdp import GameConfig, PriceSchedule, value_iteration
from .errors import StructuralPropertyError
from .estimation import CovarianceLadder

MONOTONE_SLACK = 1e-12


class PriceLabel(str, enum.Enum):
    WH = "WH"
    WL = "WL"
    # Threshold is below WL: the client declines whatever is posted.
    ANY = "ANY"


@dataclass
class ServerSolution:
    """Continuous thresholds and their discrete projection.

    ``Wstar[k - 1, s]`` is the threshold price at stage ``k``; ``U`` has an
    extra terminal row of zeros. ``discrete`` and ``fig2_thresholds`` stay
    empty until :func:`discretize_policy` fills them.
    """

    Wstar: np.ndarray
    U: np.ndarray
    discrete: list = field(default_factory=list)
    fig2_thresholds: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.Wstar.shape[0]

    @property
    def is_discretized(self) -> bool:
        return bool(self.discrete)

    def posted_prices(self, cfg: GameConfig) -> np.ndarray:
        """Numeric price table of the discrete policy; ANY states post WH."""
        if not self.is_discretized:
            raise ValueError("server solution has not been discretized")
        lookup = {PriceLabel.WH: cfg.WH, PriceLabel.WL: cfg.WL, PriceLabel.ANY: cfg.WH}
        return np.array([[lookup[lab] for lab in row] for row in self.discrete], dtype=float)

    def price_schedule(self, cfg: GameConfig) -> PriceSchedule:
        return PriceSchedule.from_table(self.posted_prices(cfg), name="server")


def terminal_threshold(state_index: int, ladder: CovarianceLadder, cfg: GameConfig) -> float:
    t = ladder.traces
    premium = cfg.zeta / (1.0 - cfg.zeta) * (cfg.lambda1 - cfg.lambda2) * (t[ladder.succ(state_index)] - t[0])
    return premium + cfg.W0


def backward_thresholds(ladder: CovarianceLadder, cfg: GameConfig) -> ServerSolution:
    """Threshold prices by backward induction, assuming the client accepts at the threshold."""
    N = cfg.N
    if ladder.N != N:
        raise ValueError(f"ladder was built for horizon {ladder.N}, config says {N}")
    t = ladder.traces
    z, l1, l2 = cfg.zeta, cfg.lambda1, cfg.lambda2
    Wstar = np.zeros((N, N + 1))
    U = np.zeros((N + 1, N + 1))
    for k in range(N, 0, -1):
        U_next = U[k]
        for s in range(N + 1):
            nxt = ladder.succ(s)
            if k == N:
                w = terminal_threshold(s, ladder, cfg)
            else:
                w = (z / (1 - z) * (l1 - l2) * (t[nxt] - t[0]) + cfg.W0
                     + (l1 - l2) / (1 - z) * (U_next[0] - U_next[nxt]))
            Wstar[k - 1, s] = w
            U[k - 1, s] = (-(z * (l1 * t[0] + (1 - l1) * t[nxt]) + (1 - z) * w)
                           + l1 * U_next[0] + (1 - l1) * U_next[nxt])
    sol = ServerSolution(Wstar, U)
    check_server_invariants(sol, cfg)
    return sol


def consistent_thresholds(ladder: CovarianceLadder, cfg: GameConfig) -> ServerSolution:
    """Threshold prices measured against the client's actual continuation.

    Same backward pass as :func:`backward_thresholds`, but the continuation
    at stage ``k + 1`` is the client's value under the discrete WL/WH table
    already fixed for the later stages, instead of the value under threshold
    pricing. The returned solution is already discretized, and ``U`` holds
    that follower value. Monotonicity is not asserted; check it separately.
    """
    N = cfg.N
    if ladder.N != N:
        raise ValueError(f"ladder was built for horizon {ladder.N}, config says {N}")
    t = ladder.traces
    z, l1, l2 = cfg.zeta, cfg.lambda1, cfg.lambda2
    Wstar = np.zeros((N, N + 1))
    V = np.zeros((N + 1, N + 1))
    for k in range(N, 0, -1):
        V_next = V[k]
        for s in range(N + 1):
            nxt = ladder.succ(s)
            w = (z / (1 - z) * (l1 - l2) * (t[nxt] - t[0]) + cfg.W0
                 + (l1 - l2) / (1 - z) * (V_next[0] - V_next[nxt]))
            Wstar[k - 1, s] = w
            label = classify(w, cfg)
            price = cfg.WL if label is PriceLabel.WL else cfg.WH
            q = []
            for a, lam, cost in ((0, l2, cfg.W0), (1, l1, price)):
                q.append(-(z * (lam * t[0] + (1 - lam) * t[nxt]) + (1 - z) * cost)
                         + lam * V_next[0] + (1 - lam) * V_next[nxt])
            V[k - 1, s] = max(q)
    return discretize_policy(ServerSolution(Wstar, V), cfg)


def check_server_invariants(sol: ServerSolution, cfg: GameConfig) -> None:
    for k in range(1, sol.N + 1):
        w_row, u_row = sol.Wstar[k - 1], sol.U[k - 1]
        for s in range(len(w_row)):
            if w_row[s] < cfg.W0 - MONOTONE_SLACK * (1 + abs(cfg.W0)):
                raise StructuralPropertyError(f"threshold below W0 at stage {k}, state {s}", location=(k, s))
            if s == 0:
                continue
            if w_row[s] < w_row[s - 1] - MONOTONE_SLACK * (1 + abs(w_row[s - 1])):
                raise StructuralPropertyError(
                    f"threshold price decreases at stage {k} between states {s - 1} and {s}",
                    location=(k, s))
            if u_row[s] > u_row[s - 1] + MONOTONE_SLACK * (1 + abs(u_row[s - 1])):
                raise StructuralPropertyError(
                    f"leader-anticipated value increases at stage {k} between states {s - 1} and {s}",
                    location=(k, s))


def classify(wstar: float, cfg: GameConfig) -> PriceLabel:
    if cfg.WH <= wstar:
        return PriceLabel.WH
    if cfg.WL <= wstar:
        return PriceLabel.WL
    return PriceLabel.ANY


def _first(row, labels) -> Optional[int]:
    for s, lab in enumerate(row):
        if lab in labels:
            return s
    return None


def discretize_policy(solution: ServerSolution, cfg: GameConfig) -> ServerSolution:
    discrete = [[classify(w, cfg) for w in row] for row in solution.Wstar]
    thresholds = []
    for row in discrete:
        L = _first(row, (PriceLabel.WL, PriceLabel.WH))
        H = _first(row, (PriceLabel.WH,))
        thresholds.append((L, H))
    return replace(solution, discrete=discrete, fig2_thresholds=thresholds)


def check_price_pattern(solution: ServerSolution) -> None:
    """Each discrete row must read ANY..., WL..., WH... as the state worsens."""
    order = {PriceLabel.ANY: 0, PriceLabel.WL: 1, PriceLabel.WH: 2}
    for k, row in enumerate(solution.discrete, start=1):
        ranks = [order[lab] for lab in row]
        for s in range(1, len(ranks)):
            if ranks[s] < ranks[s - 1]:
                raise StructuralPropertyError(
                    f"discrete policy at stage {k} is not ANY->WL->WH: {[lab.value for lab in row]}",
                    location=(k, s))
        L, H = solution.fig2_thresholds[k - 1]
        if L is not None and H is not None and L > H:
            raise StructuralPropertyError(f"L_index {L} exceeds H_index {H} at stage {k}", location=(k, L))


@dataclass
class Discrepancy:
    stage: int
    state_index: int
    label: PriceLabel
    price: float
    Wstar: float
    gamma: int
    reachable: bool


@dataclass
class ConsistencyReport:
    discrepancies: list = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.discrepancies


def verify_leader_consistency(server: ServerSolution, ladder: CovarianceLadder, cfg: GameConfig,
                              reachable_only: bool = False) -> ConsistencyReport:
    """Best-respond to the discrete price table and compare with the labels.

    The client should take channel 1 exactly where the label is WL or WH.
    States ``s >= k`` cannot occur at stage ``k``; they are checked too
    unless ``reachable_only``.
    """
    if not server.is_discretized:
        server = discretize_policy(server, cfg)
    prices = server.posted_prices(cfg)
    client = value_iteration(ladder, cfg, PriceSchedule.from_table(prices, name="server"))
    report = ConsistencyReport()
    for k in range(1, cfg.N + 1):
        for s in range(cfg.N + 1):
            reachable = s < k
            if reachable_only and not reachable:
                continue
            label = server.discrete[k - 1][s]
            price = float(prices[k - 1, s])
            wstar = float(server.Wstar[k - 1, s])
            gamma = int(client.gamma[k - 1, s])
            expected = 0 if label is PriceLabel.ANY else 1
            report.checked += 1
            if gamma != expected:
                report.discrepancies.append(Discrepancy(k, s, label, price, wstar, gamma, reachable))
    return report
