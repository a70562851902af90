"""
Sensor-side Kalman filtering and the covariance ladder seen by the remote
estimator.

After ``i`` consecutive packet losses the remote error covariance is
``h^i(Pbar)`` where ``h(X) = A X A' + Q`` and ``Pbar`` is the steady state of
the sensor's own filter. The traces of that ladder are the MDP states.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ConsistencyError, ConvergenceError, ObservabilityWarning
from .matrix_core import Matrix, is_psd, mat_inv, observability_matrix, numerical_rank, trace

PSD_TOL = 1e-9


@dataclass(frozen=True)
class SystemModel:
    """LTI process ``x+ = A x + w`` observed through ``y = C x + v``."""

    A: Matrix
    C: Matrix
    Q: Matrix
    R: Matrix
    Pi0: Optional[Matrix] = None

    def __post_init__(self):
        n = self.A.rows
        if not self.A.is_square:
            raise ConfigurationError(f"A must be square, got {self.A.rows}x{self.A.cols}")
        if self.C.cols != n:
            raise ConfigurationError(f"C must have {n} columns to match A, got {self.C.cols}")
        m = self.C.rows
        if self.Q.shape != (n, n):
            raise ConfigurationError(f"Q must be {n}x{n}, got {self.Q.rows}x{self.Q.cols}")
        if self.R.shape != (m, m):
            raise ConfigurationError(f"R must be {m}x{m}, got {self.R.rows}x{self.R.cols}")
        if self.Pi0 is None:
            object.__setattr__(self, "Pi0", self.Q)
        elif self.Pi0.shape != (n, n):
            raise ConfigurationError(f"Pi0 must be {n}x{n}, got {self.Pi0.rows}x{self.Pi0.cols}")

        if not is_psd(self.Q, PSD_TOL):
            raise ConfigurationError("Q must be positive semi-definite")
        if not is_psd(self.R, PSD_TOL, strict=True):
            raise ConfigurationError("R must be positive definite")
        if not is_psd(self.Pi0, PSD_TOL):
            raise ConfigurationError("Pi0 must be positive semi-definite")

        rank = numerical_rank(observability_matrix(self.A, self.C))
        if rank < n:
            if not _unobservable_part_stable(self.A, self.C):
                raise ConfigurationError(
                    f"(A, C) is neither observable (rank {rank} < {n}) nor detectable"
                )
            warnings.warn(
                f"(A, C) is not observable (rank {rank} < {n}); continuing because the "
                "unobservable modes are stable",
                ObservabilityWarning,
                stacklevel=3,
            )

    @property
    def n(self) -> int:
        return self.A.rows

    @property
    def m(self) -> int:
        return self.C.rows

    @classmethod
    def scalar(cls, a: float, c: float, q: float, r: float, pi0: float | None = None) -> "SystemModel":
        one = lambda v: Matrix(1, 1, (v,))  # noqa: E731
        return cls(one(a), one(c), one(q), one(r), None if pi0 is None else one(pi0))


def _unobservable_part_stable(A: Matrix, C: Matrix) -> bool:
    # Restrict A to the null space of the observability matrix and check its
    # spectral radius.
    obs = np.array(observability_matrix(A, C).to_rows())
    a = np.array(A.to_rows())
    _, sv, vt = np.linalg.svd(obs)
    tol = 1e-10 * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    rank = int(np.sum(sv > tol))
    null = vt[rank:].T
    if null.shape[1] == 0:
        return True
    restricted = null.T @ a @ null
    return bool(np.max(np.abs(np.linalg.eigvals(restricted))) < 1.0)


def lyapunov_h(model: SystemModel, X: Matrix) -> Matrix:
    if X.shape != (model.n, model.n):
        raise ConfigurationError(f"X must be {model.n}x{model.n}, got {X.rows}x{X.cols}")
    return (model.A @ X @ model.A.T + model.Q).symmetrized()


def riccati_g(model: SystemModel, X: Matrix) -> Matrix:
    """Measurement update ``X - X C' (C X C' + R)^-1 C X``."""
    if X.shape != (model.n, model.n):
        raise ConfigurationError(f"X must be {model.n}x{model.n}, got {X.rows}x{X.cols}")
    C = model.C
    XCt = X @ C.T
    S = C @ XCt + model.R
    return (X - XCt @ mat_inv(S) @ XCt.T).symmetrized()


def steady_state(model: SystemModel, tol: float = 1e-12, max_iter: int = 100_000,
                 X0: Matrix | None = None) -> Matrix:
    """Iterate ``X <- g(h(X))`` from ``X0`` (default Pi0) to the fixed point."""
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    X = model.Pi0 if X0 is None else X0
    residual = math.inf
    for _ in range(max_iter):
        nxt = riccati_g(model, lyapunov_h(model, X))
        residual = (nxt - X).max_abs()
        X = nxt
        if residual <= tol:
            break
    residual = fixed_point_residual(model, X)
    if residual > tol:
        raise ConvergenceError(
            f"Riccati iteration did not converge in {max_iter} steps (residual {residual:.3e})",
            residual=residual,
        )
    return X


def fixed_point_residual(model: SystemModel, X: Matrix) -> float:
    return (riccati_g(model, lyapunov_h(model, X)) - X).max_abs()


@dataclass(frozen=True)
class CovarianceLadder:
    """States of the remote estimator: ``matrices[i] = h^i(Pbar)``."""

    Pbar: Matrix
    matrices: tuple[Matrix, ...]
    traces: tuple[float, ...]

    @property
    def N(self) -> int:
        return len(self.traces) - 1

    def succ(self, i: int) -> int:
        return min(i + 1, self.N)

    @classmethod
    def from_traces(cls, traces: Sequence[float]) -> "CovarianceLadder":
        """Scalar-equivalent ladder built directly from a list of traces.

        Handy for tests that only care about the MDP layer.
        """
        mats = tuple(Matrix(1, 1, (float(t),)) for t in traces)
        ladder = cls(mats[0], mats, tuple(float(t) for t in traces))
        _check_monotone(ladder.traces)
        return ladder


def _check_monotone(traces: Sequence[float]) -> None:
    for i in range(len(traces) - 1):
        if traces[i + 1] < traces[i] - 1e-12 * (1.0 + abs(traces[i])):
            raise ConsistencyError(
                f"ladder traces decrease at index {i}: {traces[i]!r} -> {traces[i + 1]!r}"
            )


def build_ladder(model: SystemModel, Pbar: Matrix, N: int) -> CovarianceLadder:
    if N < 1:
        raise ConfigurationError(f"horizon N must be at least 1, got {N}")
    mats = [Pbar]
    for _ in range(N):
        mats.append(lyapunov_h(model, mats[-1]))
    traces = tuple(trace(m) for m in mats)
    _check_monotone(traces)
    return CovarianceLadder(Pbar, tuple(mats), traces)


@dataclass(frozen=True)
class KalmanState:
    xhat: tuple[float, ...]
    P: Matrix

    def __post_init__(self):
        object.__setattr__(self, "xhat", tuple(float(v) for v in self.xhat))
        if len(self.xhat) != self.P.rows:
            raise ConfigurationError("xhat length does not match P")


def kalman_gain(model: SystemModel, P_prior: Matrix) -> Matrix:
    PCt = P_prior @ model.C.T
    return PCt @ mat_inv(model.C @ PCt + model.R)


def kalman_step(model: SystemModel, state: KalmanState, y: Sequence[float]) -> KalmanState:
    if len(y) != model.m:
        raise ConfigurationError(f"measurement must have length {model.m}, got {len(y)}")
    x_prior = model.A @ Matrix.column(state.xhat)
    P_prior = lyapunov_h(model, state.P)
    K = kalman_gain(model, P_prior)
    innovation = Matrix.column(y) - model.C @ x_prior
    x_post = x_prior + K @ innovation
    P_post = (P_prior - K @ model.C @ P_prior).symmetrized()
    return KalmanState(x_post.entries, P_post)
