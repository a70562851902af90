import numpy as np
import pytest
from hypothesis import strategies as st

from chanprice import GameConfig, Matrix, SystemModel, build_ladder, steady_state
from chanprice.estimation import CovarianceLadder


def study_model() -> SystemModel:
    return SystemModel(
        Matrix.diag([1.2, 0.9]),
        Matrix.from_rows([[1.0, 0.0]]),
        Matrix.diag([0.3, 0.3]),
        Matrix(1, 1, (0.3,)),
    )


STUDY1 = GameConfig(lambda1=0.99, lambda2=0.2, W0=5.0, WL=10.0, WH=100.0, zeta=0.5, N=20)
STUDY2 = GameConfig(lambda1=0.99, lambda2=0.2, W0=5.0, WL=5.3, WH=5.5, zeta=0.5, N=5)

SCALAR_PBAR = (-0.3 + np.sqrt(0.09 + 4 * 0.09)) / 2  # root of P^2 + 0.3 P - 0.09


@pytest.fixture(scope="session")
def model():
    return study_model()


@pytest.fixture(scope="session")
def pbar(model):
    return steady_state(model)


@pytest.fixture(scope="session")
def ladder1(model, pbar):
    return build_ladder(model, pbar, STUDY1.N)


@pytest.fixture(scope="session")
def ladder2(model, pbar):
    return build_ladder(model, pbar, STUDY2.N)


@pytest.fixture(scope="session")
def scalar_model():
    return SystemModel.scalar(1.0, 1.0, 0.3, 0.3)


def random_game(rng: np.random.Generator, N: int):
    """A random (ladder, config) pair with a strictly increasing ladder."""
    lam2 = rng.uniform(0.05, 0.8)
    lam1 = rng.uniform(lam2 + 0.05, 0.999)
    W0 = rng.uniform(0.0, 5.0)
    WL = W0 + rng.uniform(0.1, 5.0)
    WH = WL + rng.uniform(0.1, 20.0)
    zeta = rng.uniform(0.05, 0.95)
    traces = np.cumsum(np.concatenate([[rng.uniform(0.1, 2.0)], rng.uniform(0.05, 3.0, N)]))
    cfg = GameConfig(lam1, lam2, W0, WL, WH, zeta, N)
    return CovarianceLadder.from_traces(traces), cfg


@st.composite
def games(draw, max_N=4):
    N = draw(st.integers(1, max_N))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_game(np.random.default_rng(seed), N)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
