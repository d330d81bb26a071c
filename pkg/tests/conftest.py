import numpy as np
import pytest

from psrlearn.features import FeatureSpec
from psrlearn.hmm import HmmModel, random_dense_hmm, stationary_distribution
from psrlearn.psr import PsrModel


def random_psr(d, alphabet, seed, spread=1.0):
    """Random PSR whose denominators stay well away from zero."""
    rng = np.random.default_rng(seed)
    ops = rng.uniform(0.1, 1.0, size=(alphabet, d, d)) + spread * rng.normal(0, 0.05, size=(alphabet, d, d))
    b = rng.uniform(0.5, 1.5, size=d)
    q1 = rng.uniform(0.1, 1.0, size=d)
    return PsrModel(q1, b, ops)


def deterministic_psr():
    return PsrModel(np.ones(1), np.ones(1), np.ones((1, 1, 1)))


@pytest.fixture
def dense3():
    """3-state, 3-symbol dense HMM started from its stationary distribution."""
    hmm = random_dense_hmm(3, 3, seed=11)
    return hmm.with_initial(stationary_distribution(hmm))


@pytest.fixture
def spec3():
    return FeatureSpec(3, 2, 2, True)


def constant_hmm():
    return HmmModel(np.ones((1, 1)), np.ones((1, 1)), np.ones(1))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
