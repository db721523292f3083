import numpy as np
import pytest

from chemoeda import default_instance


@pytest.fixture
def inst():
    return default_instance()


@pytest.fixture
def small():
    """s = d = 2 with 2 bits per dose (8-bit chromosomes)."""
    return default_instance(s=2, d=2, bits_per_dose=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class CountingProblem:
    """Wraps a problem and counts every chromosome it is asked to evaluate."""

    def __init__(self, problem):
        self.problem = problem
        self.n_bits = problem.n_bits
        self.calls = 0

    def evaluate(self, X):
        self.calls += len(np.atleast_2d(X))
        return self.problem.evaluate(X)
