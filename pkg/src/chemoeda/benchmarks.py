"""Synthetic test problems with known structure.

They follow the same ``evaluate(X) -> (fitness, feasible)`` protocol as
:class:`chemoeda.model.ChemoProblem`; every point counts as feasible.
"""

import numpy as np


class _Benchmark:
    def __init__(self, n_bits):
        self.n_bits = int(n_bits)

    def value(self, X):
        raise NotImplementedError

    def evaluate(self, X):
        X = np.atleast_2d(X)
        f = self.value(X).astype(float)
        return f, np.ones(len(X), dtype=bool)

    def __call__(self, X):
        return self.evaluate(X)[0]

    def __repr__(self):
        return f"{type(self).__name__}(n_bits={self.n_bits})"


class OneMax(_Benchmark):
    """Number of ones."""

    @property
    def optimum(self):
        return float(self.n_bits)

    def value(self, X):
        return X.sum(axis=1)


class WeightedLinear(_Benchmark):
    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)
        super().__init__(len(self.weights))

    def value(self, X):
        return X @ self.weights


class Trap(_Benchmark):
    """Concatenated deceptive traps of ``k`` bits.

    A block with ``u`` ones scores ``k`` if ``u == k`` and ``k - 1 - u``
    otherwise.
    """

    def __init__(self, n_bits, k=5):
        if n_bits % k:
            raise ValueError("n_bits must be a multiple of k")
        self.k = k
        super().__init__(n_bits)

    @property
    def optimum(self):
        return float(self.n_bits)

    def value(self, X):
        u = X.reshape(len(X), -1, self.k).sum(axis=2)
        return np.where(u == self.k, self.k, self.k - 1 - u).sum(axis=1)


class XorBlocks(_Benchmark):
    """Sum of XORs over consecutive bit pairs (0,1), (2,3), ..."""

    def __init__(self, n_bits):
        if n_bits % 2:
            raise ValueError("n_bits must be even")
        super().__init__(n_bits)

    def value(self, X):
        return (X[:, 0::2] ^ X[:, 1::2]).sum(axis=1)


class TwoPeaks(_Benchmark):
    """``max(ones, zeros)``: optima at all-ones and all-zeros."""

    def value(self, X):
        ones = X.sum(axis=1)
        return np.maximum(ones, self.n_bits - ones)
