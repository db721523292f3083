"""Probabilistic models over binary vectors, with a ``fit`` / ``sample`` API.

``MarginalModel`` is the univariate model used by UMDA and PBIL.
``DecisionTreeNetwork`` is a Bayesian network whose conditional
distributions are decision trees, learned greedily with a penalised
Bayesian-Dirichlet score.
"""

from __future__ import annotations

from graphlib import CycleError, TopologicalSorter

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .utils import check_bits, check_rng

__all__ = ["MarginalModel", "DecisionTreeNetwork", "TreeNode", "StructureError"]


class StructureError(ValueError):
    """The network's parent graph contains a cycle."""


class MarginalModel(BaseEstimator):
    """Independent Bernoulli per bit.

    Parameters
    ----------
    smoothing : float, default=0
        Laplace pseudo-count added to both outcomes of every bit.  Zero gives
        raw frequencies, so a converged bit stays converged.
    """

    def __init__(self, smoothing: float = 0.0):
        self.smoothing = smoothing

    def fit(self, X, y=None):
        X = check_bits(X)
        a = self.smoothing
        self.probabilities_ = (X.sum(axis=0) + a) / (len(X) + 2 * a)
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_samples: int = 1, random_state=None) -> np.ndarray:
        check_is_fitted(self, "probabilities_")
        rng = check_rng(random_state)
        return sample_marginals(self.probabilities_, n_samples, rng)


def sample_marginals(p: np.ndarray, n_samples: int, rng) -> np.ndarray:
    return (rng.random((n_samples, len(p))) < p).astype(np.uint8)


def _leaf_score(n0, n1, table=None):
    """Log BD marginal likelihood of a binary leaf under a uniform prior.

    ``table[k]`` may hold precomputed ``log(k!)`` for integer counts.
    """
    if table is None:
        return gammaln(n0 + 1.0) + gammaln(n1 + 1.0) - gammaln(n0 + n1 + 2.0)
    return table[n0] + table[n1] - table[n0 + n1 + 1]


class TreeNode:
    """Node of a conditional-probability decision tree.

    Internal nodes test ``split`` and branch to ``zero`` / ``one``; leaves
    hold the probability ``p`` that the target bit is 1.
    """

    __slots__ = ("split", "zero", "one", "p", "count")

    def __init__(self, p: float, count: int):
        self.split = None
        self.zero = None
        self.one = None
        self.p = p
        self.count = count

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            yield from self.zero.leaves()
            yield from self.one.leaves()

    def variables(self) -> set:
        if self.is_leaf:
            return set()
        return {self.split} | self.zero.variables() | self.one.variables()


class DecisionTreeNetwork(BaseEstimator):
    """Bayesian network with decision-tree conditional distributions.

    Structure is grown greedily from the empty network: at each step the
    leaf split with the largest score gain is applied, among splits that
    keep the parent graph acyclic.  The score of a leaf is the log
    Bayesian-Dirichlet marginal likelihood with uniform priors, and each
    extra leaf costs ``penalty_factor * log2(N)`` bits (``N`` samples).

    Parameters
    ----------
    penalty_factor : float, default=0.5
        Complexity penalty per additional leaf, in units of ``log2(N)`` bits.
    max_parents : int or None, default=None
        Optional cap on the number of distinct parents per variable.
    """

    def __init__(self, penalty_factor: float = 0.5, max_parents: int | None = None):
        self.penalty_factor = penalty_factor
        self.max_parents = max_parents

    def fit(self, X, y=None):
        X = check_bits(X)
        n, L = X.shape
        Xf = X.astype(np.float64)
        Xi = X.astype(np.int64)
        log_fact = gammaln(np.arange(n + 2) + 1.0)
        penalty = self.penalty_factor * np.log(n) if n > 1 else 0.0

        roots = []
        for i in range(L):
            n1 = int(X[:, i].sum())
            roots.append(TreeNode(n1 / n, n))
        parents = [set() for _ in range(L)]
        # reach[a, b]: a is an ancestor of b
        reach = np.zeros((L, L), dtype=bool)

        # active leaves: (target, node, sample rows, variables on the path)
        leaves = []
        gains = []  # per-leaf gain vectors over candidate split variables
        cached = []  # upper bound on each leaf's best admissible gain
        static_ok = []  # candidates allowed regardless of graph structure

        def add_leaf(target, node, rows, path):
            sub = Xi[rows]
            y1 = sub[:, target]
            c1 = sub.sum(axis=0)  # count of split var = 1
            c11 = y1 @ sub  # split var = 1 and target = 1
            n_all = len(rows)
            t1 = int(y1.sum())
            e = c11
            c = c1 - c11
            b = t1 - c11
            a = n_all - c1 - b
            g = (
                _leaf_score(a, b, log_fact)
                + _leaf_score(c, e, log_fact)
                - _leaf_score(n_all - t1, t1, log_fact)
                - penalty
            )
            ok = np.ones(L, dtype=bool)
            ok[target] = False
            ok[list(path)] = False
            leaves.append((target, node, rows, path))
            gains.append(g)
            static_ok.append(ok)
            cached.append(np.max(np.where(ok, g, -np.inf)))

        for i in range(L):
            add_leaf(i, roots[i], np.arange(n), frozenset())

        best = np.array(cached, dtype=float)
        alive = np.ones(len(leaves), dtype=bool)
        n_splits = 0
        while True:
            if len(best) < len(cached):
                best = np.concatenate([best, np.array(cached[len(best):], dtype=float)])
                alive = np.concatenate([alive, np.ones(len(cached) - len(alive), dtype=bool)])
            scores = np.where(alive, best, -np.inf)
            k = int(np.argmax(scores))
            if not scores[k] > 0:
                break
            target, node, rows, path = leaves[k]
            allowed = static_ok[k] & ~reach[target]
            if self.max_parents is not None and len(parents[target]) >= self.max_parents:
                cap = np.zeros(L, dtype=bool)
                cap[list(parents[target])] = True
                allowed &= cap
            g = np.where(allowed, gains[k], -np.inf)
            v = int(np.argmax(g))
            if g[v] < best[k]:
                # structure changed since this leaf was scored
                best[k] = g[v]
                continue
            # split leaf k on variable v
            alive[k] = False
            xv = Xf[rows, v]
            rows0, rows1 = rows[xv == 0], rows[xv == 1]
            node.split = v
            node.zero = TreeNode(float(Xf[rows0, target].mean()) if len(rows0) else node.p, len(rows0))
            node.one = TreeNode(float(Xf[rows1, target].mean()) if len(rows1) else node.p, len(rows1))
            new_path = path | {v}
            add_leaf(target, node.zero, rows0, new_path)
            add_leaf(target, node.one, rows1, new_path)
            if v not in parents[target]:
                parents[target].add(v)
                src = reach[:, v].copy()
                src[v] = True
                dst = reach[target].copy()
                dst[target] = True
                reach |= np.outer(src, dst)
            n_splits += 1

        self.trees_ = roots
        self.parents_ = [sorted(p) for p in parents]
        self.n_splits_ = n_splits
        self.order_ = topological_order(self.parents_)
        self.n_features_in_ = L
        return self

    def edges(self) -> list[tuple[int, int]]:
        """Directed ``(parent, child)`` pairs of the implied graph."""
        check_is_fitted(self, "parents_")
        return [(p, c) for c, ps in enumerate(self.parents_) for p in ps]

    def sample(self, n_samples: int = 1, random_state=None) -> np.ndarray:
        """Ancestral sampling in topological order."""
        check_is_fitted(self, "trees_")
        rng = check_rng(random_state)
        order = topological_order(self.parents_)
        out = np.zeros((n_samples, self.n_features_in_), dtype=np.uint8)
        u = rng.random((n_samples, self.n_features_in_))
        for i in order:
            probs = np.empty(n_samples)
            stack = [(self.trees_[i], np.arange(n_samples))]
            while stack:
                node, rows = stack.pop()
                if node.is_leaf:
                    probs[rows] = node.p
                    continue
                bit = out[rows, node.split]
                stack.append((node.zero, rows[bit == 0]))
                stack.append((node.one, rows[bit == 1]))
            out[:, i] = u[:, i] < probs
        return out


def topological_order(parents) -> list[int]:
    """Variables ordered so that parents precede children."""
    ts = TopologicalSorter({i: ps for i, ps in enumerate(parents)})
    try:
        return list(ts.static_order())
    except CycleError as exc:
        raise StructureError(f"parent graph has a cycle: {exc.args[1]}") from None
