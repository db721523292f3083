"""Selection and replacement operators over bit-string populations.

Ties are broken deterministically: towards the lowest member index in
truncation and replacement, and towards the first-drawn competitor inside a
tournament (which keeps equal-fitness selection uniform).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Population",
    "Selection",
    "parse_selection",
    "tournament_select",
    "truncation_select",
    "rtr_replace",
]


@dataclass
class Population:
    """Bit strings ``X`` (``n x L``, uint8) with cached fitness and feasibility."""

    X: np.ndarray
    fitness: np.ndarray
    feasible: np.ndarray
    generation: int = 0

    def __len__(self):
        return len(self.X)

    def best_index(self) -> int:
        # np.argmax returns the first maximum, i.e. the lowest index
        return int(np.argmax(self.fitness))

    def copy(self) -> "Population":
        return Population(self.X.copy(), self.fitness.copy(), self.feasible.copy(), self.generation)


@dataclass(frozen=True)
class Selection:
    """Selection scheme: ``tournament`` with pool ``size``, or ``truncation``.

    For truncation, an integer ``size`` keeps that many members and a float
    in ``(0, 1)`` keeps that fraction of the population.
    """

    kind: str = "tournament"
    size: float = 2

    def __post_init__(self):
        if self.kind not in ("tournament", "truncation"):
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if not self.size > 0:
            raise ValueError("selection size must be positive")
        if self.kind == "tournament" and int(self.size) != self.size:
            raise ValueError("tournament pool must be an integer")

    def n_keep(self, population_size: int) -> int:
        """Size of the selected set for a given population size."""
        if self.kind == "tournament":
            return population_size
        if self.size < 1:
            return max(1, int(round(self.size * population_size)))
        return int(self.size)

    def select(self, pop: Population, rng, out: int | None = None) -> np.ndarray:
        """Indices of the selected members."""
        if self.kind == "tournament":
            n_out = len(pop) if out is None else out
            return tournament_select(pop, int(self.size), n_out, rng)
        return truncation_select(pop, self.n_keep(len(pop)))

    def __str__(self):
        size = int(self.size) if self.size >= 1 else self.size
        return f"{self.kind}:{size}"


def parse_selection(text) -> Selection:
    """Parse ``"tournament:6"``, ``"truncation:40"`` or ``"truncation:0.5"``."""
    if isinstance(text, Selection):
        return text
    kind, _, size = str(text).partition(":")
    kind = kind.strip()
    if not size:
        size = "2" if kind == "tournament" else "0.5"
    value = float(size)
    if value >= 1 and value == int(value):
        value = int(value)
    return Selection(kind, value)


def tournament_select(pop: Population, pool: int, out: int, rng) -> np.ndarray:
    """Indices of ``out`` tournament winners.

    Each tournament samples ``pool`` members uniformly with replacement and
    keeps the fittest one; among equally fit competitors the first drawn
    wins.
    """
    n = len(pop)
    if n == 0:
        raise ValueError("cannot select from an empty population")
    if pool < 1 or out < 1:
        raise ValueError("pool and out must be >= 1")
    idx = rng.integers(0, n, size=(out, pool))
    first_best = np.argmax(pop.fitness[idx], axis=1)
    return idx[np.arange(out), first_best]


def truncation_select(pop: Population, keep: int) -> np.ndarray:
    """Indices of the ``keep`` fittest members, best first."""
    if not 1 <= keep <= len(pop):
        raise ValueError(f"keep must be in [1, {len(pop)}], got {keep}")
    order = np.argsort(-pop.fitness, kind="stable")
    return order[:keep]


def rtr_replace(
    pop: Population,
    offspring: np.ndarray,
    offspring_fitness: np.ndarray,
    offspring_feasible: np.ndarray,
    window: int,
    rng,
) -> Population:
    """Restricted tournament replacement (in place; also returns ``pop``).

    Each offspring is compared with the closest (Hamming) member among
    ``window`` members drawn without replacement, and replaces it only when
    strictly fitter.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(pop)
    w = min(window, n)
    for x, f, feas in zip(offspring, offspring_fitness, offspring_feasible):
        cand = rng.choice(n, size=w, replace=False)
        dist = np.count_nonzero(pop.X[cand] != x, axis=1)
        closest = cand[dist == dist.min()].min()
        if f > pop.fitness[closest]:
            pop.X[closest] = x
            pop.fitness[closest] = f
            pop.feasible[closest] = feas
    return pop
