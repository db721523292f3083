"""Evolutionary optimisers over fixed-length bit strings.

All optimisers maximise ``problem.evaluate(X) -> (fitness, feasible)`` and
share one generational driver: build the initial population, step until a
stop condition holds, and keep an exact count of fitness evaluations.

    >>> from chemoeda import UMDA, ChemoProblem
    >>> opt = UMDA(population_size=112, selection="tournament:6",
    ...            stop="feasible", random_state=0).fit(ChemoProblem())
    >>> opt.record_.first_feasible  # doctest: +SKIP
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .distributions import DecisionTreeNetwork, MarginalModel, sample_marginals
from .selection import Population, parse_selection, rtr_replace, truncation_select
from .utils import check_positive_int, check_rng

__all__ = [
    "RunRecord",
    "ConfigError",
    "GA",
    "UMDA",
    "PBIL",
    "HBOA",
    "OPTIMIZERS",
    "make_optimizer",
    "run_optimizer",
    "pbil_update",
]

STOP_CONDITIONS = ("budget", "feasible", "target")


class ConfigError(ValueError):
    pass


@dataclass
class RunRecord:
    """Outcome of one optimiser run.

    ``trace`` holds one ``(generation, evaluations, best_so_far,
    population_mean)`` row per generation, generation 0 being the initial
    population.  ``first_feasible`` is the 1-based index of the evaluation
    that first produced a feasible solution, or ``None``.
    """

    kind: str
    seed: int | None
    config: dict
    trace: list = field(default_factory=list)
    first_feasible: int | None = None
    best_x: np.ndarray | None = None
    best_fitness: float = -np.inf
    best_report: object = None
    total_evaluations: int = 0


class _Evaluator:
    """Counts evaluations, enforces the budget and tracks the best point."""

    def __init__(self, problem, budget: int):
        self.problem = problem
        self.budget = budget
        self.count = 0
        self.first_feasible = None
        self.best_fitness = -np.inf
        self.best_x = None

    @property
    def exhausted(self) -> bool:
        return self.count >= self.budget

    def __call__(self, X):
        k = min(len(X), self.budget - self.count)
        X = X[:k]
        if k == 0:
            return X, np.empty(0), np.empty(0, dtype=bool)
        f, feasible = self.problem.evaluate(X)
        f = np.asarray(f, dtype=float)
        feasible = np.asarray(feasible, dtype=bool)
        if self.first_feasible is None and feasible.any():
            self.first_feasible = self.count + int(np.argmax(feasible)) + 1
        i = int(np.argmax(f))
        if f[i] > self.best_fitness:
            self.best_fitness = float(f[i])
            self.best_x = X[i].copy()
        self.count += k
        return X, f, feasible


class BaseOptimizer(BaseEstimator):
    """Generational driver; subclasses implement ``_init_state`` and ``step``."""

    kind = None

    def _validate(self, n_bits):
        check_positive_int(self.population_size, "population_size", 2)
        check_positive_int(self.max_evaluations, "max_evaluations")
        if self.max_evaluations < self.population_size:
            raise ConfigError("max_evaluations is smaller than the initial population")
        if self.stop not in STOP_CONDITIONS:
            raise ConfigError(f"stop must be one of {STOP_CONDITIONS}")
        if self.stop == "target" and self.target_fitness is None:
            raise ConfigError("stop='target' needs target_fitness")
        try:
            sel = parse_selection(self.selection)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        keep = sel.n_keep(self.population_size)
        if sel.kind == "truncation" and not 1 <= keep <= self.population_size:
            raise ConfigError("truncation must keep between 1 and population_size members")
        return sel

    def _init_state(self, n_bits, rng):
        pass

    def _done(self, ev) -> bool:
        if ev.exhausted:
            return True
        if self.stop == "feasible":
            return ev.first_feasible is not None
        if self.stop == "target":
            return ev.best_fitness >= self.target_fitness
        return False

    def fit(self, problem, y=None):
        """Run the optimiser on ``problem``; results land in ``record_``."""
        n_bits = problem.n_bits
        self.selection_ = self._validate(n_bits)
        rng = check_rng(self.random_state)
        ev = _Evaluator(problem, self.max_evaluations)
        self._init_state(n_bits, rng)

        X0 = rng.integers(0, 2, size=(self.population_size, n_bits), dtype=np.uint8)
        X0, f0, feas0 = ev(X0)
        pop = Population(X0, f0, feas0, 0)
        trace = [(0, ev.count, ev.best_fitness, float(pop.fitness.mean()))]
        while not self._done(ev):
            pop = self.step(pop, ev, rng)
            pop.generation += 1
            trace.append((pop.generation, ev.count, ev.best_fitness, float(pop.fitness.mean())))

        record = RunRecord(
            kind=self.kind,
            seed=self.random_state if not isinstance(self.random_state, np.random.Generator) else None,
            config=self.get_params(),
            trace=trace,
            first_feasible=ev.first_feasible,
            best_x=ev.best_x,
            best_fitness=ev.best_fitness,
            total_evaluations=ev.count,
        )
        if hasattr(problem, "report") and ev.best_x is not None:
            record.best_report = problem.report(ev.best_x)
        self.record_ = record
        self.population_ = pop
        self.best_x_ = ev.best_x
        self.best_fitness_ = ev.best_fitness
        self.n_evaluations_ = ev.count
        return self

    def sample(self, n_samples=1, random_state=None) -> np.ndarray:
        """Draw ``n_samples`` chromosomes from what the fitted run learned.

        EDAs sample their last probabilistic model; the GA, which has no
        model, draws members of its final population with replacement.
        """
        check_is_fitted(self, "population_")
        n = check_positive_int(n_samples, "n_samples")
        return self._sample(n, check_rng(random_state))

    def _sample(self, n, rng):
        idx = rng.integers(0, len(self.population_), size=n)
        return self.population_.X[idx].copy()

    def _mating_pool(self, pop, n, rng):
        sel = parse_selection(self.selection)
        if sel.kind == "tournament":
            return sel.select(pop, rng, out=n)
        kept = truncation_select(pop, sel.n_keep(len(pop)))
        return kept[rng.integers(0, len(kept), size=n)]

    def _replace_with_elite(self, pop, ev, offspring):
        """Evaluate offspring; next population is the current best plus offspring."""
        elite = pop.best_index()
        X, f, feas = ev(offspring)
        if len(X) < len(offspring):
            return pop  # budget ran out mid-generation
        return Population(
            np.vstack([pop.X[elite:elite + 1], X]),
            np.concatenate([[pop.fitness[elite]], f]),
            np.concatenate([[pop.feasible[elite]], feas]),
            pop.generation,
        )


class GA(BaseOptimizer):
    """Generational genetic algorithm with one-point crossover and elitism 1.

    Parameters
    ----------
    crossover_rate : float, default=0.9
    mutation_rate : float or None, default=None
        Per-bit flip probability; ``None`` means ``1 / n_bits``.
    """

    kind = "ga"

    def __init__(
        self,
        population_size=100,
        selection="tournament:2",
        crossover_rate=0.9,
        mutation_rate=None,
        max_evaluations=100_000,
        stop="budget",
        target_fitness=None,
        random_state=None,
    ):
        self.population_size = population_size
        self.selection = selection
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.max_evaluations = max_evaluations
        self.stop = stop
        self.target_fitness = target_fitness
        self.random_state = random_state

    def step(self, pop, ev, rng):
        n, L = pop.X.shape
        n_off = n - 1
        n_par = n_off + (n_off % 2)
        parents = pop.X[self._mating_pool(pop, n_par, rng)].copy()
        a, b = parents[0::2], parents[1::2]
        cross = rng.random(len(a)) < self.crossover_rate
        cuts = rng.integers(1, L, size=len(a)) if L > 1 else np.ones(len(a), dtype=int)
        tail = (np.arange(L)[None, :] >= cuts[:, None]) & cross[:, None]
        a2 = np.where(tail, b, a)
        b2 = np.where(tail, a, b)
        children = np.empty_like(parents)
        children[0::2], children[1::2] = a2, b2
        p_m = 1.0 / L if self.mutation_rate is None else self.mutation_rate
        children ^= (rng.random(children.shape) < p_m).astype(np.uint8)
        return self._replace_with_elite(pop, ev, children[:n_off])


class UMDA(BaseOptimizer):
    """Univariate marginal distribution algorithm with elitism 1.

    Parameters
    ----------
    smoothing : float, default=0
        Laplace pseudo-count for the marginals (0 = raw frequencies).
    """

    kind = "umda"

    def __init__(
        self,
        population_size=100,
        selection="truncation:0.5",
        smoothing=0.0,
        max_evaluations=100_000,
        stop="budget",
        target_fitness=None,
        random_state=None,
    ):
        self.population_size = population_size
        self.selection = selection
        self.smoothing = smoothing
        self.max_evaluations = max_evaluations
        self.stop = stop
        self.target_fitness = target_fitness
        self.random_state = random_state

    def _init_state(self, n_bits, rng):
        self.model_ = None

    def step(self, pop, ev, rng):
        selected = parse_selection(self.selection).select(pop, rng)
        self.model_ = MarginalModel(self.smoothing).fit(pop.X[selected])
        offspring = self.model_.sample(len(pop) - 1, rng)
        return self._replace_with_elite(pop, ev, offspring)

    def _sample(self, n, rng):
        model = self.model_ or MarginalModel(self.smoothing).fit(self.population_.X)
        return model.sample(n, rng)


def pbil_update(prob, selected, learning_rate: float) -> np.ndarray:
    """Move the probability vector towards the marginals of ``selected``.

    ``learning_rate = 1`` gives exactly the UMDA marginals and ``0`` leaves
    the vector unchanged.
    """
    if not 0.0 <= learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in [0, 1]")
    prob = np.asarray(prob, dtype=float)
    if np.any(prob < 0) or np.any(prob > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    marg = np.asarray(selected, dtype=float).mean(axis=0)
    if learning_rate == 1.0:
        return marg
    return (1.0 - learning_rate) * prob + learning_rate * marg


class PBIL(BaseOptimizer):
    """Population-based incremental learning over the selected set, elitism 1."""

    kind = "pbil"

    def __init__(
        self,
        population_size=100,
        selection="truncation:0.5",
        learning_rate=0.1,
        max_evaluations=100_000,
        stop="budget",
        target_fitness=None,
        random_state=None,
    ):
        self.population_size = population_size
        self.selection = selection
        self.learning_rate = learning_rate
        self.max_evaluations = max_evaluations
        self.stop = stop
        self.target_fitness = target_fitness
        self.random_state = random_state

    def _init_state(self, n_bits, rng):
        self.probabilities_ = np.full(n_bits, 0.5)

    def step(self, pop, ev, rng):
        selected = parse_selection(self.selection).select(pop, rng)
        self.probabilities_ = pbil_update(self.probabilities_, pop.X[selected], self.learning_rate)
        offspring = sample_marginals(self.probabilities_, len(pop) - 1, rng)
        return self._replace_with_elite(pop, ev, offspring)

    def _sample(self, n, rng):
        return sample_marginals(self.probabilities_, n, rng)


class HBOA(BaseOptimizer):
    """Bayesian-network EDA with decision-tree models and restricted
    tournament replacement.

    Parameters
    ----------
    n_offspring : int or None, default=None
        New solutions per generation; ``None`` means ``population_size``.
    window : int or None, default=None
        Replacement window; ``None`` means ``min(n_bits, population_size // 20)``
        (at least 1).
    penalty_factor : float, default=0.5
        Model complexity penalty, see :class:`DecisionTreeNetwork`.
    max_parents : int or None, default=None
    """

    kind = "hboa"

    def __init__(
        self,
        population_size=100,
        selection="truncation:0.5",
        n_offspring=None,
        window=None,
        penalty_factor=0.5,
        max_parents=None,
        max_evaluations=100_000,
        stop="budget",
        target_fitness=None,
        random_state=None,
    ):
        self.population_size = population_size
        self.selection = selection
        self.n_offspring = n_offspring
        self.window = window
        self.penalty_factor = penalty_factor
        self.max_parents = max_parents
        self.max_evaluations = max_evaluations
        self.stop = stop
        self.target_fitness = target_fitness
        self.random_state = random_state

    def _init_state(self, n_bits, rng):
        w = self.window
        if w is None:
            w = max(1, min(n_bits, self.population_size // 20))
        self.window_ = check_positive_int(w, "window")
        self.n_splits_ = []
        self.model_ = None

    def step(self, pop, ev, rng):
        selected = parse_selection(self.selection).select(pop, rng)
        self.model_ = DecisionTreeNetwork(self.penalty_factor, self.max_parents).fit(pop.X[selected])
        self.n_splits_.append(self.model_.n_splits_)
        n_off = self.n_offspring or len(pop)
        X, f, feas = ev(self.model_.sample(n_off, rng))
        return rtr_replace(pop, X, f, feas, self.window_, rng)

    def _sample(self, n, rng):
        model = self.model_
        if model is None:
            model = DecisionTreeNetwork(self.penalty_factor, self.max_parents).fit(self.population_.X)
        return model.sample(n, rng)


OPTIMIZERS = {"ga": GA, "umda": UMDA, "pbil": PBIL, "hboa": HBOA}


def make_optimizer(kind: str, config: dict | None = None, seed=None) -> BaseOptimizer:
    try:
        cls = OPTIMIZERS[kind]
    except KeyError:
        raise ConfigError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None
    config = dict(config or {})
    valid = cls().get_params()
    unknown = set(config) - set(valid)
    if unknown:
        raise ConfigError(f"unknown {kind} parameters: {sorted(unknown)}")
    if seed is not None:
        config["random_state"] = seed
    return cls(**config)


def run_optimizer(kind: str, problem, config: dict | None = None, seed=None) -> RunRecord:
    """Run one optimiser and return its :class:`RunRecord`."""
    return make_optimizer(kind, config, seed).fit(problem).record_
