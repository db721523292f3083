"""Benchmark protocols, population sizing and statistics.

Two protocols are supported:

* ``efficiency``: evaluations needed to reach the first feasible solution;
* ``quality``: best fitness found within a fixed number of evaluations.

Each experiment runs ``runs`` independent seeds (``base_seed + i``) and is
summarised by mean and sample standard deviation.  Pairs of summaries are
compared with Welch's t-test.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import __version__
from .instance_io import ParseError, instance_hash, load_instance
from .model import ChemoProblem
from .optimizers import ConfigError, make_optimizer

__all__ = [
    "ExperimentSpec",
    "ExperimentSummary",
    "RunRow",
    "TTestResult",
    "ExperimentError",
    "summarize",
    "welch_t_test",
    "compare",
    "bisection_population",
    "feasibility_predicate",
    "run_efficiency",
    "run_quality",
    "run_experiment",
    "write_results",
    "read_results",
]

log = logging.getLogger(__name__)

PROTOCOLS = ("efficiency", "quality")


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentSpec:
    optimizer: str
    config: dict = field(default_factory=dict)
    protocol: str = "efficiency"
    runs: int = 30
    cap: int = 200_000
    base_seed: int = 0
    instance: str = "default"
    label: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        if self.runs < 2:
            raise ConfigError("runs must be >= 2 for mean and standard deviation")
        pop = self.config.get("population_size")
        if pop is None:
            pop = make_optimizer(self.optimizer).population_size
        if self.cap < pop:
            raise ConfigError("evaluation cap is smaller than the population size")
        for key in ("max_evaluations", "stop", "random_state"):
            if key in self.config:
                raise ConfigError(f"{key!r} is set by the protocol, not the config")
        make_optimizer(self.optimizer, self.config)  # validates parameter names

    @property
    def name(self) -> str:
        return self.label or f"{self.optimizer}-{self.protocol}"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunRow:
    run_index: int
    seed: int
    metric_value: float
    censored: bool
    total_evaluations: int


@dataclass
class ExperimentSummary:
    """Per-run values plus their mean and sample standard deviation.

    Censored runs (no feasible solution within the cap) are kept in
    ``rows`` but left out of ``values``.
    """

    label: str
    protocol: str
    rows: list
    spec: dict | None = None
    instance_hash: str | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array([r.metric_value for r in self.rows if not r.censored], dtype=float)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def n_censored(self) -> int:
        return sum(r.censored for r in self.rows)

    @property
    def mean(self) -> float:
        return summarize(self.values)[0]

    @property
    def std(self) -> float:
        return summarize(self.values)[1]

    @classmethod
    def from_values(cls, values, label="values", protocol="efficiency"):
        rows = [RunRow(i, i, float(v), False, 0) for i, v in enumerate(values)]
        return cls(label, protocol, rows)


def summarize(values) -> tuple[float, float]:
    """Mean and sample standard deviation (divisor ``n - 1``)."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValueError("need at least two values")
    return float(v.mean()), float(v.std(ddof=1))


@dataclass(frozen=True)
class TTestResult:
    diff: float
    se: float
    t: float
    p: float
    df: float
    degenerate: bool = False


def _moments(x):
    if isinstance(x, ExperimentSummary):
        return x.mean, x.std, x.n
    if isinstance(x, tuple) and len(x) == 3:
        return float(x[0]), float(x[1]), int(x[2])
    m, s = summarize(x)
    return m, s, len(x)


def welch_t_test(a, b) -> TTestResult:
    """Welch's unequal-variance t-test of ``mean(a) - mean(b)``.

    ``a`` and ``b`` may be summaries, raw value sequences or
    ``(mean, std, n)`` tuples.  The p-value is two-sided.
    """
    ma, sa, na = _moments(a)
    mb, sb, nb = _moments(b)
    if na < 2 or nb < 2:
        raise ValueError("both samples need n >= 2")
    va, vb = sa**2 / na, sb**2 / nb
    se = math.sqrt(va + vb)
    diff = ma - mb
    if se == 0:
        if diff == 0:
            return TTestResult(0.0, 0.0, 0.0, 1.0, float("nan"), degenerate=True)
        return TTestResult(diff, 0.0, math.copysign(math.inf, diff), 0.0, float("nan"), True)
    t = diff / se
    df = (va + vb) ** 2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return TTestResult(diff, se, t, p, df)


def compare(summaries) -> list[tuple[str, str, TTestResult]]:
    """All-pairs Welch tests in argument order: (0,1), (0,2), ..., (1,2), ..."""
    summaries = list(summaries)
    protocols = {s.protocol for s in summaries}
    if len(protocols) > 1:
        raise ExperimentError(f"cannot compare mixed protocols: {sorted(protocols)}")
    out = []
    for i, a in enumerate(summaries):
        for b in summaries[i + 1:]:
            out.append((a.label, b.label, welch_t_test(a, b)))
    return out


def bisection_population(success, lo: int, hi: int, target_rate: float = 0.9,
                         trials: int = 10, seed: int = 0, cap: int = 10**6) -> int:
    """Smallest reliable population size, to within a factor of 1.25.

    ``success(n, seed)`` reports whether one run with population ``n``
    succeeds.  A size is reliable when at least ``target_rate`` of
    ``trials`` runs (seeds ``seed .. seed + trials - 1``) succeed.  ``hi``
    is doubled until reliable, then ``[lo, hi]`` is bisected until
    ``hi / lo <= 1.25``.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    cache = {}

    def reliable(n):
        if n not in cache:
            wins = sum(bool(success(n, seed + t)) for t in range(trials))
            cache[n] = wins >= target_rate * trials
            log.debug("population %d: %d/%d", n, wins, trials)
        return cache[n]

    if reliable(lo):
        return lo
    while not reliable(hi):
        lo, hi = hi, 2 * hi
        if hi > cap:
            raise ExperimentError(f"no reliable population size up to {cap}")
    while hi / lo > 1.25 and hi - lo > 1:
        mid = (lo + hi) // 2
        if reliable(mid):
            hi = mid
        else:
            lo = mid
    return hi


def feasibility_predicate(kind: str, problem, config=None, budget: int = 50_000):
    """``success(n, seed)``: a run with population ``n`` finds a feasible point."""
    config = dict(config or {})

    def success(n, seed):
        cfg = dict(config, population_size=n, max_evaluations=max(budget, n), stop="feasible")
        opt = make_optimizer(kind, cfg, seed).fit(problem)
        return opt.record_.first_feasible is not None

    return success


def _problem_for(spec: ExperimentSpec, problem):
    if problem is not None:
        return problem, None
    inst = load_instance(spec.instance)
    return ChemoProblem(inst), instance_hash(inst)


def _one_run(spec: ExperimentSpec, problem, index: int) -> RunRow:
    seed = spec.base_seed + index
    cfg = dict(spec.config, max_evaluations=spec.cap)
    cfg["stop"] = "feasible" if spec.protocol == "efficiency" else "budget"
    rec = make_optimizer(spec.optimizer, cfg, seed).fit(problem).record_
    if spec.protocol == "efficiency":
        censored = rec.first_feasible is None
        value = float("nan") if censored else float(rec.first_feasible)
    else:
        censored = False
        value = rec.best_fitness
    return RunRow(index, seed, value, censored, rec.total_evaluations)


def _run(spec: ExperimentSpec, problem=None, n_jobs: int = 1) -> ExperimentSummary:
    problem, ihash = _problem_for(spec, problem)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_one_run)(spec, problem, i) for i in range(spec.runs)
    )
    rows = sorted(rows, key=lambda r: r.run_index)
    summary = ExperimentSummary(spec.name, spec.protocol, rows, spec.to_dict(), ihash)
    if summary.n_censored:
        if summary.n == 0:
            raise ExperimentError(
                f"{spec.name}: no run found a feasible solution within {spec.cap} evaluations"
            )
        warnings.warn(
            f"{spec.name}: {summary.n_censored} of {spec.runs} runs censored at {spec.cap} "
            "evaluations and excluded from the statistics",
            stacklevel=2,
        )
    return summary


def run_efficiency(spec: ExperimentSpec, problem=None, n_jobs: int = 1) -> ExperimentSummary:
    """Evaluations to the first feasible solution, over ``spec.runs`` seeds."""
    if spec.protocol != "efficiency":
        raise ConfigError("spec.protocol must be 'efficiency'")
    return _run(spec, problem, n_jobs)


def run_quality(spec: ExperimentSpec, problem=None, n_jobs: int = 1) -> ExperimentSummary:
    """Best fitness within exactly ``spec.cap`` evaluations, over ``spec.runs`` seeds."""
    if spec.protocol != "quality":
        raise ConfigError("spec.protocol must be 'quality'")
    return _run(spec, problem, n_jobs)


def run_experiment(spec: ExperimentSpec, problem=None, n_jobs: int = 1) -> ExperimentSummary:
    if spec.protocol == "efficiency":
        return run_efficiency(spec, problem, n_jobs)
    return run_quality(spec, problem, n_jobs)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_results(summary: ExperimentSummary, path) -> Path:
    """Write the per-run CSV (with header and summary footer) and a
    ``.meta.json`` sidecar echoing the spec.  Returns the sidecar path."""
    path = Path(path)
    spec_json = json.dumps(summary.spec, sort_keys=True)
    lines = [
        f"# chemoeda {__version__} results",
        f"# label = {summary.label}",
        f"# protocol = {summary.protocol}",
        f"# instance_hash = {summary.instance_hash}",
        f"# spec = {spec_json}",
        "run_index,seed,metric_value,censored,total_evaluations",
    ]
    for r in summary.rows:
        lines.append(
            f"{r.run_index},{r.seed},{_fmt(r.metric_value)},{int(r.censored)},{r.total_evaluations}"
        )
    lines.append("# summary")
    lines.append(f"# n = {summary.n}")
    lines.append(f"# censored = {summary.n_censored}")
    if summary.n >= 2:
        lines.append(f"# mean = {summary.mean!r}")
        lines.append(f"# std = {summary.std!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = path.with_suffix(".meta.json")
    meta.write_text(
        json.dumps(
            {
                "tool": "chemoeda",
                "version": __version__,
                "label": summary.label,
                "protocol": summary.protocol,
                "instance_hash": summary.instance_hash,
                "spec": summary.spec,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return meta


def read_results(path) -> ExperimentSummary:
    """Read a file written by :func:`write_results`; raises ParseError."""
    header, rows = {}, []
    in_footer = False
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.startswith("#"):
            if line.strip() == "# summary":
                in_footer = True
            elif not in_footer:
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
            continue
        if not line.strip() or line.startswith("run_index"):
            continue
        try:
            idx, seed, value, censored, total = line.split(",")
            rows.append(RunRow(int(idx), int(seed), float(value), censored == "1", int(total)))
        except ValueError:
            raise ParseError(f"{path}: malformed result row {line!r}", lineno) from None
    if "protocol" not in header:
        raise ParseError(f"{path}: not a results file (no protocol header)")
    spec = json.loads(header["spec"]) if header.get("spec") not in (None, "None") else None
    ihash = header.get("instance_hash")
    return ExperimentSummary(
        header.get("label", Path(path).stem),
        header["protocol"],
        rows,
        spec,
        None if ihash == "None" else ihash,
    )
