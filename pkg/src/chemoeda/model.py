"""Multi-drug chemotherapy scheduling problem.

A treatment schedule is an ``s x d`` matrix of drug concentrations (``s``
dose times, ``d`` drugs) encoded as a bit string of ``bits_per_dose * s * d``
bits.  Tumour growth follows a Gompertz law with a linear cell-kill term,
which is solved in closed form in log space.  Fitness is the cumulative
drug efficacy minus quadratic penalties for four families of constraint
violations (instantaneous dose, cumulative dose, tumour size, toxic side
effects).

Every function here is pure; the same inputs always give bit-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

__all__ = [
    "ProblemInstance",
    "FitnessReport",
    "InstanceError",
    "DimensionError",
    "EncodingError",
    "NumericError",
    "ERADICATION_THRESHOLD",
    "default_instance",
    "default_eta",
    "decode",
    "encode",
    "tumour_trajectory",
    "ode_oracle",
    "constraint_distances",
    "fitness",
    "is_eradicated",
    "ChemoProblem",
]

#: Tumour size (cells) below which the tumour counts as eradicated.
ERADICATION_THRESHOLD = 1e3


class InstanceError(ValueError):
    """Raised when a problem instance breaks one or more invariants.

    ``problems`` lists every violated invariant, not just the first one.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DimensionError(ValueError):
    pass


class EncodingError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def default_eta(m: int, d: int) -> np.ndarray:
    """Dense organ-risk matrix with every row summing to one."""
    k = np.arange(1, m + 1)[:, None]
    j = np.arange(1, d + 1)[None, :]
    w = 1.0 + ((3 * k + 5 * j) % 7)
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """All parameters of one chemotherapy scheduling problem.

    Vectors are indexed by drug (``kappa``, ``delta_c``, ``c_max``,
    ``c_cum``), by dose time (``dose_times``) or by organ (``c_seff``, rows of
    ``eta``).  Concentrations are in concentration units, tumour sizes in
    cells, times in time units.
    """

    s: int
    d: int
    bits_per_dose: int
    lam: float
    theta: float
    n0: float
    kappa: np.ndarray
    eta: np.ndarray
    delta_c: np.ndarray
    dose_times: np.ndarray
    c_max: np.ndarray
    c_cum: np.ndarray
    n_max: float
    c_seff: np.ndarray
    penalties: np.ndarray = field(default_factory=lambda: np.full(4, 100.0))

    def __post_init__(self):
        def arr(name, ndim):
            a = np.array(getattr(self, name), dtype=float, ndmin=ndim)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

        for name in ("kappa", "delta_c", "dose_times", "c_max", "c_cum", "c_seff", "penalties"):
            arr(name, 1)
        arr("eta", 2)
        for name in ("s", "d", "bits_per_dose"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("lam", "theta", "n0", "n_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        problems = self.check()
        if problems:
            raise InstanceError(problems)

    def check(self) -> list[str]:
        """Return a description of every violated invariant (empty if valid)."""
        out = []
        if self.s < 1:
            out.append("s >= 1")
        if self.d < 1:
            out.append("d >= 1")
        if self.bits_per_dose < 1:
            out.append("bits_per_dose >= 1")
        if not self.lam > 0:
            out.append("lambda > 0")
        if not 0 < self.n0 < self.theta:
            out.append("n0 < theta" if self.n0 > 0 else "n0 > 0")
        if not self.n_max > self.n0:
            out.append("n_max > n0")
        for name, length in (
            ("kappa", self.d),
            ("delta_c", self.d),
            ("c_max", self.d),
            ("c_cum", self.d),
            ("dose_times", self.s),
        ):
            v = getattr(self, name)
            if v.shape != (length,):
                out.append(f"len({name}) == {length}")
        if self.eta.ndim != 2 or self.eta.shape[1] != self.d:
            out.append(f"eta has {self.d} columns")
        elif self.c_seff.shape != (self.eta.shape[0],):
            out.append("len(c_seff) == rows of eta")
        if self.penalties.shape != (4,):
            out.append("len(penalties) == 4")
        for name in ("delta_c", "c_max", "c_cum", "c_seff", "penalties"):
            v = getattr(self, name)
            if v.size and not np.all(v > 0):
                out.append(f"{name} > 0")
        if self.kappa.size and not np.all(self.kappa >= 0):
            out.append("kappa >= 0")
        if self.eta.size and not np.all(self.eta >= 0):
            out.append("eta >= 0")
        t = self.dose_times
        if t.size and not (t[0] > 0 and np.all(np.diff(t) > 0)):
            out.append("dose_times strictly increasing after t0 = 0")
        for name in ("lam", "theta", "n0", "n_max"):
            if not np.isfinite(getattr(self, name)):
                out.append(f"{name} finite")
        return out

    @property
    def n_bits(self) -> int:
        return self.bits_per_dose * self.s * self.d

    @property
    def m(self) -> int:
        return self.eta.shape[0]

    @property
    def max_level(self) -> int:
        return 2**self.bits_per_dose - 1

    def replace(self, **changes) -> "ProblemInstance":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return ProblemInstance(**kw)

    def efficacy_weights(self) -> np.ndarray:
        """Per-entry weights ``W[i, j]`` so that efficacy is ``sum(W * C)``.

        ``W[i, j] = kappa_j * sum_{p >= i} exp(lam * (t_{i-1} - t_p))`` with
        ``t_0 = 0``.
        """
        t = self.dose_times
        t_prev = np.concatenate(([0.0], t[:-1]))
        expo = t_prev[:, None] - t[None, :]  # (i, p)
        decay = np.where(np.arange(self.s)[None, :] >= np.arange(self.s)[:, None],
                         np.exp(self.lam * np.minimum(expo, 0.0)), 0.0)
        return decay.sum(axis=1)[:, None] * self.kappa[None, :]


def default_instance(s: int = 10, d: int = 10, bits_per_dose: int = 4) -> ProblemInstance:
    """Built-in default instance, scaled to ``s`` dose times and ``d`` drugs.

    The numbers are modelling choices, not measured drug data: drugs share
    one efficacy, ``c_max`` sits a little below the top encodable level, and
    the untreated tumour crosses ``n_max`` before the last dose time.
    """
    top = 2**bits_per_dose - 1
    m = 4
    return ProblemInstance(
        s=s,
        d=d,
        bits_per_dose=bits_per_dose,
        lam=0.3,
        theta=1e12,
        n0=1e9,
        kappa=np.full(d, 0.095 / d * 15.0 / top),
        eta=default_eta(m, d),
        delta_c=np.ones(d),
        dose_times=np.arange(1, s + 1, dtype=float),
        c_max=np.full(d, float(round(0.85 * top))),
        c_cum=np.full(d, 0.4 * top * s),
        n_max=1e11,
        c_seff=np.full(m, 0.55 * top),
        penalties=np.full(4, 100.0),
    )


@dataclass(frozen=True)
class FitnessReport:
    efficacy: float
    distances: tuple
    penalty: float
    fitness: float
    feasible: bool
    eradicated: bool = False


def _as_bits(x, inst: ProblemInstance) -> np.ndarray:
    X = np.asarray(x)
    if X.ndim not in (1, 2) or X.shape[-1] != inst.n_bits:
        raise DimensionError(
            f"chromosome length {X.shape[-1] if X.ndim else 0} != {inst.n_bits}"
        )
    if X.size and not np.all((X == 0) | (X == 1)):
        raise DimensionError("chromosome entries must be 0 or 1")
    return X.astype(np.uint8, copy=False)


def decode(x, inst: ProblemInstance) -> np.ndarray:
    """Map a chromosome (or a batch of them) to concentration levels.

    Each group of ``bits_per_dose`` bits is read most-significant bit first,
    in row-major ``(dose time, drug)`` order, and scaled by ``delta_c``.
    Returns shape ``(s, d)`` for one chromosome, ``(n, s, d)`` for a batch.
    """
    X = _as_bits(x, inst)
    p = inst.bits_per_dose
    place = 2.0 ** np.arange(p - 1, -1, -1)
    levels = X.reshape(X.shape[:-1] + (inst.s, inst.d, p)) @ place
    return levels * inst.delta_c


def encode(c, inst: ProblemInstance) -> np.ndarray:
    """Inverse of :func:`decode` for one ``(s, d)`` schedule or a batch."""
    C = np.asarray(c, dtype=float)
    if C.shape[-2:] != (inst.s, inst.d):
        raise DimensionError(f"schedule shape {C.shape[-2:]} != {(inst.s, inst.d)}")
    levels = C / inst.delta_c
    rounded = np.rint(levels)
    if not np.allclose(levels, rounded, rtol=0, atol=1e-9):
        raise EncodingError("dose is not an integer multiple of delta_c")
    if np.any(rounded < 0) or np.any(rounded > inst.max_level):
        raise EncodingError(f"dose level outside [0, {inst.max_level}]")
    r = rounded.astype(np.int64)
    shifts = np.arange(inst.bits_per_dose - 1, -1, -1)
    bits = (r[..., None] >> shifts) & 1
    return bits.reshape(C.shape[:-2] + (inst.n_bits,)).astype(np.uint8)


def _log_trajectory(C: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    """``u(t_i) = ln(theta / N(t_i))`` for ``i = 1..s``; ``C`` is ``(..., s, d)``."""
    D = (C * inst.kappa).sum(axis=-1)  # drug term active on [t_i, t_{i+1})
    t = inst.dose_times
    u = np.empty(D.shape)
    u[..., 0] = np.log(inst.theta / inst.n0) * np.exp(-inst.lam * t[0])
    for i in range(inst.s - 1):
        decay = np.exp(-inst.lam * (t[i + 1] - t[i]))
        u[..., i + 1] = u[..., i] * decay + D[..., i] / inst.lam * (1.0 - decay)
    if not np.all(np.isfinite(u)):
        raise NumericError("non-finite value in tumour trajectory")
    return u


def tumour_trajectory(c, inst: ProblemInstance) -> np.ndarray:
    """Tumour size ``N(t_i)`` in cells at every dose time.

    Uses the exact solution of the Gompertz equation with piecewise-constant
    cell kill: in ``u = ln(theta / N)`` the dynamics are linear,
    ``u' = -lam * u + D_i`` on ``[t_i, t_{i+1})``.
    """
    C = np.asarray(c, dtype=float)
    N = inst.theta * np.exp(-_log_trajectory(C, inst))
    if not np.all(np.isfinite(N)):
        raise NumericError("tumour size overflow")
    return N


def ode_oracle(c, inst: ProblemInstance, step: float = 1e-3) -> np.ndarray:
    """Tumour sizes at the dose times by fixed-step RK4 on the raw ODE.

    Integrates ``dN/dt = N * (lam * ln(theta / N) - D(t))`` directly in
    cell counts.  Each interval between dose times is split into equal steps
    no longer than ``step``; ``step <= 1e-2`` keeps the result within 1e-8
    relative error for the default instance.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    C = np.asarray(c, dtype=float)
    D = (C * inst.kappa).sum(axis=-1)
    lam, theta = inst.lam, inst.theta

    def rhs(N, drug):
        return N * (lam * np.log(theta / N) - drug)

    bounds = np.concatenate(([0.0], inst.dose_times))
    N = np.full(D.shape[:-1], inst.n0)
    out = np.empty(D.shape)
    for k in range(inst.s):
        # [0, t_1) has no drug; [t_i, t_{i+1}) carries dose i
        drug = 0.0 if k == 0 else D[..., k - 1]
        span = bounds[k + 1] - bounds[k]
        n_steps = max(1, int(np.ceil(span / step - 1e-12)))
        h = span / n_steps
        for _ in range(n_steps):
            k1 = rhs(N, drug)
            k2 = rhs(N + 0.5 * h * k1, drug)
            k3 = rhs(N + 0.5 * h * k2, drug)
            k4 = rhs(N + h * k3, drug)
            N = N + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[..., k] = N
    return out


def _violation(g: np.ndarray, limit) -> np.ndarray:
    return (np.maximum(0.0, -g) / limit) ** 2


def _distances(C: np.ndarray, u: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    d1 = _violation(inst.c_max - C, inst.c_max).sum(axis=(-2, -1))
    d2 = _violation(inst.c_cum - C.sum(axis=-2), inst.c_cum).sum(axis=-1)
    N = inst.theta * np.exp(-u)
    d3 = _violation(inst.n_max - N, inst.n_max).sum(axis=-1)
    side = (C[..., None, :] * inst.eta).sum(axis=-1)  # (..., s, m)
    d4 = _violation(inst.c_seff - side, inst.c_seff).sum(axis=(-2, -1))
    return np.stack([d1, d2, d3, d4], axis=-1)


def constraint_distances(c, traj, inst: ProblemInstance) -> tuple:
    """Squared, limit-normalised violation of each constraint family.

    Returns ``(d1, d2, d3, d4)`` for maximum instantaneous dose, maximum
    cumulative dose, maximum tumour size and side-effect limits.  Each is
    zero exactly when its constraints hold.
    """
    C = np.asarray(c, dtype=float)
    traj = np.asarray(traj, dtype=float)
    u = np.log(inst.theta / traj)
    return tuple(float(v) for v in _distances(C, u, inst))


def _evaluate(C: np.ndarray, inst: ProblemInstance):
    u = _log_trajectory(C, inst)
    dist = _distances(C, u, inst)
    efficacy = (C * inst.efficacy_weights()).sum(axis=(-2, -1))
    penalty = (dist * inst.penalties).sum(axis=-1)
    return efficacy, dist, penalty, efficacy - penalty, u


def is_eradicated(traj, threshold: float = ERADICATION_THRESHOLD) -> bool:
    """True when the tumour drops below ``threshold`` cells at some dose time."""
    return bool(np.min(traj) < threshold)


def fitness(x, inst: ProblemInstance) -> FitnessReport:
    """Penalised fitness of one chromosome (larger is better)."""
    C = decode(x, inst)
    if C.ndim != 2:
        raise DimensionError("fitness() takes one chromosome; use ChemoProblem for batches")
    efficacy, dist, penalty, fit, u = _evaluate(C[None], inst)
    distances = tuple(float(v) for v in dist[0])
    return FitnessReport(
        efficacy=float(efficacy[0]),
        distances=distances,
        penalty=float(penalty[0]),
        fitness=float(fit[0]),
        feasible=not any(distances),
        eradicated=bool(np.max(u[0]) > np.log(inst.theta / ERADICATION_THRESHOLD)),
    )


class ChemoProblem:
    """Batch evaluator for the optimisers.

    ``evaluate(X)`` takes an ``(n, n_bits)`` 0/1 array and returns fitness
    and feasibility arrays, computed by the same arithmetic as
    :func:`fitness`.
    """

    def __init__(self, instance: ProblemInstance | None = None, chunk: int = 4096):
        self.instance = instance if instance is not None else default_instance()
        self.chunk = chunk

    @property
    def n_bits(self) -> int:
        return self.instance.n_bits

    def evaluate(self, X):
        X = np.atleast_2d(X)
        f = np.empty(len(X))
        feasible = np.empty(len(X), dtype=bool)
        for lo in range(0, len(X), self.chunk):
            C = decode(X[lo:lo + self.chunk], self.instance)
            _, dist, _, fit, _ = _evaluate(C, self.instance)
            f[lo:lo + self.chunk] = fit
            feasible[lo:lo + self.chunk] = ~dist.any(axis=-1)
        return f, feasible

    def report(self, x) -> FitnessReport:
        return fitness(x, self.instance)

    def __repr__(self):
        return f"ChemoProblem(n_bits={self.n_bits})"
