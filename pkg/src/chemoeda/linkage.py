"""Pairwise linkage detection by perturbation probes.

Two bit positions ``i`` and ``j`` interact at a background ``x`` when the
second difference

    f(x) + f(x ^ e_i ^ e_j) - f(x ^ e_i) - f(x ^ e_j)

is nonzero (beyond a tolerance).  A linear function of the bits never
triggers a probe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .utils import check_rng

__all__ = [
    "InteractionReport",
    "probe_pair",
    "detect_interactions",
    "fitness_oracle",
    "write_report",
    "read_report",
]


def fitness_oracle(problem):
    """Batch oracle ``X -> fitness`` from an ``evaluate``-style problem."""

    def f(X):
        return problem.evaluate(X)[0]

    return f


def _threshold(f0, tol):
    return tol * np.maximum(1.0, np.abs(f0))


def probe_pair(f, x, i: int, j: int, tol: float = 1e-9) -> bool:
    """True when bits ``i`` and ``j`` interact at background ``x``.

    Uses one batch of four evaluations.  ``tol`` is relative to
    ``max(1, |f(x)|)``.
    """
    x = np.asarray(x, dtype=np.uint8)
    L = len(x)
    if i == j:
        raise ValueError("i and j must differ")
    if not (0 <= i < L and 0 <= j < L):
        raise IndexError("bit position out of range")
    X = np.tile(x, (4, 1))
    X[1, i] ^= 1
    X[2, j] ^= 1
    X[3, [i, j]] ^= 1
    v = np.asarray(f(X), dtype=float)
    return bool(abs(v[0] + v[3] - v[1] - v[2]) > _threshold(v[0], tol))


@dataclass
class InteractionReport:
    """Pairs ``(i, j)``, ``i < j``, flagged as interacting."""

    n_bits: int
    pairs: np.ndarray
    backgrounds: int
    tol: float
    seed: int | None
    n_evaluations: int = 0
    per_background: list = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def possible_pairs(self) -> int:
        return self.n_bits * (self.n_bits - 1) // 2

    @property
    def density(self) -> float:
        return self.n_pairs / self.possible_pairs if self.possible_pairs else 0.0

    def pair_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.pairs}


def detect_interactions(f, n_bits: int, backgrounds: int = 1, tol: float = 1e-9,
                        seed=0, chunk: int = 8192) -> InteractionReport:
    """Probe every unordered pair at ``backgrounds`` random backgrounds.

    A pair is flagged if any probe fires.  Backgrounds are drawn in sequence
    from one generator, so a run with more backgrounds extends (and never
    shrinks) the flagged set of a run with fewer.  Evaluations of ``f(x)``
    and ``f(x ^ e_i)`` are shared by all pairs probed at the same ``x``.
    """
    if backgrounds < 1:
        raise ValueError("backgrounds must be >= 1")
    L = int(n_bits)
    rng = check_rng(seed)
    iu, ju = np.triu_indices(L, k=1)
    flagged = np.zeros(len(iu), dtype=bool)
    n_eval = 0
    per_background = []
    for _ in range(backgrounds):
        x = rng.integers(0, 2, size=L, dtype=np.uint8)
        singles = np.tile(x, (L + 1, 1))
        singles[np.arange(1, L + 1), np.arange(L)] ^= 1
        v = np.asarray(f(singles), dtype=float)
        f0, fi = v[0], v[1:]
        n_eval += L + 1
        thr = _threshold(f0, tol)
        fired = np.zeros(len(iu), dtype=bool)
        for lo in range(0, len(iu), chunk):
            a, b = iu[lo:lo + chunk], ju[lo:lo + chunk]
            X = np.tile(x, (len(a), 1))
            rows = np.arange(len(a))
            X[rows, a] ^= 1
            X[rows, b] ^= 1
            fij = np.asarray(f(X), dtype=float)
            n_eval += len(a)
            fired[lo:lo + chunk] = np.abs(f0 + fij - fi[a] - fi[b]) > thr
        per_background.append(int(fired.sum()))
        flagged |= fired
    pairs = np.column_stack([iu[flagged], ju[flagged]])
    return InteractionReport(
        n_bits=L,
        pairs=pairs,
        backgrounds=backgrounds,
        tol=tol,
        seed=seed if not isinstance(seed, np.random.Generator) else None,
        n_evaluations=n_eval,
        per_background=per_background,
    )


def write_report(report: InteractionReport, path, extra_header: dict | None = None) -> None:
    """Header lines ``# key = value`` followed by one ``i,j`` line per pair."""
    header = {
        "n_bits": report.n_bits,
        "backgrounds": report.backgrounds,
        "tol": repr(report.tol),
        "seed": report.seed,
        "pairs": report.n_pairs,
        "possible_pairs": report.possible_pairs,
        "density": f"{report.density:.6f}",
        **(extra_header or {}),
    }
    lines = [f"# {k} = {v}" for k, v in header.items()]
    lines.extend(f"{i},{j}" for i, j in report.pairs)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> InteractionReport:
    header, pairs = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            i, j = line.split(",")
            pairs.append((int(i), int(j)))
    seed = header.get("seed")
    return InteractionReport(
        n_bits=int(header["n_bits"]),
        pairs=np.array(pairs, dtype=int).reshape(-1, 2),
        backgrounds=int(header["backgrounds"]),
        tol=float(header["tol"]),
        seed=None if seed in (None, "None") else int(seed),
    )
