import numpy as np
import pytest

from chemoeda import ChemoProblem, default_instance
from chemoeda.benchmarks import OneMax, WeightedLinear, XorBlocks
from chemoeda.linkage import (
    detect_interactions,
    fitness_oracle,
    probe_pair,
    read_report,
    write_report,
)


def xor_pair(i, j):
    def f(X):
        X = np.atleast_2d(X)
        return (X[:, i] ^ X[:, j]).astype(float)

    return f


def test_onemax_never_fires(rng):
    f = OneMax(20)
    for _ in range(20):
        x = rng.integers(0, 2, size=20, dtype=np.uint8)
        i, j = rng.choice(20, size=2, replace=False)
        assert not probe_pair(f, x, int(i), int(j))


def test_xor_pair_fires_everywhere(rng):
    f = xor_pair(3, 7)
    for _ in range(20):
        x = rng.integers(0, 2, size=10, dtype=np.uint8)
        assert probe_pair(f, x, 3, 7)


def test_probe_uses_four_evaluations():
    calls = []

    def f(X):
        calls.append(len(X))
        return OneMax(6)(X)

    probe_pair(f, np.zeros(6, dtype=np.uint8), 0, 1)
    assert calls == [4]


def test_probe_errors():
    f = OneMax(4)
    with pytest.raises(ValueError):
        probe_pair(f, np.zeros(4), 1, 1)
    with pytest.raises(IndexError):
        probe_pair(f, np.zeros(4), 1, 4)


def test_chemo_probe_matches_brute_force(inst, rng):
    from chemoeda import fitness

    f = fitness_oracle(ChemoProblem(inst))
    for _ in range(20):
        x = rng.integers(0, 2, size=inst.n_bits, dtype=np.uint8)
        i, j = (int(v) for v in rng.choice(inst.n_bits, size=2, replace=False))
        xi, xj, xij = x.copy(), x.copy(), x.copy()
        xi[i] ^= 1
        xj[j] ^= 1
        xij[[i, j]] ^= 1
        v = [fitness(y, inst).fitness for y in (x, xi, xj, xij)]
        second = v[0] + v[3] - v[1] - v[2]
        expected = abs(second) > 1e-9 * max(1.0, abs(v[0]))
        assert probe_pair(f, x, i, j) == expected


def test_separable_functions_have_no_pairs():
    assert detect_interactions(OneMax(30), 30, backgrounds=3).n_pairs == 0
    w = np.random.default_rng(0).normal(size=30) * 1e3
    assert detect_interactions(WeightedLinear(w), 30, backgrounds=3).n_pairs == 0


def test_xor_blocks_exact_pairs():
    rep = detect_interactions(XorBlocks(10), 10)
    assert rep.pair_set() == {(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)}
    assert rep.possible_pairs == 45
    assert rep.density == pytest.approx(5 / 45)


def test_more_backgrounds_never_lose_pairs():
    f = fitness_oracle(ChemoProblem(default_instance(s=3, d=3)))
    previous = set()
    for b in (1, 2, 4):
        pairs = detect_interactions(f, 36, backgrounds=b, seed=11).pair_set()
        assert previous <= pairs
        previous = pairs


def test_census_reproducible_and_counts_evaluations():
    f = fitness_oracle(ChemoProblem(default_instance(s=3, d=3)))
    a = detect_interactions(f, 36, backgrounds=2, seed=5)
    b = detect_interactions(f, 36, backgrounds=2, seed=5)
    assert np.array_equal(a.pairs, b.pairs)
    L = 36
    assert a.n_evaluations == 2 * (L + 1 + L * (L - 1) // 2)
    assert len(a.per_background) == 2


def test_census_chunking_is_invisible():
    f = fitness_oracle(ChemoProblem(default_instance(s=3, d=3)))
    a = detect_interactions(f, 36, seed=2, chunk=7)
    b = detect_interactions(f, 36, seed=2)
    assert np.array_equal(a.pairs, b.pairs)


def test_pairs_are_ordered_and_in_range():
    f = fitness_oracle(ChemoProblem(default_instance(s=3, d=3)))
    rep = detect_interactions(f, 36, seed=0)
    assert np.all(rep.pairs[:, 0] < rep.pairs[:, 1])
    assert rep.pairs.min() >= 0 and rep.pairs.max() < 36


def test_backgrounds_must_be_positive():
    with pytest.raises(ValueError):
        detect_interactions(OneMax(4), 4, backgrounds=0)


def test_report_round_trip(tmp_path):
    rep = detect_interactions(XorBlocks(8), 8, seed=3)
    path = tmp_path / "pairs.txt"
    write_report(rep, path, {"note": "x"})
    text = path.read_text()
    assert text.startswith("# n_bits = 8\n")
    back = read_report(path)
    assert back.pair_set() == rep.pair_set()
    assert (back.n_bits, back.backgrounds, back.tol, back.seed) == (8, 1, 1e-9, 3)
