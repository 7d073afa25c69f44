import itertools

import numpy as np
import pytest

from mtdselect import (
    Alphabet,
    LagSet,
    SymbolSequence,
    count_contexts,
    count_joint,
    empirical_marginal,
    empirical_transition,
    load_sequence,
    simulate,
    transition_prob,
)
from mtdselect.counting import counts_to_csv_rows, sibling_groups
from mtdselect.experiments import random_model
from mtdselect.model import BINARY


def seq_of(values, alphabet=BINARY):
    return SymbolSequence(np.asarray(values, dtype=np.int64), alphabet)


def test_count_alternating_example():
    seq = seq_of([0, 1, 0, 1, 0, 1])
    counts = count_contexts(seq, LagSet((-1,), 1), 0, 6)
    assert counts.vector((0,)).tolist() == [0, 3]
    assert counts.vector((1,)).tolist() == [2, 0]
    assert sum(v.sum() for v in counts.table.values()) == 5


def test_count_constant_sequence():
    seq = seq_of([0, 0, 0, 0])
    counts = count_contexts(seq, LagSet((-1,), 1))
    assert list(counts.keys()) == [counts.key_of((0,))]
    assert counts.vector((0,)).tolist() == [3, 0]


def test_count_conservation_property():
    rng = np.random.default_rng(3)
    for _ in range(20):
        K = int(rng.integers(2, 4))
        alphabet = Alphabet(tuple(range(K)))
        n = int(rng.integers(30, 120))
        d = int(rng.integers(1, 6))
        data = rng.integers(0, K, size=n)
        seq = SymbolSequence(data, alphabet)
        size = int(rng.integers(1, d + 1))
        lags = LagSet(tuple(rng.choice(range(-d, 0), size=size, replace=False)), d)
        m = int(rng.integers(0, n - d - 1))
        counts = count_contexts(seq, lags, m, n)
        assert sum(v.sum() for v in counts.table.values()) == n - m - d


def test_marginalisation_consistency():
    rng = np.random.default_rng(4)
    data = rng.integers(0, 2, size=400)
    seq = SymbolSequence(data, BINARY)
    big = LagSet((-5, -3, -1), 5)
    small = LagSet((-5, -1), 5)
    cb = count_contexts(seq, big)
    cs = count_contexts(seq, small)
    # summing the dropped coordinate of the big table gives the small one
    acc = {}
    for key in cb.keys():
        ctx = cb.context_of(key)
        sub = (ctx[0], ctx[2])  # sorted lags are (-5, -3, -1)
        acc[sub] = acc.get(sub, np.zeros(2, dtype=np.int64)) + cb.table[key]
    for key in cs.keys():
        ctx = cs.context_of(key)
        assert np.array_equal(acc[ctx], cs.table[key])


def test_empirical_transition_cases():
    seq = seq_of([0, 1, 0, 1, 0, 1])
    counts = count_contexts(seq, LagSet((-1,), 1))
    assert empirical_transition(counts, (0,)).tolist() == [0.0, 1.0]
    assert empirical_transition(counts, (1,)).tolist() == [1.0, 0.0]
    # unseen context falls back to uniform
    seq2 = seq_of([0, 0, 0, 0])
    counts2 = count_contexts(seq2, LagSet((-1,), 1))
    assert empirical_transition(counts2, (1,)).tolist() == [0.5, 0.5]
    # balanced counts give the symmetric law
    seq3 = seq_of([0, 0, 0, 1, 0, 1])
    counts3 = count_contexts(seq3, LagSet((-1,), 1))
    assert counts3.vector((0,)).tolist() == [2, 2]
    assert empirical_transition(counts3, (0,)).tolist() == [0.5, 0.5]


def test_empirical_marginal_cases():
    seq = seq_of([0, 1, 0, 1, 0, 1])
    counts = count_contexts(seq, LagSet((-1,), 1), 0, 6)
    assert empirical_marginal(counts, (0,)) == pytest.approx(3 / 5)
    assert empirical_marginal(counts, (1,)) == pytest.approx(2 / 5)
    const = count_contexts(seq_of([0, 0, 0, 0]), LagSet((-1,), 1))
    assert empirical_marginal(const, (0,)) == 1.0


def test_marginals_sum_to_one_property():
    rng = np.random.default_rng(9)
    data = rng.integers(0, 2, size=300)
    seq = SymbolSequence(data, BINARY)
    counts = count_contexts(seq, LagSet((-2, -1), 3))
    total = sum(empirical_marginal(counts, counts.context_of(k)) for k in counts.keys())
    assert total == pytest.approx(1.0, abs=1e-12)


def test_window_errors():
    seq = seq_of([0, 1, 0, 1])
    with pytest.raises(ValueError, match="window shorter"):
        count_contexts(seq, LagSet((-1,), 3), 0, 4)
    with pytest.raises(ValueError):
        count_contexts(seq, LagSet((), 1))
    with pytest.raises(ValueError):
        count_contexts(seq, LagSet((-1,), 1), 0, 10)


def test_convergence_to_conditional_law():
    # supersets of the relevant lags give the relevant-lag law
    rng = np.random.default_rng(31)
    model = random_model(rng, n_symbols=2, d=3, n_relevant=2)
    from mtdselect import diagnostics

    diag = diagnostics(model)
    seq = simulate(model, 100_000, 77)
    rel = diag.relevant
    for extra in ([], [j for j in range(-3, 0) if j not in rel][:1]):
        lags = LagSet(tuple(sorted(set(rel.lags) | set(extra))), 3)
        counts = count_contexts(seq, lags)
        for key in counts.keys():
            ctx = counts.context_of(key)
            if counts.total(key) < 500:
                continue
            past = [0, 0, 0]
            for lag, sym in zip(lags, ctx):
                past[3 + lag] = sym
            truth = transition_prob(model, past)
            assert np.abs(empirical_transition(counts, ctx) - truth).max() <= 0.02


def test_byte_keyed_contexts_for_wide_lag_sets():
    rng = np.random.default_rng(41)
    alphabet = Alphabet((0, 1, 2))
    d = 45
    n = 120
    data = rng.integers(0, 3, size=n)
    seq = SymbolSequence(data, alphabet)
    lags = LagSet(tuple(range(-d, 0, 1))[:40], d)  # 40 coordinates: 3^41 > 2^62
    counts = count_contexts(seq, lags)
    assert not counts.packed
    assert sum(v.sum() for v in counts.table.values()) == n - d
    key = next(iter(counts.keys()))
    assert counts.key_of(counts.context_of(key)) == key
    groups = sibling_groups(counts, lags.lags[0])
    assert sum(len(v) for v in groups.values()) == len(counts.table)


def test_count_joint_matches_count_contexts():
    rng = np.random.default_rng(51)
    data = rng.integers(0, 2, size=200)
    seq = SymbolSequence(data, BINARY)
    joint = count_joint(seq, LagSet((-3,), 4), -1, 0, 200)
    # marginalising the extra-lag axis gives plain context counts on {-3}
    counts = count_contexts(seq, LagSet((-3,), 4), 0, 200)
    for key, mat in joint.items():
        assert np.array_equal(mat.sum(axis=0), counts.table[key])


def test_csv_rows_round_trip():
    seq = seq_of([0, 1, 1, 0, 1, 0, 0, 1])
    counts = count_contexts(seq, LagSet((-2, -1), 2))
    rows = list(counts_to_csv_rows(counts))
    total = sum(c for _, _, c in rows)
    assert total == len(seq) - 2


def test_load_sequence_formats(tmp_path):
    alphabet = BINARY
    p = tmp_path / "tokens.txt"
    p.write_text("0 1 1 0\n")
    assert load_sequence(p, alphabet).data.tolist() == [0, 1, 1, 0]
    p2 = tmp_path / "lines.txt"
    p2.write_text("0\n1\n1\n0\n")
    assert load_sequence(p2, alphabet).data.tolist() == [0, 1, 1, 0]
    p3 = tmp_path / "weather.csv"
    p3.write_text("rain\ndry\nrain\n")
    seq = load_sequence(p3, alphabet, symbol_map={"rain": 1, "dry": 0})
    assert seq.data.tolist() == [1, 0, 1]


def test_load_sequence_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 1\n2 0\n")
    with pytest.raises(ValueError, match="line 2"):
        load_sequence(p, BINARY)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(ValueError, match="no symbols"):
        load_sequence(empty, BINARY)
