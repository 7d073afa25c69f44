import json

import numpy as np
import pytest

from mtdselect import (
    Alphabet,
    LagSet,
    MtdModel,
    diagnostics,
    model_from_dict,
    model_to_dict,
    simulate,
    transition_prob,
    validate_model,
)
from mtdselect.experiments import iid_model, random_model
from mtdselect.model import BINARY


def test_alphabet_invariants():
    a = Alphabet((0.0, 1.0, 3.0))
    assert a.size == 3
    assert a.sup_norm == 3.0
    assert a.diameter == 3.0
    assert a.min_gap == 1.0
    with pytest.raises(ValueError):
        Alphabet((1.0,))
    with pytest.raises(ValueError):
        Alphabet((1.0, 1.0))


def test_lagset_bounds():
    s = LagSet((-1, -8), 8)
    assert s.lags == (-8, -1)
    assert s.complement() == tuple(j for j in range(-8, 0) if j not in (-8, -1))
    with pytest.raises(ValueError):
        LagSet((-9,), 8)
    with pytest.raises(ValueError):
        LagSet((-1, -1), 8)


def test_validate_experiment1_model(exp1):
    assert validate_model(exp1) == []


def test_validate_reports_weight_sum():
    weights = np.array([0.3, 0.2, 0.4])  # sums to 0.9
    kernels = np.full((2, 2, 2), 0.5)
    m = MtdModel(BINARY, 2, weights, np.array([0.5, 0.5]), kernels)
    bad = validate_model(m)
    assert any("weights sum" in v for v in bad)


def test_validate_reports_kernel_row_sum():
    weights = np.array([0.5, 0.5])
    kernels = np.array([[[0.5, 0.6], [0.5, 0.5]]])
    m = MtdModel(BINARY, 1, weights, np.array([0.5, 0.5]), kernels)
    bad = validate_model(m)
    assert any("row sum" in v for v in bad)
    assert any("lag -1" in v for v in bad)


def test_transition_prob_experiment1_values(exp1):
    # lag -1 and lag -8 relevant; contexts in chronological order
    past = [0] * 8
    assert transition_prob(exp1, past)[0] == pytest.approx(0.46, abs=1e-15)
    past_j1 = [0] * 8
    past_j1[0] = 1  # lag -8 = 1
    assert transition_prob(exp1, past_j1)[0] == pytest.approx(0.62, abs=1e-15)


def test_transition_prob_is_probability_vector():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = random_model(rng, n_symbols=int(rng.integers(2, 4)), d=int(rng.integers(1, 5)))
        past = rng.integers(0, m.alphabet.size, size=m.order)
        p = transition_prob(m, past)
        assert np.all(p >= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_transition_prob_degenerate_mixture():
    m = iid_model(4, (0.3, 0.7))
    for past in ([0, 0, 0, 0], [1, 0, 1, 1]):
        assert np.array_equal(transition_prob(m, past), np.array([0.3, 0.7]))


def test_transition_prob_contract_errors(exp1):
    with pytest.raises(ValueError):
        transition_prob(exp1, [0] * 7)
    with pytest.raises(ValueError):
        transition_prob(exp1, [0] * 7 + [2])


def test_transition_depends_only_on_relevant_lags():
    # lag -2 has positive weight but identical kernel rows: irrelevant
    weights = np.array([0.4, 0.3, 0.3])
    kernels = np.array([
        [[0.2, 0.8], [0.7, 0.3]],
        [[0.6, 0.4], [0.6, 0.4]],
    ])
    m = MtdModel(BINARY, 2, weights, np.array([0.5, 0.5]), kernels)
    assert diagnostics(m).relevant.lags == (-1,)
    a = transition_prob(m, [0, 1])
    b = transition_prob(m, [1, 1])  # differs only at the irrelevant lag
    assert np.array_equal(a, b)


def test_diagnostics_experiment1(exp1):
    diag = diagnostics(exp1)
    assert diag.oscillation(-1) == pytest.approx(0.06, abs=1e-12)
    assert diag.oscillation(-8) == pytest.approx(0.16, abs=1e-12)
    assert diag.relevant.lags == (-8, -1)
    assert diag.big_delta == pytest.approx(0.78, abs=1e-12)
    assert diag.p_min == pytest.approx(0.32, abs=1e-12)
    assert diag.delta_min == pytest.approx(0.06, abs=1e-12)


def test_diagnostics_identical_rows_mean_no_relevant_lags():
    m = iid_model(3)
    diag = diagnostics(m)
    assert diag.relevant.lags == ()
    assert diag.big_delta == 1.0
    assert np.all(diag.oscillations == 0)


def test_oscillation_zero_iff_zero_weight_or_equal_rows():
    kernels = np.array([
        [[0.2, 0.8], [0.7, 0.3]],   # distinct rows, weight 0
        [[0.6, 0.4], [0.6, 0.4]],   # equal rows, positive weight
        [[0.1, 0.9], [0.8, 0.2]],   # distinct rows, positive weight
    ])
    weights = np.array([0.4, 0.0, 0.3, 0.3])
    m = MtdModel(BINARY, 3, weights, np.array([0.5, 0.5]), kernels)
    diag = diagnostics(m)
    assert diag.oscillation(-1) == 0.0
    assert diag.oscillation(-2) == 0.0
    assert diag.oscillation(-3) > 0
    assert diag.relevant.lags == (-3,)


def test_oscillation_lower_bound_general_alphabets():
    # delta_min >= sup(A)^-1 * tilde_delta_min * min gap
    rng = np.random.default_rng(17)
    for _ in range(25):
        m = random_model(rng, n_symbols=3, d=3)
        diag = diagnostics(m)
        if not len(diag.relevant):
            continue
        bound = diag.tilde_delta_min * m.alphabet.min_gap / m.alphabet.sup_norm
        assert diag.delta_min >= bound - 1e-12


def test_binary_delta_min_equals_tilde():
    rng = np.random.default_rng(23)
    for _ in range(25):
        m = random_model(rng, n_symbols=2, d=4)
        diag = diagnostics(m)
        assert diag.delta_min == pytest.approx(diag.tilde_delta_min, abs=1e-12)


def test_simulate_deterministic(exp1):
    a = simulate(exp1, 500, 11)
    b = simulate(exp1, 500, 11)
    assert np.array_equal(a.data, b.data)
    c = simulate(exp1, 500, 12)
    assert not np.array_equal(a.data, c.data)


def test_simulate_iid_frequencies():
    m = iid_model(3, (0.3, 0.7))
    n = 40_000
    seq = simulate(m, n, 4, burn_in=10)
    freq = np.bincount(seq.data, minlength=2) / n
    for a, p in enumerate((0.3, 0.7)):
        assert abs(freq[a] - p) <= 3.0 * np.sqrt(p / n)


def test_simulate_matches_transition_law(exp1, exp1_seq_100k):
    from mtdselect import count_contexts, empirical_transition

    counts = count_contexts(exp1_seq_100k, LagSet((-8, -1), 8))
    phat = empirical_transition(counts, (0, 0))
    assert phat[0] == pytest.approx(0.46, abs=0.02)


def test_simulate_rejects_invalid_model():
    weights = np.array([0.3, 0.2, 0.4])
    m = MtdModel(BINARY, 2, weights, np.array([0.5, 0.5]), np.full((2, 2, 2), 0.5))
    with pytest.raises(ValueError):
        simulate(m, 10, 0)


def test_model_json_round_trip(exp1):
    spec = model_to_dict(exp1)
    again = model_from_dict(spec)
    assert np.array_equal(again.weights, exp1.weights)
    assert np.array_equal(again.kernels, exp1.kernels)
    assert json.dumps(spec)  # JSON-serialisable


def test_model_from_dict_defaults_and_errors():
    spec = {
        "alphabet": [0, 1],
        "order": 3,
        "lambda": {"0": 0.5, "-2": 0.5},
        "p0": [0.5, 0.5],
        "kernels": {"-2": [[0.1, 0.9], [0.8, 0.2]]},
    }
    m = model_from_dict(spec)
    assert m.weight(-1) == 0.0 and m.weight(-3) == 0.0
    assert m.weight(-2) == 0.5
    bad = dict(spec, kernels={})
    with pytest.raises(ValueError):
        model_from_dict(bad)
