"""
Linear-chain CRF against exhaustive path enumeration
"""

import itertools
import math

import numpy as np
import pytest

from src.crf import MASKED, apply_mask, crf_nll, forward_logz, path_score, viterbi
from src.exceptions import InputError, ShapeError
from src.numcore import Variables, grad_check, softmax_xent


def _random_instance(rng, n, K):
    emissions = rng.normal(size=(n, K))
    transitions = apply_mask(rng.normal(size=(K + 2, K + 2)))
    return emissions, transitions


def _all_paths(n, K):
    return [list(p) for p in itertools.product(range(K), repeat=n)]


def _brute_logz(emissions, transitions):
    n, K = emissions.shape
    scores = [path_score(emissions, transitions, p) for p in _all_paths(n, K)]
    peak = max(scores)
    return peak + math.log(sum(math.exp(s - peak) for s in scores))


def _brute_best(emissions, transitions):
    n, K = emissions.shape
    # itertools.product is lexicographic, so max() keeps the lowest-id path among ties
    return max(_all_paths(n, K), key=lambda p: path_score(emissions, transitions, p))


def test_logz_three_by_two():
    emissions, transitions = _random_instance(np.random.default_rng(0), 3, 2)
    logz, _ = forward_logz(emissions, transitions)
    assert logz == pytest.approx(_brute_logz(emissions, transitions), abs=1e-8)


def test_logz_and_viterbi_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n, K = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        emissions, transitions = _random_instance(rng, n, K)
        logz, _ = forward_logz(emissions, transitions)
        assert logz == pytest.approx(_brute_logz(emissions, transitions), abs=1e-8)
        path, score = viterbi(emissions, transitions)
        assert path == _brute_best(emissions, transitions)
        assert score == pytest.approx(path_score(emissions, transitions, path), abs=1e-9)


def test_viterbi_four_by_three():
    emissions, transitions = _random_instance(np.random.default_rng(7), 4, 3)
    path, score = viterbi(emissions, transitions)
    best = _brute_best(emissions, transitions)
    assert path == best
    assert score == pytest.approx(path_score(emissions, transitions, best), abs=1e-9)


def test_viterbi_single_position():
    emissions = np.array([[0.1, 2.0, 0.5]])
    transitions = apply_mask(np.zeros((5, 5)))
    path, _ = viterbi(emissions, transitions)
    assert path == [1]


def test_viterbi_ties_go_to_lowest_tag():
    emissions = np.zeros((4, 3))
    transitions = apply_mask(np.zeros((5, 5)))
    path, score = viterbi(emissions, transitions)
    assert path == [0, 0, 0, 0]
    assert score == 0.0


def test_single_position_reduces_to_softmax_xent():
    emissions = np.array([[0.3, -1.2, 2.0]])
    transitions = np.zeros((5, 5))
    loss, _, _ = crf_nll(emissions, transitions, [2])
    expected, _ = softmax_xent(emissions[0], 2)
    assert loss == pytest.approx(expected, abs=1e-12)


def test_dominant_gold_path_has_zero_loss():
    gold = [1, 0, 2]
    emissions = np.full((3, 3), -50.0)
    for t, y in enumerate(gold):
        emissions[t, y] = 50.0
    transitions = apply_mask(np.zeros((5, 5)))
    loss, _, _ = crf_nll(emissions, transitions, gold)
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_loss_is_non_negative():
    rng = np.random.default_rng(3)
    for _ in range(20):
        emissions, transitions = _random_instance(rng, 4, 3)
        gold = list(rng.integers(0, 3, size=4))
        loss, _, _ = crf_nll(emissions, transitions, gold)
        assert loss >= -1e-12


def test_gold_probability_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n, K = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        emissions, transitions = _random_instance(rng, n, K)
        gold = [int(y) for y in rng.integers(0, K, size=n)]
        loss, _, _ = crf_nll(emissions, transitions, gold)
        scores = [path_score(emissions, transitions, p) for p in _all_paths(n, K)]
        posterior = math.exp(path_score(emissions, transitions, gold)) / sum(math.exp(s) for s in scores)
        assert math.exp(-loss) == pytest.approx(posterior, abs=1e-8)


def test_viterbi_ignores_constant_added_to_one_position():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n, K = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        emissions, transitions = _random_instance(rng, n, K)
        path, score = viterbi(emissions, transitions)
        shifted = emissions.copy()
        shifted[int(rng.integers(n))] += 3.5
        shifted_path, shifted_score = viterbi(shifted, transitions)
        assert shifted_path == path
        assert shifted_score == pytest.approx(score + 3.5, abs=1e-9)


def test_masked_entries_have_no_gradient():
    emissions, transitions = _random_instance(np.random.default_rng(1), 3, 2)
    _, _, d_tr = crf_nll(emissions, transitions, [0, 1, 1])
    assert not d_tr[:, 2].any() and not d_tr[3, :].any()
    assert transitions[0, 2] == MASKED


@pytest.mark.parametrize('seed', range(10))
def test_crf_gradients(seed):
    rng = np.random.default_rng(seed)
    emissions, transitions = _random_instance(rng, 4, 3)
    v = Variables(em=emissions, tr=transitions)
    gold = [int(y) for y in rng.integers(0, 3, size=4)]

    def loss_fn(tape):
        loss, d_em, d_tr = crf_nll(v.em, v.tr, gold)
        if tape is not None:
            tape['crf'].em[...] += d_em
            tape['crf'].tr[...] += d_tr
        return loss

    assert grad_check(loss_fn, {'crf': v}) < 1e-4


def test_crf_input_errors():
    with pytest.raises(InputError):
        crf_nll(np.zeros((0, 2)), np.zeros((4, 4)), [])
    with pytest.raises(ShapeError):
        crf_nll(np.zeros((2, 2)), np.zeros((3, 3)), [0, 1])
    with pytest.raises(InputError):
        crf_nll(np.zeros((2, 2)), np.zeros((4, 4)), [0, 2])
