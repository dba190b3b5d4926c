"""
Linear-chain CRF
Scores a tag path by emission and transition scores; the transition matrix is
(K+2) x (K+2) with virtual START = K and STOP = K+1 rows/columns.
T[i][j] scores moving from tag i to tag j.
"""

from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import InputError, ShapeError
from .numcore import logsumexp

# Score of a forbidden transition (into START, out of STOP)
MASKED = -1e9


def init_transitions(num_tags: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Small random transitions with the START/STOP masks applied"""
    T = rng.uniform(-0.1, 0.1, size=(num_tags + 2, num_tags + 2)).astype(dtype)
    return apply_mask(T)


def apply_mask(transitions: np.ndarray) -> np.ndarray:
    K = transitions.shape[0] - 2
    transitions[:, K] = MASKED
    transitions[K + 1, :] = MASKED
    return transitions


def mask_gradient(d_transitions: np.ndarray) -> np.ndarray:
    """Masked entries are constants"""
    K = d_transitions.shape[0] - 2
    d_transitions[:, K] = 0.0
    d_transitions[K + 1, :] = 0.0
    return d_transitions


def _check(emissions: np.ndarray, transitions: np.ndarray) -> int:
    if emissions.ndim != 2 or emissions.shape[0] == 0:
        raise InputError(f"CRF needs emissions of shape [n x K] with n >= 1, got {emissions.shape}")
    K = emissions.shape[1]
    if transitions.shape != (K + 2, K + 2):
        raise ShapeError(f"Transitions {transitions.shape} do not match {K} tags")
    return K


def path_score(emissions: np.ndarray, transitions: np.ndarray, path: Sequence[int]) -> float:
    """Emission plus transition score of a path, START and STOP included"""
    K = _check(emissions, transitions)
    if len(path) != emissions.shape[0]:
        raise InputError(f"Path of length {len(path)} for {emissions.shape[0]} positions")
    score = float(transitions[K, path[0]])
    for t, tag in enumerate(path):
        score += float(emissions[t, tag])
        if t > 0:
            score += float(transitions[path[t - 1], tag])
    score += float(transitions[path[-1], K + 1])
    return score


def forward_logz(emissions: np.ndarray, transitions: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Forward algorithm in log space

    Returns:
        (logZ, alphas [n x K])
    """
    K = _check(emissions, transitions)
    n = emissions.shape[0]
    trans = transitions[:K, :K]
    alphas = np.empty((n, K), dtype=np.float64)
    alphas[0] = transitions[K, :K] + emissions[0]
    for t in range(1, n):
        alphas[t] = logsumexp(alphas[t - 1][:, np.newaxis] + trans, axis=0) + emissions[t]
    logz = float(logsumexp(alphas[n - 1] + transitions[:K, K + 1], axis=0))
    return logz, alphas


def _backward_betas(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    K = emissions.shape[1]
    n = emissions.shape[0]
    trans = transitions[:K, :K]
    betas = np.empty((n, K), dtype=np.float64)
    betas[n - 1] = transitions[:K, K + 1]
    for t in range(n - 2, -1, -1):
        betas[t] = logsumexp(trans + (emissions[t + 1] + betas[t + 1])[np.newaxis, :], axis=1)
    return betas


def crf_nll(emissions: np.ndarray, transitions: np.ndarray,
            gold: Sequence[int]) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Negative log-likelihood of the gold path: logZ - score(gold)

    Args:
        emissions: Scores [n x K]
        transitions: Transition scores [(K+2) x (K+2)]
        gold: Gold tag ids, length n

    Returns:
        (loss, d_emissions [n x K], d_transitions [(K+2) x (K+2)]) with gradients
        of the masked entries fixed at zero
    """
    K = _check(emissions, transitions)
    n = emissions.shape[0]
    gold = list(gold)
    if len(gold) != n:
        raise InputError(f"Gold path of length {len(gold)} for {n} positions")
    if any(not 0 <= y < K for y in gold):
        raise InputError(f"Gold tag ids must lie in [0, {K})")

    em = emissions.astype(np.float64)
    tr = transitions.astype(np.float64)
    logz, alphas = forward_logz(em, tr)
    betas = _backward_betas(em, tr)
    loss = logz - path_score(em, tr, gold)

    # Expected counts minus gold counts
    unary = np.exp(alphas + betas - logz)
    d_em = unary.copy()
    d_tr = np.zeros_like(tr)
    d_tr[K, :K] = unary[0]
    d_tr[:K, K + 1] = unary[n - 1]
    for t in range(1, n):
        pair = alphas[t - 1][:, np.newaxis] + tr[:K, :K] + (em[t] + betas[t])[np.newaxis, :] - logz
        d_tr[:K, :K] += np.exp(pair)

    d_tr[K, gold[0]] -= 1.0
    d_tr[gold[-1], K + 1] -= 1.0
    for t, y in enumerate(gold):
        d_em[t, y] -= 1.0
        if t > 0:
            d_tr[gold[t - 1], y] -= 1.0

    mask_gradient(d_tr)
    return float(loss), d_em.astype(emissions.dtype), d_tr.astype(transitions.dtype)


def viterbi(emissions: np.ndarray, transitions: np.ndarray) -> Tuple[List[int], float]:
    """
    Highest-scoring tag path; ties go to the lower tag id

    Returns:
        (path, score)
    """
    K = _check(emissions, transitions)
    n = emissions.shape[0]
    em = emissions.astype(np.float64)
    tr = transitions.astype(np.float64)
    trans = tr[:K, :K]

    backptr = np.zeros((n, K), dtype=np.int64)
    delta = tr[K, :K] + em[0]
    for t in range(1, n):
        candidates = delta[:, np.newaxis] + trans
        backptr[t] = np.argmax(candidates, axis=0)
        delta = candidates[backptr[t], np.arange(K)] + em[t]
    final = delta + tr[:K, K + 1]

    last = int(np.argmax(final))
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return path, float(final[last])
