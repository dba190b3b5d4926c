"""
Layer forward/backward passes
Every op accepts a single vector [I] or a batch of row vectors [B x I]
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..exceptions import InputError, ShapeError
from .tensor import GruParams, LinearParams, LstmParams, sigmoid


def _rows(x: np.ndarray) -> np.ndarray:
    return x[np.newaxis, :] if x.ndim == 1 else x


def _like(template: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Drop the batch axis again when the caller passed a single vector"""
    return x[0] if template.ndim == 1 else x


def _check(name: str, x: np.ndarray, size: int):
    if x.shape[-1] != size or x.ndim not in (1, 2):
        raise ShapeError(f"{name} has shape {x.shape}, expected trailing dimension {size}")


# --- linear -----------------------------------------------------------------

def linear(x: np.ndarray, p: LinearParams) -> np.ndarray:
    _check('x', x, p.in_dim)
    return x @ p.W.T + p.b


def linear_backward(x: np.ndarray, dy: np.ndarray, p: LinearParams, grads: LinearParams) -> np.ndarray:
    """Accumulate dW, db into `grads`; return dx"""
    x2, dy2 = _rows(x), _rows(dy)
    grads.W += dy2.T @ x2
    grads.b += dy2.sum(axis=0)
    return _like(x, dy2 @ p.W)


# --- LSTM -------------------------------------------------------------------

@dataclass
class LstmCache:
    """Values saved by lstm_cell for its backward pass"""
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray
    single: bool


def lstm_cell(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
              p: LstmParams) -> Tuple[np.ndarray, np.ndarray, LstmCache]:
    """
    One LSTM step

    Args:
        x: Input [I] or [B x I]
        h_prev: Previous hidden state [H] or [B x H]
        c_prev: Previous cell state [H] or [B x H]
        p: LSTM parameters

    Returns:
        (h, c, cache)
    """
    H = p.hidden
    _check('x', x, p.input_size)
    _check('h_prev', h_prev, H)
    _check('c_prev', c_prev, H)

    x2, h2, c2 = _rows(x), _rows(h_prev), _rows(c_prev)
    gates = x2 @ p.W_ih.T + h2 @ p.W_hh.T + p.b
    i = sigmoid(gates[:, :H])
    f = sigmoid(gates[:, H:2 * H])
    g = np.tanh(gates[:, 2 * H:3 * H])
    o = sigmoid(gates[:, 3 * H:])
    c = f * c2 + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c

    cache = LstmCache(x2, h2, c2, i, f, g, o, tanh_c, single=(x.ndim == 1))
    if cache.single:
        return h[0], c[0], cache
    return h, c, cache


def lstm_cell_backward(cache: Optional[LstmCache], dh: np.ndarray, dc: np.ndarray,
                       p: LstmParams, grads: LstmParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Backward pass of one LSTM step

    Args:
        cache: Cache returned by the matching lstm_cell call
        dh: Gradient w.r.t. the step's h
        dc: Gradient w.r.t. the step's c (from the next step)
        p: LSTM parameters used in the forward call
        grads: Gradient buffers, accumulated in place

    Returns:
        (dx, dh_prev, dc_prev)
    """
    if cache is None:
        raise ShapeError("lstm_cell_backward called without a forward cache")
    H = p.hidden
    if cache.i.shape[1] != H or cache.x.shape[1] != p.input_size:
        raise ShapeError(f"Forward cache does not match parameters (H={H}, I={p.input_size})")

    dh2, dc2 = _rows(dh), _rows(dc)
    if dh2.shape != cache.i.shape or dc2.shape != cache.i.shape:
        raise ShapeError(f"Upstream gradients {dh.shape}/{dc.shape} do not match cache {cache.i.shape}")

    i, f, g, o, tanh_c = cache.i, cache.f, cache.g, cache.o, cache.tanh_c
    d_o = dh2 * tanh_c
    dc_total = dc2 + dh2 * o * (1.0 - tanh_c * tanh_c)
    d_i = dc_total * g
    d_f = dc_total * cache.c_prev
    d_g = dc_total * i
    dc_prev = dc_total * f

    d_gates = np.concatenate([
        d_i * i * (1.0 - i),
        d_f * f * (1.0 - f),
        d_g * (1.0 - g * g),
        d_o * o * (1.0 - o),
    ], axis=1)

    grads.W_ih += d_gates.T @ cache.x
    grads.W_hh += d_gates.T @ cache.h_prev
    grads.b += d_gates.sum(axis=0)

    dx = d_gates @ p.W_ih
    dh_prev = d_gates @ p.W_hh
    if cache.single:
        return dx[0], dh_prev[0], dc_prev[0]
    return dx, dh_prev, dc_prev


# --- GRU --------------------------------------------------------------------

@dataclass
class GruCache:
    """Values saved by gru_cell for its backward pass"""
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    hn: np.ndarray  # U_n h_prev + b_hn, before the reset gate
    single: bool


def gru_cell(x: np.ndarray, h_prev: np.ndarray, p: GruParams) -> Tuple[np.ndarray, GruCache]:
    """
    One GRU step: h = (1 - z) * n + z * h_prev

    Args:
        x: Input [I] or [B x I]
        h_prev: Previous hidden state [H] or [B x H]
        p: GRU parameters

    Returns:
        (h, cache)
    """
    H = p.hidden
    _check('x', x, p.input_size)
    _check('h_prev', h_prev, H)

    x2, h2 = _rows(x), _rows(h_prev)
    gi = x2 @ p.W_ih.T + p.b_ih
    gh = h2 @ p.W_hh.T + p.b_hh
    r = sigmoid(gi[:, :H] + gh[:, :H])
    z = sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
    hn = gh[:, 2 * H:]
    n = np.tanh(gi[:, 2 * H:] + r * hn)
    h = (1.0 - z) * n + z * h2

    cache = GruCache(x2, h2, r, z, n, hn, single=(x.ndim == 1))
    return (h[0] if cache.single else h), cache


def gru_cell_backward(cache: Optional[GruCache], dh: np.ndarray, p: GruParams,
                      grads: GruParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Backward pass of one GRU step

    Returns:
        (dx, dh_prev)
    """
    if cache is None:
        raise ShapeError("gru_cell_backward called without a forward cache")
    if cache.r.shape[1] != p.hidden or cache.x.shape[1] != p.input_size:
        raise ShapeError("Forward cache does not match parameters")

    dh2 = _rows(dh)
    if dh2.shape != cache.r.shape:
        raise ShapeError(f"Upstream gradient {dh.shape} does not match cache {cache.r.shape}")

    r, z, n, hn = cache.r, cache.z, cache.n, cache.hn
    dn = dh2 * (1.0 - z)
    dz = dh2 * (cache.h_prev - n)
    da_n = dn * (1.0 - n * n)
    dr = da_n * hn
    da_r = dr * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)

    d_gi = np.concatenate([da_r, da_z, da_n], axis=1)
    d_gh = np.concatenate([da_r, da_z, da_n * r], axis=1)

    grads.W_ih += d_gi.T @ cache.x
    grads.b_ih += d_gi.sum(axis=0)
    grads.W_hh += d_gh.T @ cache.h_prev
    grads.b_hh += d_gh.sum(axis=0)

    dx = d_gi @ p.W_ih
    dh_prev = dh2 * z + d_gh @ p.W_hh
    if cache.single:
        return dx[0], dh_prev[0]
    return dx, dh_prev


# --- objectives -------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, target: int) -> Tuple[float, np.ndarray]:
    """
    Cross-entropy of one logit vector against a class id

    Args:
        logits: Scores [K]
        target: Gold class id

    Returns:
        (loss, dlogits) where dlogits = softmax(logits) - onehot(target)
    """
    if logits.ndim != 1:
        raise ShapeError(f"softmax_xent expects a vector, got {logits.shape}")
    K = logits.shape[0]
    if not 0 <= target < K:
        raise InputError(f"Target {target} out of range for {K} classes")

    shifted = logits - np.max(logits)
    log_norm = np.log(np.sum(np.exp(shifted)))
    loss = float(log_norm - shifted[target])
    dlogits = np.exp(shifted - log_norm)
    dlogits[target] -= 1.0
    return loss, dlogits


def softmax_xent_rows(logits: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-wise cross-entropy

    Args:
        logits: Scores [N x K]
        targets: Gold ids [N]

    Returns:
        (per-row losses [N], dlogits [N x K] of the summed loss)
    """
    K = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= K):
        raise InputError(f"Target ids must lie in [0, {K})")
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(len(targets))
    losses = -log_probs[rows, targets]
    dlogits = np.exp(log_probs)
    dlogits[rows, targets] -= 1.0
    return losses, dlogits
