"""
Tensor helpers and parameter containers
Tensors are plain numpy arrays; parameter groups are small dataclasses of them
"""

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np

from ..exceptions import ShapeError

# Training precision; gradient checks switch parameter groups to float64
FLOAT = np.float32
DOUBLE = np.float64


class Params:
    """Base class for a named group of parameter tensors"""

    def named(self) -> List[Tuple[str, np.ndarray]]:
        """Return (field, tensor) pairs in declaration order"""
        return [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)]

    def _rebuild(self, fn) -> 'Params':
        return type(self)(**{name: fn(arr) for name, arr in self.named()})

    def zeros_like(self) -> 'Params':
        return self._rebuild(np.zeros_like)

    def copy(self) -> 'Params':
        return self._rebuild(np.copy)

    def astype(self, dtype) -> 'Params':
        return self._rebuild(lambda arr: arr.astype(dtype))

    def assign(self, other: 'Params'):
        """Copy values of `other` into this group's buffers"""
        for (name, arr), (_, src) in zip(self.named(), other.named()):
            if arr.shape != src.shape:
                raise ShapeError(f"Cannot assign {name}: {src.shape} into {arr.shape}")
            arr[...] = src

    def __iter__(self) -> Iterator[np.ndarray]:
        return (arr for _, arr in self.named())


class Variables(Params):
    """Ad-hoc parameter group with arbitrary tensor names"""

    def __init__(self, **arrays: np.ndarray):
        self._arrays: Dict[str, np.ndarray] = dict(arrays)

    def named(self) -> List[Tuple[str, np.ndarray]]:
        return list(self._arrays.items())

    def __getattr__(self, name: str) -> np.ndarray:
        arrays = self.__dict__.get('_arrays', {})
        if name in arrays:
            return arrays[name]
        raise AttributeError(name)

    def __repr__(self):
        shapes = ', '.join(f"{k}={v.shape}" for k, v in self._arrays.items())
        return f"<Variables: {shapes}>"


@dataclass
class LinearParams(Params):
    """Affine projection: W [O x I], b [O]"""
    W: np.ndarray
    b: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class LstmParams(Params):
    """
    LSTM weights; gate blocks are stacked in the order
    (input, forget, cell-candidate, output)
    """
    W_ih: np.ndarray  # [4H x I]
    W_hh: np.ndarray  # [4H x H]
    b: np.ndarray     # [4H]

    @property
    def input_size(self) -> int:
        return self.W_ih.shape[1]

    @property
    def hidden(self) -> int:
        return self.W_hh.shape[1]


@dataclass
class GruParams(Params):
    """GRU weights; gate blocks are stacked in the order (reset, update, candidate)"""
    W_ih: np.ndarray  # [3H x I]
    W_hh: np.ndarray  # [3H x H]
    b_ih: np.ndarray  # [3H]
    b_hh: np.ndarray  # [3H]

    @property
    def input_size(self) -> int:
        return self.W_ih.shape[1]

    @property
    def hidden(self) -> int:
        return self.W_hh.shape[1]


@dataclass
class EmbeddingParams(Params):
    """Lookup table: E [V x D]"""
    E: np.ndarray


def _uniform(rng: np.random.Generator, bound: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_linear(in_dim: int, out_dim: int, rng: np.random.Generator, dtype=FLOAT) -> LinearParams:
    bound = 1.0 / np.sqrt(in_dim)
    return LinearParams(
        W=_uniform(rng, bound, (out_dim, in_dim), dtype),
        b=_uniform(rng, bound, (out_dim,), dtype),
    )


def init_lstm(input_size: int, hidden: int, rng: np.random.Generator, dtype=FLOAT) -> LstmParams:
    bound = 1.0 / np.sqrt(hidden)
    return LstmParams(
        W_ih=_uniform(rng, bound, (4 * hidden, input_size), dtype),
        W_hh=_uniform(rng, bound, (4 * hidden, hidden), dtype),
        b=_uniform(rng, bound, (4 * hidden,), dtype),
    )


def init_gru(input_size: int, hidden: int, rng: np.random.Generator, dtype=FLOAT) -> GruParams:
    bound = 1.0 / np.sqrt(hidden)
    return GruParams(
        W_ih=_uniform(rng, bound, (3 * hidden, input_size), dtype),
        W_hh=_uniform(rng, bound, (3 * hidden, hidden), dtype),
        b_ih=_uniform(rng, bound, (3 * hidden,), dtype),
        b_hh=_uniform(rng, bound, (3 * hidden,), dtype),
    )


def init_embedding(vocab: int, dim: int, rng: np.random.Generator, dtype=FLOAT) -> EmbeddingParams:
    return EmbeddingParams(E=_uniform(rng, 0.1, (vocab, dim), dtype))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Matrix product of two rank-2 tensors

    Args:
        a: Tensor [m x k]
        b: Tensor [k x n]

    Returns:
        Tensor [m x n]
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable log(sum(exp(x))) along an axis"""
    peak = np.max(x, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    out = np.log(np.sum(np.exp(x - peak), axis=axis, keepdims=True)) + peak
    return np.squeeze(out, axis=axis)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
