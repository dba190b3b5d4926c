"""
numcore - deterministic tensor engine on numpy
Forward passes with exact analytic backward passes for every layer the pipeline uses
"""

from .gradcheck import grad_check
from .layers import (
    GruCache,
    LstmCache,
    gru_cell,
    gru_cell_backward,
    linear,
    linear_backward,
    lstm_cell,
    lstm_cell_backward,
    softmax,
    softmax_xent,
    softmax_xent_rows,
)
from .optim import GradTape, sgd_step
from .tensor import (
    DOUBLE,
    FLOAT,
    EmbeddingParams,
    GruParams,
    LinearParams,
    LstmParams,
    Params,
    Variables,
    init_embedding,
    init_gru,
    init_linear,
    init_lstm,
    logsumexp,
    matmul,
    sigmoid,
)

__all__ = [
    'DOUBLE', 'FLOAT',
    'Params', 'Variables', 'LinearParams', 'LstmParams', 'GruParams', 'EmbeddingParams',
    'init_linear', 'init_lstm', 'init_gru', 'init_embedding',
    'matmul', 'logsumexp', 'sigmoid', 'softmax',
    'linear', 'linear_backward',
    'lstm_cell', 'lstm_cell_backward', 'LstmCache',
    'gru_cell', 'gru_cell_backward', 'GruCache',
    'softmax_xent', 'softmax_xent_rows',
    'GradTape', 'sgd_step', 'grad_check',
]

__version__ = '1.0.0'
