"""
Character-level LSTM language model
Training with truncated backpropagation through time, patience-based learning
rate annealing and perplexity evaluation
"""

import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, IngestionError, InputError, TrainingError
from .numcore import (
    FLOAT,
    EmbeddingParams,
    GradTape,
    LinearParams,
    LstmParams,
    Params,
    init_embedding,
    init_linear,
    init_lstm,
    linear,
    linear_backward,
    lstm_cell,
    lstm_cell_backward,
    sgd_step,
    softmax_xent_rows,
)
from .runtime import memory_mb
from .textcorpus import BOUNDARY, CharDictionary, build_char_dictionary

logger = logging.getLogger(__name__)

DIRECTIONS = ('forward', 'backward')

# Lines per evaluation chunk; fixed so results do not depend on worker count
EVAL_CHUNK = 32


@dataclass
class CharLMConfig:
    """Language model hyperparameters (desk-scale defaults)"""
    char_embed_dim: int = 100
    hidden: int = 64
    layers: int = 1
    seq_len: int = 50
    batch: int = 16
    lr0: float = 20.0
    anneal_factor: float = 4.0
    patience: int = 25
    epochs: int = 10
    direction: str = 'forward'
    clip: float = 0.25
    shard_lines: int = 1000

    def __post_init__(self):
        for name in ('char_embed_dim', 'hidden', 'layers', 'seq_len', 'batch', 'patience',
                     'epochs', 'shard_lines'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"lm.{name} must be positive, got {getattr(self, name)}")
        if not self.lr0 > 0 or not self.clip > 0:
            raise ConfigError("lm.lr and lm.clip must be positive")
        if not self.anneal_factor > 1:
            raise ConfigError(f"lm.anneal_factor must exceed 1, got {self.anneal_factor}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"lm.direction must be one of {DIRECTIONS}, got {self.direction!r}")

    @classmethod
    def published(cls) -> 'CharLMConfig':
        """Published hyperparameters of the full-scale model"""
        return cls(hidden=1024, seq_len=250, batch=100, lr0=20.0, anneal_factor=4.0,
                   patience=25, epochs=10)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Dict) -> 'CharLMConfig':
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown language model settings: {sorted(unknown)}")
        return cls(**values)


@dataclass
class LMState:
    """Per-layer hidden and cell states carried between windows"""
    h: List[np.ndarray]
    c: List[np.ndarray]

    @classmethod
    def zeros(cls, layers: int, batch: int, hidden: int, dtype=FLOAT) -> 'LMState':
        return cls([np.zeros((batch, hidden), dtype=dtype) for _ in range(layers)],
                   [np.zeros((batch, hidden), dtype=dtype) for _ in range(layers)])


class CharLM:
    """Character embedding -> stacked LSTM -> softmax over the dictionary"""

    def __init__(self, config: CharLMConfig, dictionary: CharDictionary,
                 embedding: EmbeddingParams, layers: List[LstmParams], decoder: LinearParams):
        self.config = config
        self.dictionary = dictionary
        self.embedding = embedding
        self.layers = layers
        self.decoder = decoder

    @classmethod
    def initialize(cls, config: CharLMConfig, dictionary: CharDictionary, seed: int = 42,
                   dtype=FLOAT) -> 'CharLM':
        rng = np.random.default_rng(seed)
        V, E, H = len(dictionary), config.char_embed_dim, config.hidden
        embedding = init_embedding(V, E, rng, dtype)
        layers = [init_lstm(E if k == 0 else H, H, rng, dtype) for k in range(config.layers)]
        decoder = init_linear(H, V, rng, dtype)
        logger.info(f"Initialized {config.direction} CharLM: V={V}, E={E}, H={H}, layers={config.layers}")
        return cls(config, dictionary, embedding, layers, decoder)

    def __repr__(self):
        return f"<CharLM: {self.config.direction}, V={self.vocab_size}, H={self.hidden}>"

    @property
    def vocab_size(self) -> int:
        return len(self.dictionary)

    @property
    def hidden(self) -> int:
        return self.config.hidden

    @property
    def direction(self) -> str:
        return self.config.direction

    def param_groups(self) -> Dict[str, Params]:
        groups: Dict[str, Params] = {'embedding': self.embedding}
        for k, layer in enumerate(self.layers):
            groups[f'lstm{k}'] = layer
        groups['decoder'] = self.decoder
        return groups

    def initial_state(self, batch: int) -> LMState:
        return LMState.zeros(len(self.layers), batch, self.hidden, self.embedding.E.dtype)

    def encode_lines(self, lines: Sequence[str]) -> np.ndarray:
        """
        Character stream of the lines: a boundary id before every line and one
        closing boundary, reversed for a backward model
        """
        ids: List[int] = []
        for line in lines:
            ids.append(BOUNDARY)
            ids.extend(self.dictionary.encode(line))
        ids.append(BOUNDARY)
        stream = np.asarray(ids, dtype=np.int64)
        if self.direction == 'backward':
            stream = stream[::-1].copy()
        return stream

    def encode_document(self, text: str) -> np.ndarray:
        """Stream for one sentence: boundary id then its characters in model direction"""
        chars = self.dictionary.encode(text)
        if self.direction == 'backward':
            chars = chars[::-1]
        return np.asarray([BOUNDARY] + chars, dtype=np.int64)

    def check_ids(self, ids: np.ndarray):
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise InputError(f"Character ids must lie in [0, {self.vocab_size})")

    def run(self, ids: np.ndarray, state: LMState, keep_cache: bool = False):
        """
        Consume ids [B x T] from `state`

        Returns:
            (top-layer hidden states [B x T x H], final state, caches or None)
        """
        B, T = ids.shape
        H = self.hidden
        x_seq = self.embedding.E[ids]
        hs, cs = list(state.h), list(state.c)
        caches = [[None] * T for _ in self.layers] if keep_cache else None
        top = np.empty((B, T, H), dtype=self.embedding.E.dtype)
        for t in range(T):
            inp = x_seq[:, t]
            for k, params in enumerate(self.layers):
                h, c, cache = lstm_cell(inp, hs[k], cs[k], params)
                hs[k], cs[k] = h, c
                if keep_cache:
                    caches[k][t] = cache
                inp = h
            top[:, t] = inp
        return top, LMState(hs, cs), caches

    def backward(self, inputs: np.ndarray, d_top: np.ndarray, caches, tape: GradTape):
        """Backpropagate d_top [B x T x H] through the window; gradients stop at its start"""
        B, T, _ = d_top.shape
        d_out = d_top
        for k in reversed(range(len(self.layers))):
            params = self.layers[k]
            grads = tape[f'lstm{k}']
            dh_next = np.zeros((B, params.hidden), dtype=d_top.dtype)
            dc_next = np.zeros_like(dh_next)
            d_in = np.empty((B, T, params.input_size), dtype=d_top.dtype)
            for t in reversed(range(T)):
                dx, dh_next, dc_next = lstm_cell_backward(
                    caches[k][t], d_out[:, t] + dh_next, dc_next, params, grads)
                d_in[:, t] = dx
            d_out = d_in
        np.add.at(tape['embedding'].E, inputs, d_out)

    def top_states(self, ids: np.ndarray) -> np.ndarray:
        """Top-layer hidden state after each id of a single stream [T] -> [T x H]"""
        self.check_ids(ids)
        top, _, _ = self.run(ids[np.newaxis, :], self.initial_state(1))
        return top[0]


def lm_step(model: CharLM, char_ids: np.ndarray, state: LMState,
            tape: Optional[GradTape] = None) -> Tuple[float, LMState]:
    """
    Next-character loss over one window

    Args:
        model: Language model
        char_ids: Window [batch x T]; column t predicts column t+1 (T-1 predictions)
        state: Carry-in state from the previous window
        tape: When given, analytic gradients of the mean loss are accumulated into it

    Returns:
        (mean next-char loss, carry-out state after the last scored input)
    """
    char_ids = np.asarray(char_ids)
    if char_ids.ndim != 2 or char_ids.shape[1] < 2:
        raise InputError(f"lm_step needs a [batch x T] window with T >= 2, got {char_ids.shape}")
    model.check_ids(char_ids)

    inputs, targets = char_ids[:, :-1], char_ids[:, 1:]
    B, T = inputs.shape
    top, carry, caches = model.run(inputs, state, keep_cache=tape is not None)

    flat = top.reshape(B * T, model.hidden)
    logits = linear(flat, model.decoder)
    losses, dlogits = softmax_xent_rows(logits, targets.reshape(-1))
    loss = float(np.mean(losses, dtype=np.float64))

    if tape is not None:
        dlogits /= B * T
        d_flat = linear_backward(flat, dlogits, model.decoder, tape['decoder'])
        model.backward(inputs, d_flat.reshape(B, T, model.hidden), caches, tape)
    return loss, carry


# --- learning rate schedule -------------------------------------------------

@dataclass(frozen=True)
class AnnealState:
    best: float
    bad_count: int
    lr: float

    @classmethod
    def initial(cls, lr: float, mode: str = 'min') -> 'AnnealState':
        return cls(best=math.inf if mode == 'min' else -math.inf, bad_count=0, lr=lr)


def lr_schedule(state: AnnealState, new_value: float, patience: int, anneal_factor: float,
                threshold: float = 1e-4, mode: str = 'min') -> AnnealState:
    """
    Patience-based annealing

    A checkpoint improves when it beats the best value by more than `threshold`
    (lower is better in 'min' mode, higher in 'max' mode). After `patience`
    consecutive non-improving checkpoints the learning rate is divided by
    `anneal_factor` and the counter restarts.
    """
    if not state.lr > 0:
        raise ConfigError(f"Learning rate must be positive, got {state.lr}")
    if mode == 'min':
        improved = new_value < state.best - threshold
    else:
        improved = new_value > state.best + threshold

    if improved:
        return AnnealState(best=new_value, bad_count=0, lr=state.lr)

    bad_count = state.bad_count + 1
    lr = state.lr
    if bad_count >= patience:
        lr = state.lr / anneal_factor
        bad_count = 0
        logger.info(f"No improvement for {patience} checkpoints, annealing lr {state.lr:g} -> {lr:g}")
    return AnnealState(best=state.best, bad_count=bad_count, lr=lr)


# --- perplexity -------------------------------------------------------------

def _chunk_nll(model: CharLM, lines: Sequence[str]) -> List[Tuple[float, int]]:
    """Summed NLL and scored-character count of every line, each from a fresh state"""
    docs = [model.encode_document(line) for line in lines]
    B = len(docs)
    T = max(len(doc) for doc in docs)
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T - 1), dtype=bool)
    for row, doc in enumerate(docs):
        ids[row, :len(doc)] = doc
        mask[row, :len(doc) - 1] = True

    if T < 2:
        return [(0.0, 0) for _ in docs]
    inputs, targets = ids[:, :-1], ids[:, 1:]
    top, _, _ = model.run(inputs, model.initial_state(B))
    logits = linear(top.reshape(B * (T - 1), model.hidden), model.decoder).astype(np.float64)
    losses, _ = softmax_xent_rows(logits, targets.reshape(-1))
    losses = losses.reshape(B, T - 1)
    return [(math.fsum(losses[row][mask[row]]), int(mask[row].sum())) for row in range(B)]


def perplexity(model: CharLM, lines: Sequence[str], workers: int = 1) -> float:
    """
    exp(mean per-character negative log-likelihood), natural log

    Every line is scored as its own document: the model starts from a zero
    state and the boundary id, and predicts each of the line's characters.

    Args:
        model: Language model
        lines: Text lines
        workers: Threads sharing the evaluation; the result does not depend on it

    Returns:
        Perplexity (>= 1)
    """
    lines = [line for line in lines if line]
    if not lines:
        raise IngestionError("Cannot compute perplexity of an empty text")
    for line in lines:
        model.check_ids(np.asarray(model.dictionary.encode(line), dtype=np.int64))

    chunks = [lines[i:i + EVAL_CHUNK] for i in range(0, len(lines), EVAL_CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda chunk: _chunk_nll(model, chunk), chunks))
    else:
        results = [_chunk_nll(model, chunk) for chunk in chunks]

    per_line = [item for chunk in results for item in chunk]
    total_chars = sum(count for _, count in per_line)
    mean_nll = math.fsum(nll for nll, _ in per_line) / total_chars
    return math.exp(mean_nll)


# --- training ---------------------------------------------------------------

@dataclass
class LMCheckpoint:
    step: int
    train_loss: float
    valid_ppl: float
    lr: float


@dataclass
class LMTrainLog:
    """Checkpoint history, mirrored to an append-only TSV file when a path is set"""
    path: Optional[str] = None
    checkpoints: List[LMCheckpoint] = field(default_factory=list)

    def record(self, checkpoint: LMCheckpoint):
        self.checkpoints.append(checkpoint)
        if self.path:
            is_new = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
            with open(self.path, 'a', encoding='utf-8') as f:
                if is_new:
                    f.write('step\tloss\tppl\tlr\n')
                f.write(f"{checkpoint.step}\t{checkpoint.train_loss:.6f}\t"
                        f"{checkpoint.valid_ppl:.6f}\t{checkpoint.lr:g}\n")

    @property
    def lrs(self) -> List[float]:
        return [cp.lr for cp in self.checkpoints]


def batchify(stream: np.ndarray, batch: int) -> np.ndarray:
    """Cut a stream into `batch` contiguous rows [rows x row_len]"""
    rows = max(1, min(batch, len(stream) // 2))
    row_len = len(stream) // rows
    return stream[:rows * row_len].reshape(rows, row_len)


def windows(data: np.ndarray, seq_len: int) -> Iterator[np.ndarray]:
    """Windows of seq_len + 1 columns overlapping by one column"""
    for start in range(0, data.shape[1] - 1, seq_len):
        yield data[:, start:start + seq_len + 1]


def _snapshot(groups: Dict[str, Params]) -> Dict[str, Params]:
    return {name: p.copy() for name, p in groups.items()}


def train_lm(config: CharLMConfig, train_lines: Sequence[str], valid_lines: Sequence[str],
             seed: int = 42, dictionary: Optional[CharDictionary] = None, max_chars: int = 2000,
             log_path: Optional[str] = None, workers: int = 1) -> Tuple[CharLM, LMTrainLog]:
    """
    Train a character language model

    The training lines are cut into shards of `shard_lines`; one pass over a
    shard is a checkpoint, after which validation perplexity drives the
    annealing schedule. State is carried across windows inside a shard and
    reset between shards. The best-perplexity weights are kept.

    Args:
        config: Hyperparameters
        train_lines: Training text
        valid_lines: Validation text
        seed: Seed for initialization and shard order
        dictionary: Prebuilt dictionary (built from train_lines when None)
        max_chars: Dictionary size limit when building one
        log_path: Append-only TSV checkpoint log
        workers: Threads for validation perplexity

    Returns:
        (model with best weights, training log)
    """
    if not train_lines or not valid_lines:
        raise IngestionError("Training and validation text must be non-empty")

    if dictionary is None:
        dictionary = build_char_dictionary(train_lines, max_chars)
    model = CharLM.initialize(config, dictionary, seed)
    groups = model.param_groups()
    tape = GradTape(groups)
    rng = np.random.default_rng(seed)

    shards = [list(train_lines[i:i + config.shard_lines])
              for i in range(0, len(train_lines), config.shard_lines)]
    shard_data = [batchify(model.encode_lines(shard), config.batch) for shard in shards]

    log = LMTrainLog(path=log_path)
    anneal = AnnealState.initial(config.lr0, mode='min')
    best = _snapshot(groups)
    step = 0

    logger.info(f"Training {config.direction} LM on {len(train_lines)} lines in {len(shards)} shard(s)")
    for epoch in range(1, config.epochs + 1):
        for shard_idx in rng.permutation(len(shards)):
            data = shard_data[shard_idx]
            state = model.initial_state(data.shape[0])
            lr = anneal.lr
            shard_loss, n_windows = 0.0, 0
            for window in windows(data, config.seq_len):
                loss, state = lm_step(model, window, state, tape)
                if not math.isfinite(loss):
                    raise TrainingError("Non-finite language model loss", lr=lr, step=step)
                sgd_step(groups, tape, lr, config.clip, step=step)
                step += 1
                shard_loss += loss
                n_windows += 1

            valid_ppl = perplexity(model, valid_lines, workers=workers)
            train_loss = shard_loss / max(1, n_windows)
            log.record(LMCheckpoint(step, train_loss, valid_ppl, lr))
            logger.info(f"epoch {epoch} step {step}: loss {train_loss:.4f}, valid ppl {valid_ppl:.4f}, "
                        f"lr {lr:g}, rss {memory_mb():.0f} MB")

            previous = anneal
            anneal = lr_schedule(anneal, valid_ppl, config.patience, config.anneal_factor, mode='min')
            if anneal.best < previous.best:
                best = _snapshot(groups)

    for name, params in groups.items():
        params.assign(best[name])
    logger.info(f"Training finished after {step} steps, best valid ppl {anneal.best:.4f}")
    return model, log
