"""
Training loop shared by the downstream heads
Mini-batch SGD, dev-score annealing and best-weights selection
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .charlm import AnnealState, lr_schedule
from .exceptions import ConfigError, TrainingError
from .numcore import GradTape, Params, sgd_step
from .runtime import memory_mb

logger = logging.getLogger(__name__)


@dataclass
class HeadConfig:
    """Downstream head hyperparameters (desk-scale defaults)"""
    hidden: int = 256
    lr: float = 0.1
    epochs: int = 30
    batch: int = 32
    anneal_factor: float = 2.0
    patience: int = 3
    dropout: float = 0.05
    clip: float = 5.0

    def __post_init__(self):
        for name in ('hidden', 'epochs', 'batch', 'patience'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.lr > 0 or not self.clip > 0:
            raise ConfigError("lr and clip must be positive")
        if not self.anneal_factor > 1:
            raise ConfigError(f"anneal_factor must exceed 1, got {self.anneal_factor}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @classmethod
    def published(cls) -> 'HeadConfig':
        """Published downstream hyperparameters"""
        return cls(hidden=256, lr=0.1, epochs=200, batch=32)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Dict) -> 'HeadConfig':
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown head settings: {sorted(unknown)}")
        return cls(**values)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_score: float
    lr: float


@dataclass
class HeadTrainLog:
    records: List[EpochRecord] = field(default_factory=list)

    @property
    def best_score(self) -> float:
        return max((r.dev_score for r in self.records), default=0.0)


def locked_dropout(x: np.ndarray, p: float, rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Drop the same feature dimensions at every position of a sequence [n x D]

    Returns:
        (dropped input, mask or None when inactive)
    """
    if p <= 0 or rng is None:
        return x, None
    mask = (rng.random(x.shape[1]) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


# step_fn(item index, tape, rng) -> loss of that item with gradients accumulated
StepFn = Callable[[int, GradTape, np.random.Generator], float]


def train_head(groups: Dict[str, Params], config: HeadConfig, n_items: int, step_fn: StepFn,
               score_fn: Callable[[], float], seed: int, name: str) -> HeadTrainLog:
    """
    Mini-batch SGD over `n_items` examples

    Each batch's loss is the mean of per-item losses. After every epoch
    `score_fn` (higher is better) drives the annealing schedule, and the
    best-scoring weights are restored at the end.

    Returns:
        Per-epoch log
    """
    rng = np.random.default_rng(seed)
    tape = GradTape(groups)
    anneal = AnnealState.initial(config.lr, mode='max')
    best = {key: p.copy() for key, p in groups.items()}
    log = HeadTrainLog()
    step = 0

    for epoch in range(1, config.epochs + 1):
        lr = anneal.lr
        order = rng.permutation(n_items)
        epoch_loss = 0.0
        for start in range(0, n_items, config.batch):
            batch = order[start:start + config.batch]
            batch_loss = 0.0
            for index in batch:
                batch_loss += step_fn(int(index), tape, rng)
            if not math.isfinite(batch_loss):
                raise TrainingError(f"Non-finite {name} loss", lr=lr, step=step)
            tape.scale(1.0 / len(batch))
            sgd_step(groups, tape, lr, config.clip, step=step)
            step += 1
            epoch_loss += batch_loss

        score = score_fn()
        record = EpochRecord(epoch, epoch_loss / max(1, n_items), score, lr)
        log.records.append(record)
        logger.info(f"{name} epoch {epoch}: loss {record.train_loss:.4f}, dev {score:.4f}, "
                    f"lr {lr:g}, rss {memory_mb():.0f} MB")

        previous = anneal
        anneal = lr_schedule(anneal, score, config.patience, config.anneal_factor, mode='max')
        if anneal.best > previous.best:
            best = {key: p.copy() for key, p in groups.items()}

    for key, params in groups.items():
        params.assign(best[key])
    logger.info(f"{name} training finished, best dev score {anneal.best:.4f}")
    return log
