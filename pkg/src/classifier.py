"""
GRU text classifier
The final GRU state over a sentence's stacked word vectors is its sentence
embedding; a linear layer maps it to class scores
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix

from .embed import StackedEmbedder
from .exceptions import DataError, InputError
from .metrics import ClassMetrics, per_class
from .numcore import (
    GradTape,
    GruParams,
    LinearParams,
    Params,
    gru_cell,
    gru_cell_backward,
    init_gru,
    init_linear,
    linear,
    linear_backward,
    softmax_xent,
)
from .textcorpus import LabeledText, Sentence
from .training import HeadConfig, HeadTrainLog, locked_dropout, train_head

logger = logging.getLogger(__name__)


class GruClassifier:
    """Stacked embeddings -> GRU -> final state -> linear"""

    def __init__(self, embedder: StackedEmbedder, labels: Sequence[str], config: HeadConfig,
                 gru: GruParams, out: LinearParams):
        if len(labels) < 2:
            raise DataError(f"A classifier needs at least two labels, got {list(labels)}")
        if len(set(labels)) != len(labels):
            raise DataError("Duplicate labels")
        self.embedder = embedder
        self.labels = list(labels)
        self.id_of = {label: k for k, label in enumerate(self.labels)}
        self.config = config
        self.gru = gru
        self.out = out

    @classmethod
    def initialize(cls, embedder: StackedEmbedder, labels: Sequence[str], config: HeadConfig,
                   seed: int = 42) -> 'GruClassifier':
        rng = np.random.default_rng(seed)
        D, H = embedder.dim, config.hidden
        model = cls(embedder, labels, config, gru=init_gru(D, H, rng),
                    out=init_linear(H, len(labels), rng))
        logger.info(f"Initialized GRU classifier: input {D}, hidden {H}, {len(labels)} classes")
        return model

    @staticmethod
    def labels_of(records: Sequence[LabeledText]) -> List[str]:
        return sorted({record.label for record in records})

    def __repr__(self):
        return f"<GruClassifier: {len(self.labels)} classes, hidden {self.config.hidden}>"

    def param_groups(self) -> Dict[str, Params]:
        return {'gru': self.gru, 'out': self.out}

    def features(self, sentence: Sentence) -> np.ndarray:
        return self.embedder.embed(sentence).matrix

    def label_id(self, label: str) -> int:
        if label not in self.id_of:
            raise DataError(f"Unknown label {label!r}")
        return self.id_of[label]

    def logits(self, x: np.ndarray, rng: Optional[np.random.Generator] = None):
        """Class scores of word features [n x D]; dropout only when rng is given"""
        if x.shape[0] == 0:
            raise InputError("Cannot classify an empty sentence")
        x, _ = locked_dropout(x, self.config.dropout, rng)
        h = np.zeros(self.config.hidden, dtype=x.dtype)
        caches = []
        for t in range(x.shape[0]):
            h, cache = gru_cell(x[t], h, self.gru)
            caches.append(cache)
        return linear(h, self.out), (h, caches)

    def loss(self, x: np.ndarray, gold: int, tape: Optional[GradTape] = None,
             rng: Optional[np.random.Generator] = None) -> float:
        scores, (h, caches) = self.logits(x, rng)
        nll, d_scores = softmax_xent(scores, gold)
        if tape is not None:
            dh = linear_backward(h, d_scores, self.out, tape['out'])
            for cache in reversed(caches):
                _, dh = gru_cell_backward(cache, dh, self.gru, tape['gru'])
        return nll

    def predict_id(self, x: np.ndarray) -> int:
        scores, _ = self.logits(x)
        # argmax returns the first maximum: ties go to the lowest class id
        return int(np.argmax(scores))

    def predict(self, sentence: Sentence) -> str:
        return self.labels[self.predict_id(self.features(sentence))]


def classify_forward(model: GruClassifier, sentence: Sentence) -> np.ndarray:
    """Class logits [C] of one sentence"""
    if len(sentence) == 0:
        raise InputError("Cannot classify an empty sentence")
    scores, _ = model.logits(model.features(sentence))
    return scores


@dataclass
class ClsReport:
    labels: List[str]
    accuracy: float
    confusion: np.ndarray          # [C x C], rows gold, columns predicted
    gold_counts: Dict[str, int]
    pred_counts: Dict[str, int]
    per_class: Dict[str, ClassMetrics]

    def render(self) -> List[str]:
        width = max(len(label) for label in self.labels) + 2
        lines = [f"accuracy={self.accuracy:.4f}", 'confusion (rows gold, columns predicted):',
                 ' ' * width + ''.join(f"{label:>{width}}" for label in self.labels)]
        for label, row in zip(self.labels, self.confusion):
            lines.append(f"{label:<{width}}" + ''.join(f"{int(v):>{width}d}" for v in row))
        return lines


def cls_report(labels: Sequence[str], gold: Sequence[str], pred: Sequence[str]) -> ClsReport:
    """Accuracy, confusion matrix and per-class metrics of aligned labels"""
    gold, pred = list(gold), list(pred)
    metrics = per_class(gold, pred)
    labels = list(labels)
    labels += sorted(set(gold + pred) - set(labels))
    if gold:
        confusion = confusion_matrix(gold, pred, labels=labels)
        accuracy = float(accuracy_score(gold, pred))
    else:
        confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
        accuracy = 0.0
    return ClsReport(
        labels=labels,
        accuracy=accuracy,
        confusion=confusion,
        gold_counts={label: int(n) for label, n in zip(labels, confusion.sum(axis=1))},
        pred_counts={label: int(n) for label, n in zip(labels, confusion.sum(axis=0))},
        per_class=metrics,
    )


def train_classifier(config: HeadConfig, model: GruClassifier, train: Sequence[LabeledText],
                     dev: Sequence[LabeledText], seed: int = 42) -> Tuple[GruClassifier, HeadTrainLog]:
    """
    Mini-batch SGD on softmax cross-entropy; best dev accuracy weights kept

    Args:
        config: Hyperparameters
        model: Initialized classifier whose labels cover the data
        train: Training records
        dev: Development records
        seed: Seed for batch order and dropout

    Returns:
        (trained model, per-epoch log)
    """
    if not train:
        raise DataError("Empty training set")
    dev = dev or train
    train_x = [model.features(r.text) for r in train]
    train_y = [model.label_id(r.label) for r in train]
    dev_x = [model.features(r.text) for r in dev]
    dev_y = [model.label_id(r.label) for r in dev]
    logger.info(f"Classifier training on {len(train)} texts, dev {len(dev)}")

    def step(index: int, tape: GradTape, rng: np.random.Generator) -> float:
        return model.loss(train_x[index], train_y[index], tape, rng)

    def score() -> float:
        correct = sum(1 for x, y in zip(dev_x, dev_y) if model.predict_id(x) == y)
        return correct / len(dev_y)

    log = train_head(model.param_groups(), config, len(train), step, score, seed, name='classifier')
    return model, log


def evaluate_classifier(model: GruClassifier, test: Sequence[LabeledText]) -> ClsReport:
    """Predict every record and score against gold"""
    if not test:
        raise DataError("Empty test set")
    gold = [record.label for record in test]
    pred = [model.predict(record.text) for record in test]
    report = cls_report(model.labels, gold, pred)
    logger.info(f"Classifier accuracy {report.accuracy:.4f} on {len(test)} texts")
    return report
