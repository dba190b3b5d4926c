"""
BiLSTM-CRF sequence tagger over stacked word embeddings
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .crf import crf_nll, init_transitions, viterbi
from .embed import StackedEmbedder
from .exceptions import DataError
from .metrics import ClassMetrics, macro_f1, micro_f1, per_class, render_table
from .numcore import (
    FLOAT,
    GradTape,
    LinearParams,
    LstmParams,
    Params,
    init_linear,
    init_lstm,
    linear,
    linear_backward,
    lstm_cell,
    lstm_cell_backward,
)
from .textcorpus import Sentence, TaggedSentence
from .training import HeadConfig, HeadTrainLog, locked_dropout, train_head

logger = logging.getLogger(__name__)


class TagSet:
    """Tag strings <-> ids 0..K-1; START = K and STOP = K+1 exist only in transitions"""

    def __init__(self, tags: Sequence[str]):
        if not tags:
            raise DataError("A tag set needs at least one tag")
        if len(set(tags)) != len(tags):
            raise DataError("Duplicate tags in tag set")
        self.tags = list(tags)
        self.id_of = {tag: k for k, tag in enumerate(self.tags)}

    @classmethod
    def from_sentences(cls, sentences: Sequence[TaggedSentence]) -> 'TagSet':
        seen: Dict[str, None] = {}
        for sent in sentences:
            for tag in sent.tags:
                seen.setdefault(tag, None)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.tags)

    @property
    def start(self) -> int:
        return len(self.tags)

    @property
    def stop(self) -> int:
        return len(self.tags) + 1

    def encode(self, tags: Sequence[str], where: str = '') -> List[int]:
        ids = []
        for tag in tags:
            if tag not in self.id_of:
                raise DataError(f"Unknown tag {tag!r} in sentence {where!r}")
            ids.append(self.id_of[tag])
        return ids

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.tags[k] for k in ids]


@dataclass
class CrfParams(Params):
    """Transition scores [(K+2) x (K+2)]"""
    T: np.ndarray


@dataclass
class BiLstmCache:
    fwd: list
    bwd: list
    out: np.ndarray


class CrfTagger:
    """Stacked embeddings -> BiLSTM -> projection -> linear-chain CRF"""

    def __init__(self, embedder: StackedEmbedder, tagset: TagSet, config: HeadConfig,
                 fwd: LstmParams, bwd: LstmParams, proj: LinearParams, crf: CrfParams):
        self.embedder = embedder
        self.tagset = tagset
        self.config = config
        self.fwd = fwd
        self.bwd = bwd
        self.proj = proj
        self.crf = crf

    @classmethod
    def initialize(cls, embedder: StackedEmbedder, tagset: TagSet, config: HeadConfig,
                   seed: int = 42) -> 'CrfTagger':
        rng = np.random.default_rng(seed)
        D, H, K = embedder.dim, config.hidden, len(tagset)
        tagger = cls(embedder, tagset, config,
                     fwd=init_lstm(D, H, rng), bwd=init_lstm(D, H, rng),
                     proj=init_linear(2 * H, K, rng),
                     crf=CrfParams(init_transitions(K, rng)))
        logger.info(f"Initialized CRF tagger: input {D}, hidden {H}x2, {K} tags")
        return tagger

    def __repr__(self):
        return f"<CrfTagger: {len(self.tagset)} tags, hidden {self.config.hidden}>"

    def param_groups(self) -> Dict[str, Params]:
        return {'fwd': self.fwd, 'bwd': self.bwd, 'proj': self.proj, 'crf': self.crf}

    def features(self, sentence: Sentence) -> np.ndarray:
        return self.embedder.embed(sentence).matrix

    def emissions(self, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, BiLstmCache]:
        """Emission scores [n x K] of word features [n x D]; dropout only when rng is given"""
        x, _ = locked_dropout(x, self.config.dropout, rng)
        n, H = x.shape[0], self.config.hidden

        h = np.zeros(H, dtype=x.dtype)
        c = np.zeros(H, dtype=x.dtype)
        fwd_out, fwd_caches = [], []
        for t in range(n):
            h, c, cache = lstm_cell(x[t], h, c, self.fwd)
            fwd_out.append(h)
            fwd_caches.append(cache)

        h = np.zeros(H, dtype=x.dtype)
        c = np.zeros(H, dtype=x.dtype)
        bwd_out, bwd_caches = [None] * n, []
        for t in reversed(range(n)):
            h, c, cache = lstm_cell(x[t], h, c, self.bwd)
            bwd_out[t] = h
            bwd_caches.append(cache)

        out = np.concatenate([np.stack(fwd_out), np.stack(bwd_out)], axis=1)
        return linear(out, self.proj), BiLstmCache(fwd_caches, bwd_caches, out)

    def _backward(self, d_emissions: np.ndarray, cache: BiLstmCache, tape: GradTape):
        H = self.config.hidden
        d_out = linear_backward(cache.out, d_emissions, self.proj, tape['proj'])
        n = d_out.shape[0]

        dh = np.zeros(H, dtype=d_out.dtype)
        dc = np.zeros(H, dtype=d_out.dtype)
        for t in reversed(range(n)):
            _, dh, dc = lstm_cell_backward(cache.fwd[t], d_out[t, :H] + dh, dc, self.fwd, tape['fwd'])

        dh = np.zeros(H, dtype=d_out.dtype)
        dc = np.zeros(H, dtype=d_out.dtype)
        # bwd caches are in processing order: position n-1 first
        for k in reversed(range(n)):
            pos = n - 1 - k
            _, dh, dc = lstm_cell_backward(cache.bwd[k], d_out[pos, H:] + dh, dc, self.bwd, tape['bwd'])

    def loss(self, x: np.ndarray, gold: Sequence[int], tape: Optional[GradTape] = None,
             rng: Optional[np.random.Generator] = None) -> float:
        """CRF negative log-likelihood of one sentence, gradients into `tape` when given"""
        em, cache = self.emissions(x, rng)
        nll, d_em, d_tr = crf_nll(em, self.crf.T, gold)
        if tape is not None:
            tape['crf'].T += d_tr
            self._backward(d_em, cache, tape)
        return nll

    def predict_ids(self, x: np.ndarray) -> List[int]:
        em, _ = self.emissions(x)
        path, _ = viterbi(em, self.crf.T)
        return path

    def predict(self, sentence: Sentence) -> List[str]:
        return self.tagset.decode(self.predict_ids(self.features(sentence)))


@dataclass
class TagReport:
    per_tag: Dict[str, ClassMetrics]
    micro_f1: float
    macro_f1: float
    tokens: int
    correct: int = 0
    predictions: List[List[str]] = field(default_factory=list, repr=False)

    @property
    def accuracy(self) -> float:
        return self.correct / self.tokens if self.tokens else 0.0

    def render(self) -> List[str]:
        return render_table(self.per_tag, 'micro-f1', self.micro_f1)


def tag_report(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> TagReport:
    """Per-tag and pooled metrics of aligned gold / predicted tag sequences"""
    flat_gold = [tag for seq in gold for tag in seq]
    flat_pred = [tag for seq in pred for tag in seq]
    metrics = per_class(flat_gold, flat_pred)
    correct = sum(1 for g, p in zip(flat_gold, flat_pred) if g == p)
    return TagReport(per_tag=metrics, micro_f1=micro_f1(flat_gold, flat_pred),
                     macro_f1=macro_f1(metrics), tokens=len(flat_gold), correct=correct,
                     predictions=[list(seq) for seq in pred])


def _encode_all(tagger: CrfTagger, sentences: Sequence[TaggedSentence]):
    feats, golds = [], []
    for sent in sentences:
        golds.append(tagger.tagset.encode(sent.tags, where=sent.sentence.text))
        feats.append(tagger.features(sent.sentence))
    return feats, golds


def train_tagger(config: HeadConfig, tagger: CrfTagger, train: Sequence[TaggedSentence],
                 dev: Sequence[TaggedSentence], seed: int = 42) -> Tuple[CrfTagger, HeadTrainLog]:
    """
    Mini-batch SGD on the mean per-sentence CRF loss; best dev micro-F1 weights kept

    Args:
        config: Hyperparameters
        tagger: Initialized tagger (its tag set must cover the data)
        train: Training sentences
        dev: Development sentences
        seed: Seed for batch order and dropout

    Returns:
        (trained tagger, per-epoch log)
    """
    if not train:
        raise DataError("Empty training set")
    dev = dev or train
    train_x, train_y = _encode_all(tagger, train)
    dev_x, dev_y = _encode_all(tagger, dev)
    logger.info(f"Tagger training on {len(train)} sentences, dev {len(dev)}")

    def step(index: int, tape: GradTape, rng: np.random.Generator) -> float:
        return tagger.loss(train_x[index], train_y[index], tape, rng)

    def score() -> float:
        gold = [tagger.tagset.decode(y) for y in dev_y]
        pred = [tagger.tagset.decode(tagger.predict_ids(x)) for x in dev_x]
        return tag_report(gold, pred).micro_f1

    log = train_head(tagger.param_groups(), config, len(train), step, score, seed, name='tagger')
    return tagger, log


def evaluate_tagger(tagger: CrfTagger, test: Sequence[TaggedSentence]) -> TagReport:
    """Decode every sentence and score it against gold"""
    if not test:
        raise DataError("Empty test set")
    gold = [sent.tags for sent in test]
    pred = [tagger.predict(sent.sentence) for sent in test]
    report = tag_report(gold, pred)
    logger.info(f"Tagger micro-F1 {report.micro_f1:.4f} on {report.tokens} tokens")
    return report


def as_dtype(tagger: CrfTagger, dtype=FLOAT) -> CrfTagger:
    """Copy of the tagger's trainable weights in another precision"""
    return CrfTagger(tagger.embedder, tagger.tagset, tagger.config,
                     tagger.fwd.astype(dtype), tagger.bwd.astype(dtype),
                     tagger.proj.astype(dtype), tagger.crf.astype(dtype))
