"""
BiLSTM-CRF tagger: gradients, training, evaluation and reports
"""

import numpy as np
import pytest

from conftest import one_hot_table
from src.embed import StackedEmbedder, StaticEmbedder
from src.exceptions import DataError
from src.metrics import per_class
from src.numcore import DOUBLE, grad_check
from src.tagger import CrfTagger, TagSet, as_dtype, evaluate_tagger, tag_report, train_tagger
from src.textcorpus import TaggedSentence, read_conllu
from src.training import HeadConfig


def _embedder(sentences):
    return StackedEmbedder([StaticEmbedder(one_hot_table(w for s in sentences for w in s.tokens))])


def _toy_sentences():
    return [
        TaggedSentence(['the', 'cat', 'runs'], ['D', 'N', 'V']),
        TaggedSentence(['a', 'dog', 'sees', 'the', 'cat'], ['D', 'N', 'V', 'D', 'N']),
        TaggedSentence(['dog', 'runs'], ['N', 'V']),
    ]


# - tag set -

def test_tagset_is_sorted_and_reserves_start_stop():
    tagset = TagSet.from_sentences(_toy_sentences())
    assert tagset.tags == ['D', 'N', 'V']
    assert (tagset.start, tagset.stop) == (3, 4)
    assert tagset.decode(tagset.encode(['V', 'D'])) == ['V', 'D']


def test_unknown_tag_names_tag_and_sentence():
    tagset = TagSet(['D', 'N'])
    with pytest.raises(DataError) as info:
        tagset.encode(['D', 'X'], where='the thing')
    assert "'X'" in str(info.value) and 'the thing' in str(info.value)


# - gradients -

@pytest.mark.parametrize('seed', range(3))
def test_tagger_loss_gradients(seed):
    sentences = _toy_sentences()
    config = HeadConfig(hidden=3, dropout=0.0)
    tagger = as_dtype(CrfTagger.initialize(_embedder(sentences), TagSet.from_sentences(sentences),
                                           config, seed=seed), DOUBLE)
    sent = sentences[1]
    x = tagger.features(sent.sentence).astype(DOUBLE)
    gold = tagger.tagset.encode(sent.tags)

    def loss_fn(tape):
        return tagger.loss(x, gold, tape)

    assert grad_check(loss_fn, tagger.param_groups()) < 1e-4


# - training -

def test_tagger_overfits_toy_treebank(data_dir):
    train = read_conllu(f"{data_dir}/treebank-train.conllu")
    config = HeadConfig(hidden=8, lr=0.5, epochs=25, batch=4, dropout=0.0)
    tagger = CrfTagger.initialize(_embedder(train), TagSet.from_sentences(train), config, seed=1)
    tagger, log = train_tagger(config, tagger, train, train, seed=1)
    report = evaluate_tagger(tagger, train)
    assert report.micro_f1 >= 0.99
    assert len(log.records) == 25
    assert log.best_score == max(r.dev_score for r in log.records)


def test_tagger_training_is_deterministic():
    sentences = _toy_sentences()
    config = HeadConfig(hidden=4, lr=0.2, epochs=3, batch=2)

    def run():
        tagger = CrfTagger.initialize(_embedder(sentences), TagSet.from_sentences(sentences), config, seed=5)
        tagger, log = train_tagger(config, tagger, sentences, sentences, seed=5)
        return tagger, [r.dev_score for r in log.records]

    (first, scores_a), (second, scores_b) = run(), run()
    assert scores_a == scores_b
    assert np.array_equal(first.crf.T, second.crf.T)
    assert np.array_equal(first.fwd.W_ih, second.fwd.W_ih)


def test_training_rejects_unknown_tag():
    sentences = _toy_sentences()
    tagger = CrfTagger.initialize(_embedder(sentences), TagSet(['D', 'N']), HeadConfig(hidden=2), seed=0)
    with pytest.raises(DataError):
        train_tagger(tagger.config, tagger, sentences, [], seed=0)


def test_predict_returns_known_tags():
    sentences = _toy_sentences()
    tagger = CrfTagger.initialize(_embedder(sentences), TagSet.from_sentences(sentences),
                                  HeadConfig(hidden=3), seed=2)
    tags = tagger.predict(sentences[1].sentence)
    assert len(tags) == 5 and set(tags) <= {'D', 'N', 'V'}


# - reports -

def test_report_hand_example():
    report = tag_report([['A', 'A', 'B']], [['A', 'B', 'B']])
    a, b = report.per_tag['A'], report.per_tag['B']
    assert (a.precision, a.recall) == (1.0, 0.5)
    assert (b.precision, b.recall) == (0.5, 1.0)
    assert a.f1 == pytest.approx(2 / 3) and b.f1 == pytest.approx(2 / 3)
    assert report.micro_f1 == pytest.approx(2 / 3)


def test_report_perfect_predictions():
    gold = [['D', 'N'], ['N', 'V', 'V']]
    report = tag_report(gold, gold)
    assert report.micro_f1 == 1.0 and report.macro_f1 == 1.0 and report.accuracy == 1.0
    assert all(m.precision == 1.0 and m.recall == 1.0 for m in report.per_tag.values())


def test_report_excludes_absent_tags():
    metrics = per_class(['A', 'A'], ['A', 'A'])
    assert list(metrics) == ['A']


def test_never_predicted_tag_gets_precision_one():
    metrics = per_class(['A', 'B'], ['A', 'A'])
    assert metrics['B'].precision == 1.0
    assert metrics['B'].recall == 0.0
    assert metrics['B'].f1 == 0.0


def test_report_render_has_header_and_total():
    lines = tag_report([['N', 'V']], [['N', 'N']]).render()
    assert lines[0].split() == ['tag', 'precision', 'recall', 'f1-score', 'support']
    assert lines[-1].split()[0] == 'micro-f1'
