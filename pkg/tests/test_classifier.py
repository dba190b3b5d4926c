"""
GRU text classifier
"""

import numpy as np
import pytest

from conftest import one_hot_table
from src.classifier import GruClassifier, classify_forward, cls_report, evaluate_classifier, train_classifier
from src.embed import StackedEmbedder, StaticEmbedder
from src.exceptions import DataError, InputError
from src.numcore import DOUBLE, gru_cell, grad_check
from src.textcorpus import LabeledText, Sentence, read_labeled
from src.training import HeadConfig


def _embedder(records):
    return StackedEmbedder([StaticEmbedder(one_hot_table(w for r in records for w in r.text.tokens))])


def _toy_records():
    return [
        LabeledText('sports', Sentence(['goal', 'team'])),
        LabeledText('food', Sentence(['soup', 'rice', 'bread'])),
        LabeledText('sports', Sentence(['match'])),
        LabeledText('food', Sentence(['rice'])),
    ]


def _model(records, seed=0, **config):
    return GruClassifier.initialize(_embedder(records), GruClassifier.labels_of(records),
                                    HeadConfig(**config), seed=seed)


def test_zero_parameters_predict_first_class():
    records = _toy_records()
    model = _model(records, hidden=4)
    for arr in list(model.gru) + list(model.out):
        arr.fill(0.0)
    logits = classify_forward(model, Sentence(['goal', 'rice']))
    assert np.array_equal(logits, np.zeros(2))
    assert model.predict(Sentence(['goal'])) == model.labels[0]


def test_single_token_is_one_gru_step():
    records = _toy_records()
    model = _model(records, hidden=4)
    sentence = Sentence(['soup'])
    x = model.features(sentence)
    h, _ = gru_cell(x[0], np.zeros(4, dtype=x.dtype), model.gru)
    expected = h @ model.out.W.T + model.out.b
    assert np.allclose(classify_forward(model, sentence), expected)


def test_needs_two_labels():
    records = _toy_records()
    with pytest.raises(DataError):
        GruClassifier(_embedder(records), ['only'], HeadConfig(), None, None)


def test_empty_features_rejected():
    model = _model(_toy_records(), hidden=3)
    with pytest.raises(InputError):
        model.logits(np.zeros((0, model.embedder.dim), dtype=np.float32))


@pytest.mark.parametrize('seed', range(3))
def test_classifier_loss_gradients(seed):
    records = _toy_records()
    model = _model(records, seed=seed, hidden=3, dropout=0.0)
    model.gru = model.gru.astype(DOUBLE)
    model.out = model.out.astype(DOUBLE)
    x = model.features(records[1].text).astype(DOUBLE)

    def loss_fn(tape):
        return model.loss(x, 0, tape)

    assert grad_check(loss_fn, model.param_groups()) < 1e-4


def test_overfits_separable_toy_set(data_dir):
    train = read_labeled(f"{data_dir}/labeled-train.txt")
    config = HeadConfig(hidden=8, lr=0.5, epochs=20, batch=4, dropout=0.0)
    model = GruClassifier.initialize(_embedder(train), GruClassifier.labels_of(train), config, seed=3)
    model, log = train_classifier(config, model, train, train, seed=3)
    assert evaluate_classifier(model, train).accuracy == 1.0
    assert log.best_score == 1.0


def test_unknown_label_in_training():
    records = _toy_records()
    model = _model(records, hidden=2)
    extra = records + [LabeledText('weather', Sentence(['rain']))]
    with pytest.raises(DataError):
        train_classifier(model.config, model, extra, [], seed=0)


def test_report_hand_example():
    report = cls_report(['a', 'b'], ['a', 'a', 'b'], ['a', 'b', 'b'])
    assert report.accuracy == pytest.approx(2 / 3)
    assert report.confusion.tolist() == [[1, 1], [0, 1]]
    assert report.gold_counts == {'a': 2, 'b': 1}
    assert report.pred_counts == {'a': 1, 'b': 2}


def test_report_all_correct_and_constant_predictor():
    assert cls_report(['x', 'y'], ['x', 'y'], ['x', 'y']).accuracy == 1.0
    gold = ['a', 'b', 'c'] * 3
    report = cls_report(['a', 'b', 'c'], gold, ['a'] * 9)
    assert report.accuracy == pytest.approx(1 / 3)
    assert report.per_class['b'].precision == 1.0 and report.per_class['b'].recall == 0.0


def test_report_render():
    lines = cls_report(['a', 'b'], ['a', 'b'], ['a', 'a']).render()
    assert lines[0] == 'accuracy=0.5000'
    assert len(lines) == 5
