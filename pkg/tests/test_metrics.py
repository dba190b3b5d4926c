"""
Per-class metrics and report tables
"""

import pytest

from src.classifier import cls_report
from src.exceptions import DataError
from src.metrics import macro_f1, micro_f1, per_class, render_table


def test_per_class_counts_and_order():
    gold = ['N', 'N', 'N', 'V', 'D', 'D']
    pred = ['N', 'V', 'N', 'V', 'D', 'N']
    metrics = per_class(gold, pred)
    assert list(metrics) == ['N', 'D', 'V']
    n = metrics['N']
    assert (n.support, n.predicted) == (3, 3)
    assert n.precision == pytest.approx(2 / 3) and n.recall == pytest.approx(2 / 3)
    assert metrics['D'].precision == 1.0 and metrics['D'].recall == 0.5
    assert metrics['D'].f1 == pytest.approx(2 / 3)


def test_predicted_only_class_has_zero_recall():
    metrics = per_class(['A', 'A'], ['A', 'X'])
    x = metrics['X']
    assert (x.precision, x.recall, x.f1) == (0.0, 0.0, 0.0)
    assert (x.support, x.predicted) == (0, 1)


def test_micro_f1_equals_accuracy():
    gold = ['a', 'b', 'b', 'c']
    pred = ['a', 'b', 'c', 'c']
    assert micro_f1(gold, pred) == pytest.approx(0.75)
    assert micro_f1([], []) == 0.0


def test_macro_f1_is_mean_of_class_f1():
    metrics = per_class(['A', 'A', 'B'], ['A', 'B', 'B'])
    assert macro_f1(metrics) == pytest.approx(2 / 3)
    assert macro_f1({}) == 0.0


def test_misaligned_sequences_are_data_errors():
    with pytest.raises(DataError):
        per_class(['A', 'B'], ['A'])
    with pytest.raises(DataError):
        micro_f1(['A'], [])
    with pytest.raises(DataError):
        cls_report(['a', 'b'], ['a'], ['a', 'b'])


def test_empty_input():
    assert per_class([], []) == {}
    report = cls_report(['a', 'b'], [], [])
    assert report.accuracy == 0.0
    assert report.confusion.tolist() == [[0, 0], [0, 0]]


def test_confusion_adds_unlisted_labels():
    report = cls_report(['a', 'b'], ['a', 'c', 'b'], ['a', 'a', 'b'])
    assert report.labels == ['a', 'b', 'c']
    assert report.confusion.tolist() == [[1, 0, 0], [0, 1, 0], [1, 0, 0]]
    assert report.gold_counts == {'a': 1, 'b': 1, 'c': 1}
    assert report.pred_counts == {'a': 2, 'b': 1, 'c': 0}


def test_render_table_rows():
    lines = render_table(per_class(['A', 'B'], ['A', 'A']), 'micro-f1', 0.5)
    assert len(lines) == 4
    assert lines[1].split() == ['A', '0.5000', '1.0000', '0.6667', '1']
    assert lines[2].split() == ['B', '1.0000', '0.0000', '0.0000', '1']
