"""
Precision / recall / F1 bookkeeping shared by the tagger and classifier reports
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score, precision_recall_fscore_support

from .exceptions import DataError


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int     # gold count
    predicted: int   # predicted count


def _check_aligned(gold: Sequence[str], pred: Sequence[str]):
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold labels but {len(pred)} predictions")


def per_class(gold: Sequence[str], pred: Sequence[str]) -> Dict[str, ClassMetrics]:
    """
    Metrics of every class occurring in gold or predictions

    A class never predicted gets precision 1.0; a class never in gold gets
    recall 0.0. F1 is 0 unless both are positive. Classes are ordered by
    descending gold count, then name.
    """
    _check_aligned(gold, pred)
    if not gold:
        return {}
    labels = sorted(set(gold) | set(pred))
    counts = confusion_matrix(gold, pred, labels=labels)
    precision, _, _, _ = precision_recall_fscore_support(gold, pred, labels=labels, zero_division=1)
    _, recall, f1, _ = precision_recall_fscore_support(gold, pred, labels=labels, zero_division=0)

    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    order = sorted(range(len(labels)), key=lambda k: (-support[k], labels[k]))
    return {
        labels[k]: ClassMetrics(float(precision[k]), float(recall[k]), float(f1[k]),
                                int(support[k]), int(predicted[k]))
        for k in order
    }


def micro_f1(gold: Sequence[str], pred: Sequence[str]) -> float:
    """Pooled F1; with one label per item it equals accuracy"""
    _check_aligned(gold, pred)
    if not gold:
        return 0.0
    return float(f1_score(gold, pred, average='micro'))


def macro_f1(metrics: Dict[str, ClassMetrics]) -> float:
    if not metrics:
        return 0.0
    return float(np.mean([m.f1 for m in metrics.values()]))


def render_table(metrics: Dict[str, ClassMetrics], total_label: str, total_value: float) -> List[str]:
    """Aligned text table: label, precision, recall, F1, then a total row"""
    width = max([len(total_label)] + [len(lab) for lab in metrics]) + 2
    lines = [f"{'tag':<{width}}{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>9}"]
    for lab, m in metrics.items():
        lines.append(f"{lab:<{width}}{m.precision:>10.4f}{m.recall:>10.4f}{m.f1:>10.4f}{m.support:>9d}")
    lines.append(f"{total_label:<{width}}{'':>10}{'':>10}{total_value:>10.4f}")
    return lines
