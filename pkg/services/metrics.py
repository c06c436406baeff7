"""
Evaluation Metrics
Macro-F1 for multiclass genre labels, pooled micro-F1 for multilabel tasks, confusion matrices
"""

import logging
from typing import Dict, Hashable, Iterable, List, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import f1_score
from sklearn.preprocessing import MultiLabelBinarizer

from models import MULTICLASS, NONE_LABEL, ImbalanceToolkitError, LabelSpace

logger = logging.getLogger(__name__)


def _check_lengths(preds: Sequence, golds: Sequence):
    if len(preds) != len(golds):
        raise ImbalanceToolkitError(f"Got {len(preds)} predictions for {len(golds)} gold labels")


def per_class_f1(preds: Sequence[Hashable], golds: Sequence[Hashable], labels: Sequence[Hashable]) -> List[float]:
    _check_lengths(preds, golds)
    labels = list(labels)
    present = set(preds) | set(golds)
    for label in labels:
        if label not in present:
            logger.warning("Class '%s' is absent from predictions and gold labels; counted as F1 = 0", label)
    if not golds:
        return [0.0] * len(labels)
    scores = f1_score(list(golds), list(preds), labels=labels, average=None, zero_division=0)
    return [float(score) for score in scores]


def macro_f1(preds: Sequence[str], golds: Sequence[str], space: LabelSpace) -> float:
    """Unweighted mean over the label space of per-class F1."""
    scores = per_class_f1(preds, golds, space.labels)
    return float(np.mean(scores))


def micro_f1(pred_sets: Sequence[Iterable[str]], gold_sets: Sequence[Iterable[str]],
             exclude: Iterable[str] = (NONE_LABEL,)) -> float:
    """
    F1 from TP/FP/FN pooled over all (unit, label) pairs; excluded labels are dropped from both sides.
    Returns 1.0 when both sides are empty everywhere.
    """
    _check_lengths(pred_sets, gold_sets)
    excluded = set(exclude)
    pred_sets = [set(pred) - excluded for pred in pred_sets]
    gold_sets = [set(gold) - excluded for gold in gold_sets]
    labels = sorted(set().union(*pred_sets, *gold_sets))
    if not labels:
        return 1.0
    binarizer = MultiLabelBinarizer(classes=labels)
    y_pred = binarizer.fit_transform(pred_sets)
    y_true = binarizer.transform(gold_sets)
    return float(f1_score(y_true, y_pred, average="micro", zero_division=0))


def confusion_matrix(preds: Sequence[str], golds: Sequence[str], space: LabelSpace) -> np.ndarray:
    """matrix[g][p] counts units with gold label g predicted as p."""
    _check_lengths(preds, golds)
    for label in (*preds, *golds):
        space.index(label)
    if not golds:
        return np.zeros((space.size, space.size), dtype=np.int64)
    matrix = sk_confusion_matrix(list(golds), list(preds), labels=list(space.labels))
    return matrix.astype(np.int64)


def per_class_recall(matrix: np.ndarray) -> List[float]:
    support = matrix.sum(axis=1)
    return [float(matrix[i, i] / support[i]) if support[i] else 0.0 for i in range(matrix.shape[0])]


def task_score(preds: Sequence[Sequence[str]], golds: Sequence[Sequence[str]], space: LabelSpace) -> float:
    """
    Task metric over per-unit label lists: macro-F1 on the single labels
    for multiclass spaces, micro-F1 otherwise.
    """
    if space.mode == MULTICLASS:
        return macro_f1([p[0] for p in preds], [g[0] for g in golds], space)
    return micro_f1(preds, golds)


def metric_name(space: LabelSpace) -> str:
    return "macro_f1" if space.mode == MULTICLASS else "micro_f1"


def by_language(predictions: Dict[str, List[str]], golds: Dict[str, List[str]],
                languages: Dict[str, str], space: LabelSpace) -> Dict[str, float]:
    """Task metric per language over pooled out-of-fold predictions keyed by unit id."""
    grouped: Dict[str, List[str]] = {}
    for unit_id in predictions:
        grouped.setdefault(languages[unit_id], []).append(unit_id)

    return {
        language: task_score([predictions[u] for u in grouped[language]],
                             [golds[u] for u in grouped[language]], space)
        for language in sorted(grouped)
    }
