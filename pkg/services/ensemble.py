"""
Ensembling Service
Selects the best fold checkpoints and combines their predictions by majority vote
"""

from collections import Counter
from typing import FrozenSet, List, Optional, Sequence, Union

import numpy as np

from models import MULTICLASS, ImbalanceToolkitError, ModelCheckpoint, ModelShapeError, NONE_LABEL
from services.classifier import decide, forward_batch


def select_top_k(checkpoints: Sequence[ModelCheckpoint], k: int = 3) -> List[ModelCheckpoint]:
    """Highest validation scores first; ties go to the lower fold index."""
    if k < 1 or len(checkpoints) < k:
        raise ImbalanceToolkitError(f"Need at least {k} checkpoints, got {len(checkpoints)}")
    return sorted(checkpoints, key=lambda c: (-c.score, c.fold))[:k]


def _check_compatible(checkpoints: Sequence[ModelCheckpoint], task: Optional[str]):
    if len(checkpoints) != 3:
        raise ModelShapeError(f"Majority voting needs exactly 3 checkpoints, got {len(checkpoints)}")
    reference = checkpoints[0]
    for checkpoint in checkpoints:
        if checkpoint.params.mode != reference.params.mode:
            raise ModelShapeError("Checkpoints disagree on classification mode")
        if checkpoint.params.dim_in != reference.params.dim_in or checkpoint.labels != reference.labels:
            raise ModelShapeError("Checkpoints disagree on input dimension or label set")
        if task is not None and checkpoint.task != task:
            raise ModelShapeError(f"Checkpoint for {checkpoint.task} given to a {task} ensemble")


def ensemble_probs(checkpoints: Sequence[ModelCheckpoint], X: np.ndarray) -> np.ndarray:
    """Stacked probabilities, shape (models, units, labels)."""
    return np.stack([forward_batch(c.params, X) for c in checkpoints])


def vote(probs: np.ndarray, mode: str, threshold: float = 0.5,
         none_index: Optional[int] = None) -> Union[int, FrozenSet[int]]:
    """
    Majority of three per-model decisions for one unit (probs has shape (3, labels)).
    Multiclass full disagreement falls back to the highest mean probability.
    """
    decisions = [decide(row, mode, threshold, none_index) for row in probs]
    if mode == MULTICLASS:
        label, count = Counter(decisions).most_common(1)[0]
        if count >= 2:
            return label
        return int(np.argmax(probs.mean(axis=0)))
    votes = Counter(label for decision in decisions for label in decision)
    return frozenset(label for label, count in votes.items() if count >= 2)


def ensemble_predict(checkpoints: Sequence[ModelCheckpoint], x: np.ndarray, task: Optional[str] = None,
                     threshold: float = 0.5) -> Union[str, FrozenSet[str]]:
    """Majority-vote prediction of three compatible checkpoints for one feature vector, as label strings."""
    _check_compatible(checkpoints, task)
    labels = checkpoints[0].labels
    none_index = labels.index(NONE_LABEL) if NONE_LABEL in labels else None
    probs = ensemble_probs(checkpoints, np.asarray(getattr(x, "values", x), dtype=np.float64))[:, 0, :]
    decision = vote(probs, checkpoints[0].params.mode, threshold, none_index)
    if isinstance(decision, frozenset):
        return frozenset(labels[j] for j in decision)
    return labels[decision]


def ensemble_predict_batch(checkpoints: Sequence[ModelCheckpoint], X: np.ndarray, task: Optional[str] = None,
                           threshold: float = 0.5) -> List[Union[str, FrozenSet[str]]]:
    _check_compatible(checkpoints, task)
    labels = checkpoints[0].labels
    none_index = labels.index(NONE_LABEL) if NONE_LABEL in labels else None
    mode = checkpoints[0].params.mode
    stacked = ensemble_probs(checkpoints, X)
    results = []
    for unit in range(stacked.shape[1]):
        decision = vote(stacked[:, unit, :], mode, threshold, none_index)
        results.append(frozenset(labels[j] for j in decision) if isinstance(decision, frozenset)
                       else labels[decision])
    return results
