"""
Imbalance Countermeasures
Class weights for the loss, per-sample weights for a weighted random batch sampler, and majority-class under-sampling
"""

import logging
from typing import Iterator, List, Optional, Sequence

import numpy as np

from models import (
    MULTICLASS, ClassWeights, ImbalanceToolkitError, LabelSpace, SampleWeights, Split, Unit, task_mode,
)

logger = logging.getLogger(__name__)


def class_weights(counts: Sequence[int], task: str = "T1") -> ClassWeights:
    """weights[j] = n / (c * n_j) over the per-class sample counts."""
    if not counts:
        raise ImbalanceToolkitError("Class weights need at least one class")
    zero = [j for j, count in enumerate(counts) if count < 1]
    if zero:
        raise ImbalanceToolkitError(f"Class weight undefined for empty class index(es) {zero}")
    n = sum(counts)
    c = len(counts)
    return ClassWeights(task=task, weights=tuple(n / (c * count) for count in counts))


def fold_class_weights(counts: Sequence[int], task: str = "T1") -> ClassWeights:
    """
    Class weights for a training fold that may lack some classes. The formula runs over the
    present classes only; absent classes keep the neutral weight 1.0.
    """
    present = [j for j, count in enumerate(counts) if count > 0]
    if not present:
        raise ImbalanceToolkitError(f"{task}: training fold holds no labelled samples")
    if len(present) == len(counts):
        return class_weights(counts, task)
    absent = [j for j in range(len(counts)) if j not in present]
    logger.warning("%s: class index(es) %s absent from the training fold; weighted 1.0", task, absent)
    weights = [1.0] * len(counts)
    for j, weight in zip(present, class_weights([counts[j] for j in present], task).weights):
        weights[j] = weight
    return ClassWeights(task=task, weights=tuple(weights))


def sample_weights(labels: Sequence[Sequence[str]], label_space: LabelSpace) -> SampleWeights:
    """
    Multiclass: 1 / count of the sample's class. Multilabel: 1 / count of its rarest positive label.
    A multilabel sample without positives is weighted like the most frequent label.
    """
    counts = label_space.counts
    fallback = 1.0 / max(max(counts), 1)
    weights = np.empty(len(labels), dtype=np.float64)
    for i, sample_labels in enumerate(labels):
        indices = [label_space.index(label) for label in sample_labels]
        if not indices:
            weights[i] = fallback
            continue
        rarest = min(counts[j] for j in indices)
        if rarest < 1:
            raise ImbalanceToolkitError(f"Sample {i} carries a label with zero count in the label space")
        weights[i] = 1.0 / rarest
    return SampleWeights(weights)


class BatchStream:
    """
    Lazily generated index batches. With weights, each epoch draws epoch_length indices with
    replacement in proportion to the weights; without, each epoch is a fresh permutation.
    """

    def __init__(self, n: int, batch_size: int, seed: int, weights: Optional[SampleWeights] = None,
                 epoch_length: Optional[int] = None):
        if n < 1:
            raise ImbalanceToolkitError("Batch stream needs at least one sample")
        if batch_size < 1:
            raise ImbalanceToolkitError(f"batch_size must be at least 1, got {batch_size}")
        if weights is not None and len(weights) != n:
            raise ImbalanceToolkitError(f"Got {len(weights)} weights for {n} samples")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self.epoch_length = n if epoch_length is None or weights is None else epoch_length
        self._rng = np.random.default_rng(seed)
        self._probs = None if weights is None else weights.weights / weights.weights.sum()

    def draw_epoch(self) -> np.ndarray:
        if self._probs is None:
            return self._rng.permutation(self.n)
        return self._rng.choice(self.n, size=self.epoch_length, replace=True, p=self._probs)

    def epoch(self) -> Iterator[np.ndarray]:
        indices = self.draw_epoch()
        for start in range(0, len(indices), self.batch_size):
            yield indices[start:start + self.batch_size]

    def batches(self, epochs: int) -> Iterator[np.ndarray]:
        for _ in range(epochs):
            yield from self.epoch()


def weighted_batches(weights: SampleWeights, batch_size: int, seed: int,
                     epoch_multiplier: float = 1.0) -> BatchStream:
    """Weighted random sampler with replacement; one epoch draws round(multiplier * n) indices."""
    if np.any(weights.weights <= 0):
        raise ImbalanceToolkitError("Sample weights must be positive")
    n = len(weights)
    epoch_length = max(1, int(round(epoch_multiplier * n)))
    return BatchStream(n, batch_size, seed, weights=weights, epoch_length=epoch_length)


def shuffled_batches(n: int, batch_size: int, seed: int) -> BatchStream:
    return BatchStream(n, batch_size, seed)


def undersample(dataset: Split, task: str, seed: int) -> Split:
    """
    Randomly down-sample every class without replacement to the minority count,
    then shuffle the retained units.
    """
    if task_mode(task) != MULTICLASS:
        raise ImbalanceToolkitError(f"Under-sampling needs a multiclass task, {task} is multilabel")

    by_class = {}
    for index, unit in enumerate(dataset.units):
        if len(unit.labels) != 1:
            raise ImbalanceToolkitError(f"Unit {unit.unit_id} must carry exactly one label")
        by_class.setdefault(next(iter(unit.labels)), []).append(index)
    if not by_class:
        raise ImbalanceToolkitError("Cannot under-sample an empty dataset")

    minority = min(len(indices) for indices in by_class.values())
    rng = np.random.default_rng(seed)
    retained: List[int] = []
    for label in sorted(by_class):
        indices = by_class[label]
        chosen = rng.choice(len(indices), size=minority, replace=False)
        retained.extend(indices[i] for i in sorted(chosen))
    order = rng.permutation(len(retained))
    logger.debug("Under-sampled %d units to %d (%d per class)", len(dataset), len(retained), minority)
    return dataset.subset([retained[i] for i in order])


def unit_labels(units: Sequence[Unit]) -> List[List[str]]:
    return [sorted(unit.labels) for unit in units]
