"""
Fold Planning Service
Builds deterministic stratified k-fold assignments of articles, shared by every task and strategy
"""

import logging
from collections import Counter, defaultdict
from typing import Dict, List, Optional, Sequence

import numpy as np

from models import NONE_LABEL, Corpus, FoldPlan, FoldPlanError, task_mode
from services.corpus_loader import task_units

logger = logging.getLogger(__name__)


def _article_labels(corpus: Corpus, task: str) -> Dict[str, frozenset]:
    """Positive labels per labelled article (T3 pools the labels of its paragraphs)."""
    labels: Dict[str, set] = {}
    for unit in task_units(corpus, task):
        labels.setdefault(unit.article_id, set()).update(unit.labels)
    return {article: frozenset(found) for article, found in labels.items()}


def stratum_keys(article_labels: Dict[str, frozenset]) -> Dict[str, str]:
    """
    Single-label articles stratify on their label; multi-label articles on their rarest
    positive label, ties broken by the lexicographically smallest label.
    """
    frequency = Counter(label for labels in article_labels.values() for label in labels if label != NONE_LABEL)
    keys = {}
    for article, labels in article_labels.items():
        positives = [label for label in labels if label != NONE_LABEL]
        if not positives:
            keys[article] = NONE_LABEL if NONE_LABEL in labels else ""
            continue
        keys[article] = min(positives, key=lambda label: (frequency[label], label))
    return keys


def assign_round_robin(strata: Dict[str, List[str]], k: int, rng: np.random.Generator) -> Dict[str, int]:
    """
    Shuffle each stratum, concatenate strata in key order and deal articles to folds in turn.
    Every stratum and the whole set end up within one article of an even split.
    """
    assignment = {}
    position = 0
    for key in sorted(strata):
        members = strata[key]
        for index in rng.permutation(len(members)):
            assignment[members[index]] = position % k
            position += 1
    return assignment


def plan_folds(corpus: Corpus, task: str, k: int, seed: int,
               labels: Optional[Sequence[str]] = None) -> FoldPlan:
    """
    Stratified fold plan over the articles labelled for `task`. Unlabelled articles are left out;
    paragraphs follow their article through FoldPlan.fold_of.
    """
    mode = task_mode(task)
    if k < 2:
        raise FoldPlanError(f"k must be at least 2, got {k}")

    article_labels = _article_labels(corpus, task)
    if k > len(article_labels):
        raise FoldPlanError(f"k={k} exceeds the {len(article_labels)} labelled {task} articles")

    if labels is not None:
        present = Counter(label for found in article_labels.values() for label in found)
        empty = [label for label in labels if label != NONE_LABEL and present[label] == 0]
        if empty:
            raise FoldPlanError(f"{task} classes with 0 samples: {', '.join(empty)}")

    keys = stratum_keys(article_labels)
    strata: Dict[str, List[str]] = defaultdict(list)
    for article in article_labels:
        strata[keys[article]].append(article)

    rng = np.random.default_rng(seed)
    assignment = assign_round_robin(strata, k, rng)
    plan = FoldPlan(k=k, seed=seed, task=task, assignment=assignment)
    logger.info("Planned %d %s folds (%s) over %d articles, sizes %s",
                k, task, mode, len(assignment), plan.fold_sizes())
    return plan
