"""
Oracle and property tests for macro-F1, micro-F1 and confusion matrices.
"""

import logging
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from models import NONE_LABEL, ImbalanceToolkitError, LabelSpace, CorpusValidationError
from services.metrics import (
    by_language, confusion_matrix, macro_f1, micro_f1, per_class_recall, task_score,
)

LABELS = ("a", "b", "c")
SPACE = LabelSpace(task="T1", labels=LABELS, mode="multiclass", counts=(1, 1, 1))


def brute_force_macro(preds, golds, labels):
    scores = []
    for label in labels:
        tp = fp = fn = 0
        for p, g in zip(preds, golds):
            if p == label and g == label:
                tp += 1
            elif p == label:
                fp += 1
            elif g == label:
                fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return sum(scores) / len(scores)


def brute_force_micro(pred_sets, gold_sets):
    tp = fp = fn = 0
    for pred, gold in zip(pred_sets, gold_sets):
        for label in set(pred) | set(gold):
            if label == NONE_LABEL:
                continue
            if label in pred and label in gold:
                tp += 1
            elif label in pred:
                fp += 1
            else:
                fn += 1
    return 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0


class TestMacroF1:
    def test_perfect_prediction(self):
        assert macro_f1(["a", "b", "c"], ["a", "b", "c"], SPACE) == 1.0

    def test_hand_derived_example(self):
        space = LabelSpace(task="T1", labels=("a", "b"), mode="multiclass", counts=(2, 1))
        assert macro_f1(["a", "b", "b"], ["a", "a", "b"], space) == pytest.approx(2 / 3)

    def test_constant_predictor(self):
        space = LabelSpace(task="T1", labels=("a", "b"), mode="multiclass", counts=(3, 1))
        f1_a = 2 * 3 / (2 * 3 + 1)
        assert macro_f1(["a"] * 4, ["a", "a", "a", "b"], space) == pytest.approx(f1_a / 2)

    def test_absent_class_counts_zero_and_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            score = macro_f1(["a", "b"], ["a", "b"], SPACE)
        assert score == pytest.approx(2 / 3)
        assert "'c'" in caplog.text

    def test_length_mismatch(self):
        with pytest.raises(ImbalanceToolkitError):
            macro_f1(["a"], ["a", "b"], SPACE)

    def test_agrees_with_oracle_on_random_pairs(self):
        rng = random.Random(0)
        for _ in range(1000):
            n = rng.randint(1, 20)
            preds = [rng.choice(LABELS) for _ in range(n)]
            golds = [rng.choice(LABELS) for _ in range(n)]
            assert macro_f1(preds, golds, SPACE) == pytest.approx(brute_force_macro(preds, golds, LABELS), abs=1e-12)


class TestMicroF1:
    def test_perfect_prediction(self):
        assert micro_f1([{"a"}, {"a", "b"}], [{"a"}, {"a", "b"}]) == 1.0

    def test_hand_pooled_example(self):
        assert micro_f1([{"a", "b"}, {"b"}], [{"a"}, {"a", "b"}]) == pytest.approx(2 / 3)

    def test_empty_predictions(self):
        assert micro_f1([set(), set()], [{"a"}, {"b"}]) == 0.0

    def test_none_label_is_ignored(self):
        assert micro_f1([{NONE_LABEL}, {"a"}], [set(), {"a", NONE_LABEL}]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ImbalanceToolkitError):
            micro_f1([set()], [])

    @given(st.lists(st.tuples(st.sets(st.sampled_from(["a", "b", "c", NONE_LABEL])),
                              st.sets(st.sampled_from(["a", "b", "c", NONE_LABEL]))), max_size=15))
    @settings(max_examples=1000)
    def test_agrees_with_pooled_oracle(self, pairs):
        """
        Property: Pooled Count Oracle
        micro_f1 equals F1 from brute-force pooled TP/FP/FN
        """
        preds = [p for p, _ in pairs]
        golds = [g for _, g in pairs]
        assert micro_f1(preds, golds) == pytest.approx(brute_force_micro(preds, golds), abs=1e-12)


class TestConfusionMatrix:
    def test_perfect_prediction_is_diagonal(self):
        matrix = confusion_matrix(["a", "b", "c", "a"], ["a", "b", "c", "a"], SPACE)
        assert np.array_equal(matrix, np.diag([2, 1, 1]))

    def test_swapped_pair_is_anti_diagonal(self):
        space = LabelSpace(task="T1", labels=("a", "b"), mode="multiclass", counts=(1, 1))
        assert confusion_matrix(["b", "a"], ["a", "b"], space).tolist() == [[0, 1], [1, 0]]

    def test_unknown_label(self):
        with pytest.raises(CorpusValidationError):
            confusion_matrix(["z"], ["a"], SPACE)

    @given(st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from(LABELS)), max_size=40))
    def test_cells_count_units_and_rows_count_golds(self, pairs):
        """
        Property: Counting Identity
        Cells sum to the unit count and row sums are gold counts
        """
        preds = [p for p, _ in pairs]
        golds = [g for _, g in pairs]
        matrix = confusion_matrix(preds, golds, SPACE)
        assert matrix.sum() == len(pairs)
        assert matrix.sum(axis=1).tolist() == [golds.count(label) for label in LABELS]
        for i, gold in enumerate(LABELS):
            for j, pred in enumerate(LABELS):
                assert matrix[i, j] == pairs.count((pred, gold))

    def test_per_class_recall(self):
        matrix = np.array([[3, 1], [0, 0]])
        assert per_class_recall(matrix) == [0.75, 0.0]


class TestBreakdowns:
    def test_task_score_dispatches_on_mode(self):
        multilabel = LabelSpace(task="T2", labels=("a", "b"), mode="multilabel", counts=(1, 1))
        assert task_score([["a"]], [["a"]], multilabel) == 1.0
        assert task_score([["a"], ["b"], ["c"]], [["a"], ["b"], ["c"]], SPACE) == 1.0
        assert task_score([["a"], ["a"]], [["a"], ["b"]], SPACE) == pytest.approx(brute_force_macro("aa", "ab", LABELS))

    def test_by_language(self):
        predictions = {"1": ["a"], "2": ["b"], "3": ["a"]}
        golds = {"1": ["a"], "2": ["a"], "3": ["a"]}
        languages = {"1": "en", "2": "fr", "3": "en"}
        space = LabelSpace(task="T1", labels=("a", "b"), mode="multiclass", counts=(3, 0))
        scores = by_language(predictions, golds, languages, space)
        assert list(scores) == ["en", "fr"]
        assert scores["en"] == pytest.approx(0.5)
        assert scores["fr"] == 0.0
