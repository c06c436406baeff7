"""
Training Pipeline
Per-fold training with early stopping, k-fold cross-validation, task-agnostic and task-dependent
strategies, the ablation grid, monolingual baselines and zero-shot language evaluation
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from models import (
    MULTICLASS, TASKS, AblationReport, Corpus, CorpusValidationError, CvReport,
    FoldPlan, LabelSpace, ModelCheckpoint, ModelParams, OptimizerState, Split, TfidfConfig, TrainConfig,
    TrainingError, Unit,
)
from services.checkpoints import CheckpointStore
from services.classifier import grad_step, init_model, loss_and_grads, predict_batch, transfer_trunk
from services.corpus_loader import build_label_space, task_units
from services.features import FeatureBuilder
from services.fold_planner import plan_folds, stratum_keys
from services.imbalance import (
    fold_class_weights, sample_weights, shuffled_batches, undersample, unit_labels, weighted_batches,
)
from services.metrics import by_language, confusion_matrix, metric_name, task_score

logger = logging.getLogger(__name__)

SEED_PURPOSES = {"init": 1, "sampler": 2, "undersample": 3, "inner_val": 4, "head": 5}
_progress = {"disable": None}


def set_progress(enabled: Optional[bool]):
    """True forces progress bars on, False off, None leaves it to tqdm's TTY detection."""
    _progress["disable"] = None if enabled is None else not enabled


def derive_seed(seed_base: int, fold: int, purpose: str, task: str = "") -> int:
    """Independent, reproducible stream per (seed_base + fold, purpose, task)."""
    task_code = TASKS.index(task) + 1 if task in TASKS else 0
    sequence = np.random.SeedSequence([seed_base + fold, SEED_PURPOSES[purpose], task_code])
    return int(sequence.generate_state(1)[0])


def encode_targets(units: Sequence[Unit], space: LabelSpace) -> np.ndarray:
    if space.mode == MULTICLASS:
        return np.asarray([space.index(next(iter(unit.labels))) for unit in units], dtype=np.int64)
    targets = np.zeros((len(units), space.size))
    for row, unit in enumerate(units):
        for label in unit.labels:
            targets[row, space.index(label)] = 1.0
    return targets


def evaluate(params: ModelParams, split: Split, space: LabelSpace,
             threshold: float = 0.5) -> Tuple[float, List[List[str]], List[List[str]]]:
    """Task metric on a split plus predictions and gold labels as label lists."""
    decisions = predict_batch(params, split.X, threshold, space.none_index)
    if space.mode == MULTICLASS:
        preds = [[space.labels[d]] for d in decisions]
        golds = [[next(iter(unit.labels))] for unit in split.units]
    else:
        preds = [sorted(space.labels[j] for j in d) for d in decisions]
        golds = [sorted(unit.labels) for unit in split.units]
    return task_score(preds, golds, space), preds, golds


def train_fold(train: Split, eval_split: Split, space: LabelSpace, config: TrainConfig, fold: int = 0,
               initial: Optional[ModelParams] = None) -> ModelCheckpoint:
    """
    Train on one split, score the task metric on the other after every epoch and keep
    the best epoch. Stops after `patience` epochs without improvement.
    """
    if not len(train) or not len(eval_split):
        raise TrainingError(f"{space.task} fold {fold}: train and eval splits must both be non-empty")
    task = space.task
    config = config.for_task(task)

    if config.undersample:
        train = undersample(train, task, derive_seed(config.seed_base, fold, "undersample", task))
    train_space = space.recount(train.units)
    targets = encode_targets(train.units, space)

    cw = None
    if config.class_weights:
        cw = fold_class_weights(train_space.counts, task)

    sampler_seed = derive_seed(config.seed_base, fold, "sampler", task)
    if config.sample_weights:
        weights = sample_weights(unit_labels(train.units), train_space)
        stream = weighted_batches(weights, config.batch_size, sampler_seed, config.sampler_epoch_multiplier)
    else:
        stream = shuffled_batches(len(train), config.batch_size, sampler_seed)

    params = initial
    if params is None:
        params = init_model(train.X.shape[1], config.hidden, space.size, space.mode,
                            derive_seed(config.seed_base, fold, "init", task))
    state = OptimizerState.fresh(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                                 eps=config.eps, weight_decay=config.weight_decay)

    best: Optional[ModelCheckpoint] = None
    stale = 0
    for epoch in range(1, config.epochs_max + 1):
        losses = []
        for batch_index, indices in enumerate(stream.epoch()):
            loss, grads = loss_and_grads(params, train.X[indices], targets[indices], cw)
            if not math.isfinite(loss):
                raise TrainingError(f"{task} fold {fold}: non-finite loss", epoch=epoch, batch=batch_index)
            params, state = grad_step(params, grads, state)
            losses.append(loss)

        score, _, _ = evaluate(params, eval_split, space, config.threshold)
        logger.info("%s fold %d epoch %d: loss %.5f, eval %s %.4f",
                    task, fold, epoch, sum(losses) / len(losses), metric_name(space), score)

        if best is None or score > best.score:
            best = ModelCheckpoint(params=params, task=task, fold=fold, epoch=epoch, score=score,
                                   labels=space.labels, optimizer=state)
            stale = 0
        else:
            stale += 1
        if stale >= config.patience:
            break

    logger.info("%s fold %d: best epoch %d, %s %.4f", task, fold, best.epoch, metric_name(space), best.score)
    return best


@dataclass
class FoldResult:
    checkpoint: ModelCheckpoint
    score: float
    unit_ids: List[str]
    preds: List[List[str]]
    golds: List[List[str]]
    confusion: Optional[np.ndarray] = None


def planned_indices(units: Sequence[Unit], plan: FoldPlan) -> List[int]:
    indices = [i for i, unit in enumerate(units) if plan.fold_of(unit.article_id) is not None]
    dropped = len(units) - len(indices)
    if dropped:
        logger.warning("%d unit(s) belong to articles outside the fold plan and are skipped", dropped)
    return indices


def fold_splits(units: Sequence[Unit], X: np.ndarray, plan: FoldPlan, fold: int,
                indices: Optional[Sequence[int]] = None) -> Tuple[Split, Split]:
    """Held-out fold versus the rest; units follow their article's fold."""
    indices = range(len(units)) if indices is None else indices
    train = [i for i in indices if plan.fold_of(units[i].article_id) != fold]
    held = [i for i in indices if plan.fold_of(units[i].article_id) == fold]
    full = Split(tuple(units), X)
    return full.subset(train), full.subset(held)


def inner_split(train: Split, val_frac: float, seed: int) -> Tuple[Split, Split]:
    """Stratified, article-level validation slice carved from a training split."""
    article_labels: Dict[str, set] = {}
    for unit in train.units:
        article_labels.setdefault(unit.article_id, set()).update(unit.labels)
    keys = stratum_keys({a: frozenset(l) for a, l in article_labels.items()})
    strata: Dict[str, List[str]] = {}
    for article in article_labels:
        strata.setdefault(keys[article], []).append(article)

    rng = np.random.default_rng(seed)
    validation = set()
    for key in sorted(strata):
        members = strata[key]
        take = int(round(len(members) * val_frac))
        for index in rng.permutation(len(members))[:take]:
            validation.add(members[index])
    if not validation:
        validation.add(next(iter(article_labels)))
    if len(validation) == len(article_labels):
        raise TrainingError("Inner validation split leaves no training articles")

    inner = [i for i, unit in enumerate(train.units) if unit.article_id not in validation]
    val = [i for i, unit in enumerate(train.units) if unit.article_id in validation]
    return train.subset(inner), train.subset(val)


def run_fold(train: Split, held: Split, space: LabelSpace, config: TrainConfig, fold: int,
             initial: Optional[ModelParams] = None) -> FoldResult:
    """Train one fold and score its held-out split with the selected checkpoint."""
    if config.val_frac > 0:
        inner, val = inner_split(train, config.val_frac, derive_seed(config.seed_base, fold, "inner_val", space.task))
        checkpoint = train_fold(inner, val, space, config, fold, initial)
        score, preds, golds = evaluate(checkpoint.params, held, space, config.threshold)
    else:
        checkpoint = train_fold(train, held, space, config, fold, initial)
        _, preds, golds = evaluate(checkpoint.params, held, space, config.threshold)
        score = checkpoint.score

    confusion = None
    if space.mode == MULTICLASS:
        confusion = confusion_matrix([p[0] for p in preds], [g[0] for g in golds], space)
    return FoldResult(checkpoint=checkpoint, score=score, unit_ids=[u.unit_id for u in held.units],
                      preds=preds, golds=golds, confusion=confusion)


def assemble_report(space: LabelSpace, results: Sequence[FoldResult], selection: str,
                    store: Optional[CheckpointStore] = None, keep_predictions: bool = True) -> CvReport:
    predictions: Dict[str, List[str]] = {}
    if keep_predictions:
        for result in results:
            predictions.update(zip(result.unit_ids, result.preds))
    if store is not None:
        for result in results:
            store.save(result.checkpoint)
    matrices = tuple(tuple(tuple(int(v) for v in row) for row in r.confusion)
                     for r in results if r.confusion is not None)
    return CvReport(task=space.task, metric=metric_name(space), labels=space.labels,
                    fold_scores=tuple(r.score for r in results), confusion_matrices=matrices,
                    predictions=predictions, selection=selection,
                    checkpoints=tuple(r.checkpoint for r in results))


def _selection(config: TrainConfig) -> str:
    return "inner_val" if config.val_frac > 0 else "eval_fold"


def _folds(plan: FoldPlan, description: str):
    return tqdm(range(plan.k), desc=description, disable=_progress["disable"], leave=False)


def _task_data(corpus: Corpus, task: str, features: FeatureBuilder, plan: FoldPlan,
               labels: Optional[Sequence[str]] = None):
    space = build_label_space(corpus, task, labels)
    units = task_units(corpus, task)
    if not units:
        raise CorpusValidationError(f"Corpus has no {task} labels")
    return space, units, features.encode(units), planned_indices(units, plan)


def run_cv(corpus: Corpus, task: str, features: FeatureBuilder, config: TrainConfig,
           plan: Optional[FoldPlan] = None, store: Optional[CheckpointStore] = None,
           labels: Optional[Sequence[str]] = None) -> CvReport:
    """k-fold cross-validation of one task from independent initializations."""
    plan = plan or plan_folds(corpus, task, config.k, config.seed_base)
    space, units, X, indices = _task_data(corpus, task, features, plan, labels)
    results = []
    for fold in _folds(plan, f"{task} folds"):
        train, held = fold_splits(units, X, plan, fold, indices)
        results.append(run_fold(train, held, space, config, fold))
    return assemble_report(space, results, _selection(config), store)


def run_task_dependent(corpus: Corpus, features: FeatureBuilder, config: TrainConfig,
                       plan: Optional[FoldPlan] = None, tasks: Sequence[str] = TASKS,
                       store: Optional[CheckpointStore] = None,
                       labels: Optional[Mapping[str, Sequence[str]]] = None) -> Dict[str, CvReport]:
    """
    Per fold, train the tasks in order and hand each task's best trunk to the next one
    with a freshly drawn head. Every task uses the same fold plan.
    """
    tasks = [task for task in TASKS if task in tasks]
    missing = [task for task in tasks if not task_units(corpus, task)]
    if missing:
        raise CorpusValidationError(f"Task-dependent training needs labels for {', '.join(missing)}")
    plan = plan or plan_folds(corpus, tasks[0], config.k, config.seed_base)
    labels = labels or {}
    data = {task: _task_data(corpus, task, features, plan, labels.get(task)) for task in tasks}

    results: Dict[str, List[FoldResult]] = {task: [] for task in tasks}
    for fold in _folds(plan, "dependent folds"):
        previous: Optional[ModelCheckpoint] = None
        for task in tasks:
            space, units, X, indices = data[task]
            train, held = fold_splits(units, X, plan, fold, indices)
            initial = None
            if previous is not None:
                initial = transfer_trunk(previous, space.size, space.mode,
                                         derive_seed(config.seed_base, fold, "head", task), dim_in=X.shape[1])
            result = run_fold(train, held, space, config, fold, initial)
            results[task].append(result)
            previous = result.checkpoint

    return {task: assemble_report(data[task][0], results[task], _selection(config), store) for task in tasks}


def run_strategy(corpus: Corpus, features: FeatureBuilder, config: TrainConfig, tasks: Sequence[str],
                 plan: Optional[FoldPlan] = None, store: Optional[CheckpointStore] = None,
                 labels: Optional[Mapping[str, Sequence[str]]] = None) -> Dict[str, CvReport]:
    """Dispatch to the task-dependent chain or to independent per-task runs on one shared plan."""
    tasks = [task for task in TASKS if task in tasks]
    plan = plan or plan_folds(corpus, tasks[0], config.k, config.seed_base)
    if config.strategy == "dependent":
        return run_task_dependent(corpus, features, config, plan, tasks, store, labels)
    labels = labels or {}
    return {task: run_cv(corpus, task, features, config, plan, store, labels.get(task)) for task in tasks}


def ablation_configs(config: TrainConfig) -> Dict[str, TrainConfig]:
    """Each row removes one more component: class weights, then sample weights, then the task chain."""
    return {
        "full": replace(config, class_weights=True, sample_weights=True, strategy="dependent"),
        "w/o cw": replace(config, class_weights=False, sample_weights=True, strategy="dependent"),
        "w/o sw": replace(config, class_weights=False, sample_weights=False, strategy="dependent"),
        "w/o td": replace(config, class_weights=False, sample_weights=False, strategy="agnostic"),
    }


def run_ablation(corpus: Corpus, features: FeatureBuilder, config: TrainConfig,
                 tasks: Sequence[str] = TASKS, plan: Optional[FoldPlan] = None,
                 labels: Optional[Mapping[str, Sequence[str]]] = None) -> AblationReport:
    """All variants on one fold plan and one seed base; the class-weight row exists only for multiclass tasks."""
    tasks = [task for task in TASKS if task in tasks]
    plan = plan or plan_folds(corpus, tasks[0], config.k, config.seed_base)
    report = AblationReport(plan=plan)
    for variant, variant_config in ablation_configs(config).items():
        logger.info("Ablation variant '%s'", variant)
        reports = run_strategy(corpus, features, variant_config, tasks, plan, labels=labels)
        if variant == "w/o cw":
            reports = {task: r for task, r in reports.items() if r.metric == "macro_f1"}
        report.rows[variant] = reports
    return report


def run_monolingual(corpus: Corpus, config: TrainConfig,
                    tfidf_config: TfidfConfig = TfidfConfig()) -> Dict[str, CvReport]:
    """
    Per-language T1 baseline: TF-IDF fitted on the language's articles, under-sampled
    training folds and a trunkless softmax (logistic regression) head.
    """
    baseline = replace(config, undersample=True, class_weights=False, sample_weights=False,
                       hidden=None, strategy="agnostic")
    reports = {}
    for language in corpus.languages():
        subset = corpus.filter(lambda d, lang=language: d.language == lang)
        labelled = task_units(subset, "T1")
        if len(labelled) < baseline.k:
            logger.warning("Skipping language '%s': %d labelled articles for k=%d", language,
                           len(labelled), baseline.k)
            continue
        features = FeatureBuilder.from_spec("tfidf", [d.tokens for d in subset], (), tfidf_config)
        reports[language] = run_cv(subset, "T1", features, baseline)
    return reports


def run_zero_shot(corpus: Corpus, task: str, features: FeatureBuilder, config: TrainConfig, language: str,
                  plan: Optional[FoldPlan] = None) -> CvReport:
    """
    Each fold trains only on other languages' units outside the fold and is scored on every
    unit of the held-out language.
    """
    plan = plan or plan_folds(corpus, task, config.k, config.seed_base)
    space, units, X, indices = _task_data(corpus, task, features, plan)
    target = [i for i in indices if units[i].language == language]
    if not target:
        raise CorpusValidationError(f"No labelled {task} units in language '{language}'")
    full = Split(tuple(units), X)
    held = full.subset(target)

    results = []
    for fold in _folds(plan, f"{task} zero-shot {language}"):
        train = full.subset([i for i in indices
                             if units[i].language != language and plan.fold_of(units[i].article_id) != fold])
        results.append(run_fold(train, held, space, config, fold))
    return assemble_report(space, results, f"zero_shot:{language}", keep_predictions=False)


def language_breakdown(report: CvReport, corpus: Corpus) -> Dict[str, float]:
    """Task metric per language over a report's out-of-fold predictions."""
    space = build_label_space(corpus, report.task, [l for l in report.labels])
    units = {unit.unit_id: unit for unit in task_units(corpus, report.task)}
    golds = {unit_id: sorted(units[unit_id].labels) for unit_id in report.predictions}
    languages = {unit_id: units[unit_id].language for unit_id in report.predictions}
    return by_language(report.predictions, golds, languages, space)
