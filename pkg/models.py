"""
Data models for the imbalanced multilingual news classification toolkit.
Includes corpus, label, fold, feature, model and report types with validation.
"""

import math
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np


TASKS = ("T1", "T2", "T3")
MULTICLASS = "multiclass"
MULTILABEL = "multilabel"
NONE_LABEL = "None"
TASK_MODES = {"T1": MULTICLASS, "T2": MULTILABEL, "T3": MULTILABEL}
STRATEGIES = ("agnostic", "dependent", "monolingual")


class ImbalanceToolkitError(ValueError):
    """Base error for every failure the toolkit reports to its callers."""


class CorpusFormatError(ImbalanceToolkitError):
    """A corpus line could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = f"{path}:{line}: " if path and line else (f"line {line}: " if line else "")
        super().__init__(f"{location}{message}")


class CorpusValidationError(ImbalanceToolkitError):
    """Corpus content breaks an invariant (duplicate id, unknown task or label)."""

    def __init__(self, message: str, line: Optional[int] = None, kind: str = "line"):
        self.line = line
        self.kind = kind
        super().__init__(f"{kind} {line}: {message}" if line else message)


class FeatureError(ImbalanceToolkitError):
    """Feature extraction could not be fitted or applied."""


class EmbeddingError(FeatureError):
    """Embedding file is incomplete or inconsistent."""

    def __init__(self, message: str, line: Optional[int] = None, missing_ids: Sequence[str] = ()):
        self.line = line
        self.missing_ids = list(missing_ids)
        super().__init__(f"line {line}: {message}" if line else message)


class FoldPlanError(ImbalanceToolkitError):
    """A fold plan cannot be built for the requested corpus and k."""


class TrainingError(ImbalanceToolkitError):
    """Training diverged or was given unusable splits."""

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        self.epoch = epoch
        self.batch = batch
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ModelShapeError(ImbalanceToolkitError):
    """Parameters, inputs or checkpoints have incompatible shapes or modes."""


class ConfigError(ImbalanceToolkitError):
    """Run configuration failed validation."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


def task_mode(task: str) -> str:
    """Return the classification mode of a task id."""
    if task not in TASK_MODES:
        raise CorpusValidationError(f"Unknown task '{task}'. Must be one of: {', '.join(TASKS)}")
    return TASK_MODES[task]


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Paragraph:
    """A subtask-3 unit: one paragraph of an article."""
    para_id: int
    text: str
    labels_t3: Optional[FrozenSet[str]] = None
    raw_text: str = ""

    def __post_init__(self):
        if self.labels_t3 is not None and NONE_LABEL in self.labels_t3 and len(self.labels_t3) > 1:
            raise CorpusValidationError(
                f"Paragraph {self.para_id}: '{NONE_LABEL}' cannot be combined with other techniques"
            )

    @property
    def tokens(self) -> List[str]:
        return self.text.split()


@dataclass(frozen=True)
class Document:
    """A news article with its per-task labels."""
    id: str
    language: str
    text: str
    raw_text: str = ""
    labels_t1: Optional[str] = None
    labels_t2: Optional[FrozenSet[str]] = None
    paragraphs: Tuple[Paragraph, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise CorpusValidationError("Document id must be a non-empty string")
        previous = None
        for paragraph in self.paragraphs:
            if previous is not None and paragraph.para_id <= previous:
                raise CorpusValidationError(
                    f"Document {self.id}: para_id {paragraph.para_id} is not strictly increasing"
                )
            previous = paragraph.para_id

    @property
    def tokens(self) -> List[str]:
        return self.text.split()

    def has_labels(self, task: str) -> bool:
        if task == "T1":
            return self.labels_t1 is not None
        if task == "T2":
            return self.labels_t2 is not None
        return any(p.labels_t3 is not None for p in self.paragraphs)


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable collection of documents with unique ids."""
    documents: Tuple[Document, ...] = ()

    def __post_init__(self):
        seen = set()
        for document in self.documents:
            if document.id in seen:
                raise CorpusValidationError(f"Duplicate document id '{document.id}'")
            seen.add(document.id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def by_id(self) -> Dict[str, Document]:
        return {document.id: document for document in self.documents}

    def languages(self) -> List[str]:
        return sorted({document.language for document in self.documents})

    def filter(self, predicate) -> "Corpus":
        return Corpus(tuple(d for d in self.documents if predicate(d)))


@dataclass(frozen=True)
class Unit:
    """A classification unit: a document (T1, T2) or a paragraph (T3)."""
    unit_id: str
    article_id: str
    language: str
    tokens: Tuple[str, ...]
    labels: FrozenSet[str] = frozenset()


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label set of one task together with per-label unit counts."""
    task: str
    labels: Tuple[str, ...]
    mode: str
    counts: Tuple[int, ...]

    def __post_init__(self):
        if self.mode != task_mode(self.task):
            raise CorpusValidationError(f"Task {self.task} must be {task_mode(self.task)}, got {self.mode}")
        if len(set(self.labels)) != len(self.labels):
            raise CorpusValidationError(f"Label space for {self.task} has duplicate labels")
        if len(self.counts) != len(self.labels):
            raise CorpusValidationError(f"Label space for {self.task} has {len(self.counts)} counts "
                                        f"for {len(self.labels)} labels")
        if any(count < 0 for count in self.counts):
            raise CorpusValidationError(f"Label space for {self.task} has negative counts")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def none_index(self) -> Optional[int]:
        return self.labels.index(NONE_LABEL) if NONE_LABEL in self.labels else None

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise CorpusValidationError(f"Label '{label}' is not in the {self.task} label space") from None

    def recount(self, units: Sequence[Unit]) -> "LabelSpace":
        """Same labels, counts taken from the given units."""
        counts = [0] * self.size
        for unit in units:
            for label in unit.labels:
                counts[self.index(label)] += 1
        return replace(self, counts=tuple(counts))


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic article-id to fold-index assignment."""
    k: int
    seed: int
    task: str
    assignment: Mapping[str, int]

    def __post_init__(self):
        sizes = [0] * self.k
        for article_id, fold in self.assignment.items():
            if not 0 <= fold < self.k:
                raise FoldPlanError(f"Article {article_id} assigned to fold {fold} outside [0, {self.k})")
            sizes[fold] += 1
        if self.assignment and max(sizes) - min(sizes) > 1:
            raise FoldPlanError(f"Fold sizes {sizes} differ by more than one")

    def fold_of(self, article_id: str) -> Optional[int]:
        return self.assignment.get(article_id)

    def fold_sizes(self) -> List[int]:
        sizes = [0] * self.k
        for fold in self.assignment.values():
            sizes[fold] += 1
        return sizes

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "task": self.task,
                "assignment": dict(sorted(self.assignment.items()))}

    @classmethod
    def from_dict(cls, data: dict) -> "FoldPlan":
        return cls(k=int(data["k"]), seed=int(data["seed"]), task=data["task"],
                   assignment={str(a): int(f) for a, f in data["assignment"].items()})


@dataclass(frozen=True)
class StatsReport:
    """Token statistics over the units of one task."""
    task: str
    min_tokens: int
    max_tokens: int
    avg_tokens: float
    n_units: int

    def __post_init__(self):
        if not self.min_tokens <= self.avg_tokens <= self.max_tokens:
            raise ImbalanceToolkitError(
                f"Inconsistent token statistics: {self.min_tokens} <= {self.avg_tokens} <= {self.max_tokens}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TfidfConfig:
    max_tokens: int = 512
    min_df: int = 1


@dataclass(frozen=True)
class TfidfModel:
    """Fitted TF-IDF vocabulary with smoothed document frequencies."""
    vocabulary: Mapping[str, int]
    doc_freq: Tuple[int, ...]
    n_docs: int
    max_tokens: int = 512

    def __post_init__(self):
        if sorted(self.vocabulary.values()) != list(range(len(self.vocabulary))):
            raise FeatureError("TF-IDF vocabulary indices must be dense 0..V-1")
        if len(self.doc_freq) != len(self.vocabulary):
            raise FeatureError("TF-IDF doc_freq must align with the vocabulary")
        if any(not 1 <= df <= self.n_docs for df in self.doc_freq):
            raise FeatureError("TF-IDF doc_freq entries must lie in [1, n_docs]")

    @property
    def dim(self) -> int:
        return len(self.vocabulary)

    def idf(self) -> np.ndarray:
        df = np.asarray(self.doc_freq, dtype=np.float64)
        return np.log((1.0 + self.n_docs) / (1.0 + df)) + 1.0

    def to_dict(self) -> dict:
        return {"vocabulary": dict(sorted(self.vocabulary.items())), "doc_freq": list(self.doc_freq),
                "n_docs": self.n_docs, "max_tokens": self.max_tokens}

    @classmethod
    def from_dict(cls, data: dict) -> "TfidfModel":
        return cls(vocabulary={t: int(i) for t, i in data["vocabulary"].items()},
                   doc_freq=tuple(int(v) for v in data["doc_freq"]),
                   n_docs=int(data["n_docs"]), max_tokens=int(data["max_tokens"]))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    source: str

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class EmbeddingTable:
    """Precomputed unit vectors keyed by unit id."""
    dim: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        for unit_id, vector in self.vectors.items():
            if vector.shape != (self.dim,):
                raise EmbeddingError(f"Vector for '{unit_id}' has length {vector.shape[0]}, expected {self.dim}")


@dataclass(frozen=True)
class Split:
    """Units of one side of a fold together with their feature matrix."""
    units: Tuple[Unit, ...]
    X: np.ndarray

    def __len__(self) -> int:
        return len(self.units)

    def subset(self, indices: Sequence[int]) -> "Split":
        indices = list(indices)
        return Split(tuple(self.units[i] for i in indices), self.X[indices])


# ---------------------------------------------------------------------------
# Imbalance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassWeights:
    task: str
    weights: Tuple[float, ...]

    def __post_init__(self):
        if any(not (w > 0 and math.isfinite(w)) for w in self.weights):
            raise ImbalanceToolkitError("Class weights must be finite and positive")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class SampleWeights:
    weights: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise ImbalanceToolkitError("Sample weights must be finite and positive")

    def __len__(self) -> int:
        return int(self.weights.shape[0])


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

PARAM_NAMES = ("trunk_w", "trunk_b", "head_w", "head_b")


@dataclass
class ModelParams:
    """Optional relu trunk followed by a task head."""
    head_w: np.ndarray
    head_b: np.ndarray
    mode: str
    trunk_w: Optional[np.ndarray] = None
    trunk_b: Optional[np.ndarray] = None
    nonlinearity: str = "relu"

    def __post_init__(self):
        if self.mode not in (MULTICLASS, MULTILABEL):
            raise ModelShapeError(f"Unknown mode '{self.mode}'")
        if (self.trunk_w is None) != (self.trunk_b is None):
            raise ModelShapeError("Trunk weight and bias must be given together")
        if self.trunk_w is not None and self.trunk_w.shape[1] != self.head_w.shape[0]:
            raise ModelShapeError(f"Trunk output {self.trunk_w.shape[1]} does not match head input "
                                  f"{self.head_w.shape[0]}")
        if self.head_b.shape != (self.head_w.shape[1],):
            raise ModelShapeError("Head bias must match the label count")
        for name, array in self.arrays().items():
            if not np.all(np.isfinite(array)):
                raise ModelShapeError(f"Parameter {name} has non-finite entries")

    @property
    def has_trunk(self) -> bool:
        return self.trunk_w is not None

    @property
    def dim_in(self) -> int:
        return int(self.trunk_w.shape[0] if self.has_trunk else self.head_w.shape[0])

    @property
    def label_count(self) -> int:
        return int(self.head_w.shape[1])

    def arrays(self) -> Dict[str, np.ndarray]:
        """Parameters by name, trunk first; absent trunk entries omitted."""
        return {name: getattr(self, name) for name in PARAM_NAMES if getattr(self, name) is not None}

    def copy(self) -> "ModelParams":
        return ModelParams(mode=self.mode, nonlinearity=self.nonlinearity,
                           **{name: array.copy() for name, array in self.arrays().items()})


@dataclass
class OptimizerState:
    """Adaptive-moment state with decoupled weight decay hyperparameters."""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.step < 0:
            raise ModelShapeError("Optimizer step count must be non-negative")
        if self.lr <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ModelShapeError("Optimizer lr and eps must be positive, weight_decay non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ModelShapeError(f"Invalid betas: ({self.beta1}, {self.beta2})")

    @classmethod
    def fresh(cls, params: ModelParams, lr: float = 3e-5, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 0.01) -> "OptimizerState":
        arrays = params.arrays()
        return cls(step=0, m={n: np.zeros_like(a) for n, a in arrays.items()},
                   v={n: np.zeros_like(a) for n, a in arrays.items()},
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


@dataclass(frozen=True)
class PredictionVector:
    probs: np.ndarray
    mode: str

    def __post_init__(self):
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise ModelShapeError("Probabilities must lie in [0, 1]")
        if self.mode == MULTICLASS and abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ModelShapeError("Multiclass probabilities must sum to 1")


@dataclass
class ModelCheckpoint:
    """Best-epoch parameters of one fold with provenance."""
    params: ModelParams
    task: str
    fold: int
    epoch: int
    score: float
    labels: Tuple[str, ...]
    optimizer: Optional[OptimizerState] = None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Training and cross-validation settings; defaults follow the published setup."""
    epochs_max: int = 30
    patience: int = 5
    batch_size: int = 16
    k: int = 10
    strategy: str = "dependent"
    class_weights: bool = True
    sample_weights: bool = True
    undersample: bool = False
    seed_base: int = 0
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    hidden: Optional[int] = 128
    threshold: float = 0.5
    val_frac: float = 0.0
    sampler_epoch_multiplier: float = 1.0

    def validate(self, prefix: str = "train") -> List[Tuple[str, str]]:
        """Return list of (field_path, message) errors, empty list if valid."""
        errors = []

        def check(condition: bool, name: str, message: str):
            if not condition:
                errors.append((f"{prefix}.{name}", message))

        check(self.epochs_max >= 1, "epochs_max", "must be at least 1")
        check(0 <= self.patience <= self.epochs_max, "patience", "must lie in [0, epochs_max]")
        check(self.batch_size >= 1, "batch_size", "must be at least 1")
        check(self.k >= 2, "k", "must be at least 2")
        check(self.strategy in STRATEGIES, "strategy", f"must be one of: {', '.join(STRATEGIES)}")
        check(self.seed_base >= 0, "seed_base", "must be a non-negative integer")
        check(self.lr > 0, "lr", "must be positive")
        check(0.0 <= self.beta1 < 1.0, "beta1", "must lie in [0, 1)")
        check(0.0 <= self.beta2 < 1.0, "beta2", "must lie in [0, 1)")
        check(self.eps > 0, "eps", "must be positive")
        check(self.weight_decay >= 0, "weight_decay", "must be non-negative")
        check(self.hidden is None or self.hidden >= 1, "hidden", "must be null or at least 1")
        check(0.0 <= self.threshold <= 1.0, "threshold", "must lie in [0, 1]")
        check(0.0 <= self.val_frac < 1.0, "val_frac", "must lie in [0, 1)")
        check(self.sampler_epoch_multiplier > 0, "sampler_epoch_multiplier", "must be positive")
        return errors

    def for_task(self, task: str) -> "TrainConfig":
        """Class weights and under-sampling only apply to multiclass tasks."""
        if task_mode(task) == MULTICLASS:
            return self
        return replace(self, class_weights=False, undersample=False)


@dataclass
class RunConfig:
    """Fully resolved configuration of one CLI run."""
    corpus: str = ""
    extra: List[str] = field(default_factory=list)
    output_dir: str = "runs/latest"
    task: str = "T1"
    features: str = "tfidf"
    tfidf_max_tokens: int = 512
    tfidf_min_df: int = 1
    by_language: bool = False
    zero_shot: Optional[str] = None
    log_level: str = "INFO"
    labels: Dict[str, List[str]] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)

    def tasks(self) -> Tuple[str, ...]:
        return TASKS if self.task == "all" else (self.task,)

    def tfidf_config(self) -> TfidfConfig:
        return TfidfConfig(max_tokens=self.tfidf_max_tokens, min_df=self.tfidf_min_df)

    def validate(self) -> List[Tuple[str, str]]:
        errors = []
        if self.task not in TASKS + ("all",):
            errors.append(("task", f"must be one of: {', '.join(TASKS + ('all',))}"))
        if self.features != "tfidf" and not (self.features.startswith("embeddings:")
                                             and len(self.features) > len("embeddings:")):
            errors.append(("features", "must be 'tfidf' or 'embeddings:PATH'"))
        if self.tfidf_max_tokens < 1:
            errors.append(("tfidf_max_tokens", "must be at least 1"))
        if self.tfidf_min_df < 1:
            errors.append(("tfidf_min_df", "must be at least 1"))
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            errors.append(("log_level", "must be DEBUG, INFO, WARNING or ERROR"))
        for task in self.labels:
            if task not in TASKS:
                errors.append((f"labels.{task}", f"must be one of: {', '.join(TASKS)}"))
        errors.extend(self.train.validate())
        return errors

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class CvReport:
    """Per-fold scores and diagnostics of one task's cross-validation."""
    task: str
    metric: str
    labels: Tuple[str, ...]
    fold_scores: Tuple[float, ...]
    confusion_matrices: Tuple[Tuple[Tuple[int, ...], ...], ...] = ()
    predictions: Dict[str, List[str]] = field(default_factory=dict)
    selection: str = "eval_fold"
    checkpoints: Tuple[ModelCheckpoint, ...] = field(default=(), compare=False, repr=False)

    @property
    def k(self) -> int:
        return len(self.fold_scores)

    @property
    def mean(self) -> float:
        return sum(self.fold_scores) / len(self.fold_scores)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "metric": self.metric,
            "labels": list(self.labels),
            "k": self.k,
            "fold_scores": list(self.fold_scores),
            "mean": self.mean,
            "confusion_matrices": [[list(row) for row in matrix] for matrix in self.confusion_matrices],
            "checkpoints": [{"fold": c.fold, "epoch": c.epoch, "score": c.score} for c in self.checkpoints],
            "selection": self.selection,
        }


ABLATION_VARIANTS = ("full", "w/o cw", "w/o sw", "w/o td")


@dataclass
class AblationReport:
    """CvReports per variant and task, all computed on one fold plan."""
    plan: FoldPlan
    rows: Dict[str, Dict[str, CvReport]] = field(default_factory=dict)

    def variants_for(self, task: str) -> List[str]:
        return [variant for variant in ABLATION_VARIANTS if task in self.rows.get(variant, {})]

    def to_dict(self) -> dict:
        return {
            "k": self.plan.k,
            "seed": self.plan.seed,
            "rows": {variant: {task: report.to_dict() for task, report in tasks.items()}
                     for variant, tasks in self.rows.items()},
        }
