"""
Synthetic Fixture Generator
Class-conditional Gaussian corpora with exact class counts, and a correlated three-task corpus
for comparing task-dependent against task-agnostic training
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from models import NONE_LABEL, Corpus, Document, EmbeddingTable, ImbalanceToolkitError, Paragraph
from services.corpus_loader import paragraph_unit_id
from services.features import FeatureBuilder

logger = logging.getLogger(__name__)

LANGUAGES = ("en", "fr", "de", "it", "po", "ru")
SHARED_WORDS = tuple(f"common{i}" for i in range(40))


def split_counts(ratio: Sequence[float], n: int) -> List[int]:
    """Largest-remainder apportionment of n over the ratio; remainder ties go to the lower index."""
    if not ratio or any(r <= 0 for r in ratio):
        raise ImbalanceToolkitError("Ratio parts must all be positive")
    if n < len(ratio):
        raise ImbalanceToolkitError(f"n={n} is smaller than the {len(ratio)} classes")
    total = float(sum(ratio))
    quotas = [n * r / total for r in ratio]
    counts = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(ratio)), key=lambda j: (-(quotas[j] - counts[j]), j))
    for j in order[:n - sum(counts)]:
        counts[j] += 1
    if any(c < 1 for c in counts):
        raise ImbalanceToolkitError(f"Ratio {list(ratio)} leaves an empty class at n={n}")
    return counts


def parse_ratio(text: str) -> List[float]:
    try:
        parts = [float(part) for part in text.split(":")]
    except ValueError:
        raise ImbalanceToolkitError(f"Ratio '{text}' must look like 878:269:87") from None
    if len(parts) < 2:
        raise ImbalanceToolkitError("Ratio needs at least two classes")
    return parts


def simplex_means(classes: int, dim: int, separation: float) -> np.ndarray:
    """Centered, scaled simplex vertices: every pair of class means lies `separation` apart."""
    if dim < classes:
        raise ImbalanceToolkitError(f"dim={dim} must be at least the number of classes ({classes})")
    means = np.zeros((classes, dim))
    means[np.arange(classes), np.arange(classes)] = separation / math.sqrt(2.0)
    return means - means.mean(axis=0)


def _placeholder_text(rng: np.random.Generator, label_index: int, length: int) -> str:
    class_words = [f"topic{label_index}w{i}" for i in range(20)]
    words = [class_words[rng.integers(len(class_words))] if rng.random() < 0.3
             else SHARED_WORDS[rng.integers(len(SHARED_WORDS))] for _ in range(length)]
    return " ".join(words)


@dataclass
class Fixture:
    corpus: Corpus
    embeddings: Dict[str, np.ndarray]

    @property
    def dim(self) -> int:
        return int(next(iter(self.embeddings.values())).shape[0])

    def features(self) -> FeatureBuilder:
        return FeatureBuilder("embeddings", embeddings=EmbeddingTable(dim=self.dim, vectors=self.embeddings))

    def write(self, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
        """corpus.jsonl and embeddings.jsonl in out_dir."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus_path = out_dir / "corpus.jsonl"
        embeddings_path = out_dir / "embeddings.jsonl"
        with open(corpus_path, "w", encoding="utf-8") as handle:
            for document in self.corpus:
                handle.write(json.dumps(_document_record(document), sort_keys=True) + "\n")
        with open(embeddings_path, "w", encoding="utf-8") as handle:
            for unit_id in sorted(self.embeddings):
                record = {"id": unit_id, "vector": [float(v) for v in self.embeddings[unit_id]]}
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        logger.info("Wrote %d documents to %s", len(self.corpus), corpus_path)
        return corpus_path, embeddings_path


def _document_record(document: Document) -> dict:
    record = {"id": document.id, "language": document.language, "text": document.raw_text or document.text}
    if document.labels_t1 is not None:
        record["labels_t1"] = document.labels_t1
    if document.labels_t2 is not None:
        record["labels_t2"] = sorted(document.labels_t2)
    if document.paragraphs:
        record["paragraphs"] = [
            {"para_id": p.para_id, "text": p.raw_text or p.text,
             "labels_t3": sorted(p.labels_t3 - {NONE_LABEL}) if p.labels_t3 is not None else None}
            for p in document.paragraphs
        ]
    return record


def make_imbalanced_fixture(counts: Sequence[int], dim: int = 16, separation: float = 3.0, seed: int = 0,
                            labels: Optional[Sequence[str]] = None) -> Fixture:
    """
    Exactly counts[j] documents of class j with unit-covariance Gaussian embeddings around
    simplex means. Documents are shuffled; languages cycle over a fixed tag list.
    """
    labels = list(labels) if labels is not None else [f"class{j}" for j in range(len(counts))]
    if len(labels) != len(counts):
        raise ImbalanceToolkitError(f"Got {len(labels)} label names for {len(counts)} classes")
    if any(c < 1 for c in counts):
        raise ImbalanceToolkitError("Every class needs at least one document")

    rng = np.random.default_rng(seed)
    means = simplex_means(len(counts), dim, separation)
    classes = np.repeat(np.arange(len(counts)), counts)
    classes = classes[rng.permutation(len(classes))]

    documents, embeddings = [], {}
    for i, j in enumerate(classes):
        doc_id = f"doc{i:05d}"
        text = _placeholder_text(rng, int(j), int(rng.integers(20, 60)))
        documents.append(Document(id=doc_id, language=LANGUAGES[i % len(LANGUAGES)], text=text, raw_text=text,
                                  labels_t1=labels[j]))
        embeddings[doc_id] = means[j] + rng.standard_normal(dim)
    return Fixture(corpus=Corpus(tuple(documents)), embeddings=embeddings)


def make_correlated_fixture(n: int = 300, dim: int = 16, seed: int = 0, separation: float = 3.0,
                            ratio: Sequence[float] = (6, 3, 1), paragraphs: int = 2) -> Fixture:
    """
    T1 labels drive the embeddings. The T2 frame set is the T1 class's frame plus one frame drawn
    independently of the features. The first paragraph of each article carries the class's technique,
    the others carry none; paragraph vectors are noisy copies of the article vector.
    """
    counts = split_counts(ratio, n)
    rng = np.random.default_rng(seed)
    means = simplex_means(len(counts), dim, separation)
    classes = np.repeat(np.arange(len(counts)), counts)
    classes = classes[rng.permutation(len(classes))]

    documents, embeddings = [], {}
    for i, j in enumerate(classes):
        doc_id = f"doc{i:05d}"
        vector = means[j] + rng.standard_normal(dim)
        frames = {f"frame{j}"}
        if rng.random() < 0.2:
            frames.add("frame_extra")

        units = []
        for p in range(paragraphs):
            text = _placeholder_text(rng, int(j), int(rng.integers(8, 20)))
            techniques = frozenset({f"technique{j}"}) if p == 0 else frozenset({NONE_LABEL})
            units.append(Paragraph(para_id=p, text=text, raw_text=text, labels_t3=techniques))
            embeddings[paragraph_unit_id(doc_id, p)] = vector + 0.3 * rng.standard_normal(dim)

        text = " ".join(u.text for u in units)
        documents.append(Document(id=doc_id, language=LANGUAGES[i % len(LANGUAGES)], text=text, raw_text=text,
                                  labels_t1=f"class{j}", labels_t2=frozenset(frames), paragraphs=tuple(units)))
        embeddings[doc_id] = vector
    return Fixture(corpus=Corpus(tuple(documents)), embeddings=embeddings)
