"""
Feature Extraction Service
TF-IDF vectors for the monolingual baseline and precomputed embeddings for the multilingual path
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.preprocessing import normalize

from models import (
    EmbeddingError, EmbeddingTable, FeatureError, FeatureVector, TfidfConfig, TfidfModel, Unit,
)

logger = logging.getLogger(__name__)


def _identity(tokens):
    return tokens


def _truncate(units: Iterable[Sequence[str]], max_tokens: int) -> List[List[str]]:
    return [list(unit[:max_tokens]) for unit in units]


def fit_tfidf(units: Sequence[Sequence[str]], config: TfidfConfig = TfidfConfig()) -> TfidfModel:
    """
    Fit the vocabulary (terms with document frequency >= min_df, sorted) over token lists
    truncated to max_tokens.
    """
    if not units:
        raise FeatureError("Cannot fit TF-IDF on an empty unit list")

    vectorizer = CountVectorizer(analyzer=_identity, min_df=config.min_df, binary=True, lowercase=False)
    try:
        presence = vectorizer.fit_transform(_truncate(units, config.max_tokens))
    except ValueError as e:
        # sklearn refuses an empty or fully pruned vocabulary
        raise FeatureError(f"TF-IDF vocabulary is empty: {e}") from e

    doc_freq = np.asarray(presence.sum(axis=0)).ravel()
    vocabulary = {term: int(index) for term, index in sorted(vectorizer.vocabulary_.items())}
    model = TfidfModel(vocabulary=vocabulary, doc_freq=tuple(int(df) for df in doc_freq),
                       n_docs=len(units), max_tokens=config.max_tokens)
    logger.debug("Fitted TF-IDF on %d units, vocabulary size %d", len(units), model.dim)
    return model


def transform_many(model: TfidfModel, units: Sequence[Sequence[str]]) -> np.ndarray:
    """Raw term counts times smoothed idf, L2-normalized per row; OOV tokens are ignored."""
    vectorizer = CountVectorizer(analyzer=_identity, vocabulary=model.vocabulary, lowercase=False)
    counts = vectorizer.transform(_truncate(units, model.max_tokens)).astype(np.float64)
    weighted = counts.multiply(model.idf()).tocsr()
    return normalize(weighted, norm="l2").toarray()


def transform_tfidf(model: TfidfModel, unit: Sequence[str]) -> FeatureVector:
    return FeatureVector(values=transform_many(model, [unit])[0], source="tfidf")


def load_embeddings(path: Union[str, Path], expected_ids: Iterable[str]) -> EmbeddingTable:
    """Read {"id", "vector"} JSON Lines and check coverage, dimension and finiteness."""
    path = Path(path)
    vectors: Dict[str, np.ndarray] = {}
    dim: Optional[int] = None

    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                unit_id = record["id"]
                vector = np.asarray(record["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise EmbeddingError(f"Malformed embedding record: {e}", line=line_number) from e

            if not isinstance(unit_id, str):
                raise EmbeddingError("Embedding 'id' must be a string", line=line_number)
            if vector.ndim != 1:
                raise EmbeddingError("Embedding 'vector' must be a flat list", line=line_number)
            if unit_id in vectors:
                raise EmbeddingError(f"Duplicate embedding id '{unit_id}'", line=line_number)
            if dim is None:
                dim = int(vector.shape[0])
            elif vector.shape[0] != dim:
                raise EmbeddingError(f"Vector for '{unit_id}' has dimension {vector.shape[0]}, "
                                     f"expected {dim}", line=line_number)
            if not np.all(np.isfinite(vector)):
                raise EmbeddingError(f"Vector for '{unit_id}' has non-finite values", line=line_number)
            vectors[unit_id] = vector

    missing = sorted(set(expected_ids) - set(vectors))
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise EmbeddingError(f"Missing embeddings for {len(missing)} id(s): {shown}", missing_ids=missing)
    if dim is None:
        raise EmbeddingError(f"No embeddings found in {path}")

    logger.info("Loaded %d embeddings of dimension %d from %s", len(vectors), dim, path)
    return EmbeddingTable(dim=dim, vectors=vectors)


class FeatureBuilder:
    """Encodes units into a dense feature matrix from one configured source"""

    def __init__(self, source: str, tfidf: Optional[TfidfModel] = None,
                 embeddings: Optional[EmbeddingTable] = None, embeddings_path: Optional[str] = None):
        if source == "tfidf" and tfidf is None:
            raise FeatureError("TF-IDF features need a fitted model")
        if source == "embeddings" and embeddings is None:
            raise FeatureError("Embedding features need a loaded table")
        self.source = source
        self.tfidf = tfidf
        self.embeddings = embeddings
        self.embeddings_path = embeddings_path

    @classmethod
    def from_spec(cls, spec: str, documents: Sequence[Sequence[str]], unit_ids: Iterable[str],
                  tfidf_config: TfidfConfig = TfidfConfig()) -> "FeatureBuilder":
        """
        Build from a 'tfidf' or 'embeddings:PATH' spec. TF-IDF is fitted label-free on the
        given document token lists; embeddings must cover every unit id.
        """
        if spec == "tfidf":
            return cls("tfidf", tfidf=fit_tfidf(documents, tfidf_config))
        if spec.startswith("embeddings:"):
            path = spec[len("embeddings:"):]
            return cls("embeddings", embeddings=load_embeddings(path, unit_ids), embeddings_path=path)
        raise FeatureError(f"Unknown feature source '{spec}'. Use 'tfidf' or 'embeddings:PATH'")

    @property
    def dim(self) -> int:
        return self.tfidf.dim if self.source == "tfidf" else self.embeddings.dim

    def encode(self, units: Sequence[Unit]) -> np.ndarray:
        if not units:
            return np.zeros((0, self.dim), dtype=np.float64)
        if self.source == "tfidf":
            return transform_many(self.tfidf, [unit.tokens for unit in units])
        missing = [unit.unit_id for unit in units if unit.unit_id not in self.embeddings.vectors]
        if missing:
            raise EmbeddingError(f"Missing embeddings for {len(missing)} unit(s): {', '.join(missing[:20])}",
                                 missing_ids=missing)
        return np.stack([self.embeddings.vectors[unit.unit_id] for unit in units])

    def describe(self) -> dict:
        if self.source == "tfidf":
            return {"source": "tfidf", "model": self.tfidf.to_dict()}
        return {"source": "embeddings", "path": self.embeddings_path, "dim": self.embeddings.dim}

    @classmethod
    def from_description(cls, description: dict, unit_ids: Iterable[str] = (),
                         embeddings_path: Optional[str] = None) -> "FeatureBuilder":
        """Rebuild from describe() output; an embeddings path may point at a new file for new units."""
        if description.get("source") == "tfidf":
            return cls("tfidf", tfidf=TfidfModel.from_dict(description["model"]))
        if description.get("source") == "embeddings":
            path = embeddings_path or description["path"]
            return cls("embeddings", embeddings=load_embeddings(path, unit_ids), embeddings_path=path)
        raise FeatureError(f"Unknown feature description source '{description.get('source')}'")
