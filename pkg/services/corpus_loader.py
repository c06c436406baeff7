"""
Corpus Loading Service
Reads JSON Lines corpora, applies text cleaning, and derives task units, label spaces and token statistics
"""

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

from models import (
    TASKS, NONE_LABEL, MULTICLASS, Corpus, CorpusFormatError, CorpusValidationError,
    Document, LabelSpace, Paragraph, StatsReport, Unit, task_mode,
)
from services.text_cleaner import TextCleaner

logger = logging.getLogger(__name__)

DOCUMENT_KEYS = {"id", "language", "text", "labels_t1", "labels_t2", "paragraphs"}
LABEL_KEYS = {"labels_t1": "T1", "labels_t2": "T2"}


def _iter_records(path: Path) -> Iterator[Tuple[str, int, object]]:
    """
    Yield (location kind, position, decoded object). JSON Lines are streamed line by line;
    a file whose first non-blank character is '[' is decoded as one JSON array of records.
    """
    with open(path, "r", encoding="utf-8") as handle:
        line_number = 0
        for line in handle:
            line_number += 1
            if not line.strip():
                continue
            if line.lstrip().startswith("["):
                yield from _array_records(line + handle.read(), path, line_number)
                return
            try:
                yield "line", line_number, json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"Malformed JSON: {e.msg}", line=line_number, path=str(path)) from e


def _array_records(content: str, path: Path, first_line: int) -> Iterator[Tuple[str, int, object]]:
    try:
        records = json.loads(content)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"Malformed JSON array: {e.msg}", line=first_line + e.lineno - 1,
                                path=str(path)) from e
    for position, record in enumerate(records, start=1):
        yield "record", position, record


def _label_set(value, field_name: str, line: int, kind: str = "line") -> frozenset:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusValidationError(f"'{field_name}' must be a list of strings", line=line, kind=kind)
    return frozenset(value)


def _parse_paragraph(record, line: int, kind: str = "line") -> Paragraph:
    if not isinstance(record, dict) or "para_id" not in record or "text" not in record:
        raise CorpusValidationError("Paragraph entries need 'para_id' and 'text'", line=line, kind=kind)
    if not isinstance(record["para_id"], int) or not isinstance(record["text"], str):
        raise CorpusValidationError("Paragraph 'para_id' must be an integer and 'text' a string", line=line, kind=kind)
    labels = record.get("labels_t3")
    labels_t3 = None
    if labels is not None:
        labels_t3 = _label_set(labels, "labels_t3", line, kind) or frozenset({NONE_LABEL})
    return Paragraph(para_id=record["para_id"], text=record["text"], raw_text=record["text"],
                     labels_t3=labels_t3)


def _parse_document(record, line: int, tasks: Set[str], kind: str = "line") -> Document:
    if not isinstance(record, dict):
        raise CorpusValidationError("Each record must hold a JSON object", line=line, kind=kind)

    for key in record:
        if key.startswith("labels_") and key not in DOCUMENT_KEYS:
            raise CorpusValidationError(f"Unknown task key '{key}'", line=line, kind=kind)

    document_id = record.get("id")
    if not isinstance(document_id, str) or not document_id:
        raise CorpusValidationError("'id' must be a non-empty string", line=line, kind=kind)
    text = record.get("text", "")
    language = record.get("language", "")
    if not isinstance(text, str) or not isinstance(language, str):
        raise CorpusValidationError("'text' and 'language' must be strings", line=line, kind=kind)

    labels_t1 = record.get("labels_t1") if "T1" in tasks else None
    if labels_t1 is not None and not isinstance(labels_t1, str):
        raise CorpusValidationError("'labels_t1' must be a string", line=line, kind=kind)
    labels_t2 = None
    if "T2" in tasks and record.get("labels_t2") is not None:
        labels_t2 = _label_set(record["labels_t2"], "labels_t2", line, kind)

    paragraphs = []
    for paragraph_record in record.get("paragraphs") or []:
        paragraph = _parse_paragraph(paragraph_record, line, kind)
        if "T3" not in tasks:
            paragraph = replace(paragraph, labels_t3=None)
        paragraphs.append(paragraph)

    try:
        return Document(id=document_id, language=language, text=text, raw_text=text,
                        labels_t1=labels_t1, labels_t2=labels_t2, paragraphs=tuple(paragraphs))
    except CorpusValidationError as e:
        raise CorpusValidationError(str(e), line=line, kind=kind) from e


def load_corpus(path: Union[str, Path], task_filter: Optional[Iterable[str]] = None) -> Corpus:
    """
    Parse a corpus file into Documents. Text is kept raw (text == raw_text);
    run preprocess_corpus before tokenizing.
    """
    path = Path(path)
    tasks = set(TASKS) if task_filter is None else set(task_filter)
    unknown = tasks - set(TASKS)
    if unknown:
        raise CorpusValidationError(f"Unknown task key(s): {', '.join(sorted(unknown))}")

    documents: List[Document] = []
    seen = {}
    for kind, line, record in _iter_records(path):
        document = _parse_document(record, line, tasks, kind)
        if document.id in seen:
            raise CorpusValidationError(
                f"Duplicate id '{document.id}' (first seen on {kind} {seen[document.id]})", line=line, kind=kind
            )
        seen[document.id] = line
        documents.append(document)

    logger.info("Loaded %d documents from %s", len(documents), path)
    return Corpus(tuple(documents))


def merge_corpora(corpora: Sequence[Corpus]) -> Corpus:
    """Concatenate corpora in order, e.g. a training split followed by a labelled development split."""
    documents: List[Document] = []
    seen = set()
    for corpus in corpora:
        for document in corpus:
            if document.id in seen:
                raise CorpusValidationError(f"Duplicate id '{document.id}' across merged corpora")
            seen.add(document.id)
            documents.append(document)
    return Corpus(tuple(documents))


def preprocess_corpus(corpus: Corpus, cleaner: Optional[TextCleaner] = None) -> Corpus:
    """Clean every document and paragraph text from its raw_text."""
    cleaner = cleaner or TextCleaner()
    documents = []
    for document in corpus:
        texts = cleaner.clean_all(p.raw_text or p.text for p in document.paragraphs)
        paragraphs = tuple(replace(p, text=text) for p, text in zip(document.paragraphs, texts))
        documents.append(replace(document, text=cleaner.clean(document.raw_text or document.text),
                                 paragraphs=paragraphs))
    return Corpus(tuple(documents))


def paragraph_unit_id(article_id: str, para_id: int) -> str:
    return f"{article_id}:{para_id}"


def task_units(corpus: Corpus, task: str, labeled_only: bool = True) -> List[Unit]:
    """
    Units of a task in corpus order. T1/T2 units are documents, T3 units are paragraphs.
    With labeled_only=False every unit is returned and labels are left empty.
    """
    task_mode(task)
    units = []
    for document in corpus:
        if task == "T3":
            for paragraph in document.paragraphs:
                if labeled_only and paragraph.labels_t3 is None:
                    continue
                labels = paragraph.labels_t3 if labeled_only else frozenset()
                units.append(Unit(paragraph_unit_id(document.id, paragraph.para_id), document.id,
                                  document.language, tuple(paragraph.tokens), labels))
            continue

        if labeled_only and not document.has_labels(task):
            continue
        labels = frozenset()
        if labeled_only:
            labels = frozenset({document.labels_t1}) if task == "T1" else document.labels_t2
        units.append(Unit(document.id, document.id, document.language, tuple(document.tokens), labels))
    return units


def build_label_space(corpus: Corpus, task: str, labels: Optional[Sequence[str]] = None) -> LabelSpace:
    """
    Label space of a task with unit counts. Labels default to the sorted observed set;
    T3 always carries the None label last.
    """
    mode = task_mode(task)
    units = task_units(corpus, task)
    observed = sorted({label for unit in units for label in unit.labels} - {NONE_LABEL})

    if labels is None:
        ordered = list(observed)
    else:
        ordered = [label for label in labels if label != NONE_LABEL]
        outside = sorted(set(observed) - set(ordered))
        if outside:
            raise CorpusValidationError(f"Labels not in the configured {task} label set: {', '.join(outside)}")
    if task == "T3":
        ordered.append(NONE_LABEL)

    space = LabelSpace(task=task, labels=tuple(ordered), mode=mode, counts=(0,) * len(ordered))
    space = space.recount(units)
    if mode == MULTICLASS and sum(space.counts) != len(units):
        raise CorpusValidationError(f"{task} counts do not add up to the number of labeled documents")
    return space


def token_stats(corpus: Corpus, task: str) -> StatsReport:
    """Minimum, maximum and mean whitespace-token counts over the task's units."""
    if task == "T3":
        lengths = [len(p.tokens) for d in corpus for p in d.paragraphs]
    else:
        lengths = [len(u.tokens) for u in task_units(corpus, task)]
    if not lengths:
        raise CorpusValidationError(f"No {task} units to compute token statistics over")
    return StatsReport(task=task, min_tokens=min(lengths), max_tokens=max(lengths),
                       avg_tokens=sum(lengths) / len(lengths), n_units=len(lengths))
