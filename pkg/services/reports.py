"""
Report Writer
JSON documents and plain-text tables for statistics, fold plans, cross-validation and ablation runs
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

from models import ABLATION_VARIANTS, TASKS, AblationReport, CvReport, FoldPlan, StatsReport

logger = logging.getLogger(__name__)


def write_json(data, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def write_jsonl(records: Iterable[dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    return path


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned first column, right-aligned numbers, two-space gutters."""
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
    lines = []
    for row in [header, *rows]:
        cells = [str(row[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _score(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def stats_table(reports: Sequence[StatsReport]) -> str:
    rows = [(r.task, str(r.n_units), str(r.min_tokens), str(r.max_tokens), f"{r.avg_tokens:.2f}") for r in reports]
    return format_table(("task", "units", "min", "max", "avg"), rows)


def folds_table(plan: FoldPlan) -> str:
    rows = [(str(fold), str(size)) for fold, size in enumerate(plan.fold_sizes())]
    return format_table(("fold", "articles"), rows)


def cv_table(reports: Mapping[str, CvReport]) -> str:
    """One row per task: mean and per-fold scores."""
    k = max((r.k for r in reports.values()), default=0)
    header = ("task", "metric", "mean") + tuple(f"fold{i}" for i in range(k))
    rows = []
    for task in sorted(reports):
        report = reports[task]
        scores = [_score(s) for s in report.fold_scores] + [""] * (k - report.k)
        rows.append((task, report.metric, _score(report.mean), *scores))
    return format_table(header, rows)


def ablation_table(report: AblationReport) -> str:
    """Variants as rows, tasks as columns; a missing cell is n/a."""
    tasks = [task for task in TASKS if any(task in row for row in report.rows.values())]
    rows = []
    for variant in ABLATION_VARIANTS:
        if variant not in report.rows:
            continue
        cells = report.rows[variant]
        rows.append((variant, *(_score(cells[t].mean) if t in cells else "n/a" for t in tasks)))
    return format_table(("variant", *tasks), rows)


def language_table(scores: Mapping[str, Mapping[str, float]]) -> str:
    """scores[task][language] as a language-by-task table."""
    tasks = sorted(scores)
    languages = sorted({language for by_lang in scores.values() for language in by_lang})
    rows = [(language, *(_score(scores[t].get(language)) for t in tasks)) for language in languages]
    return format_table(("language", *tasks), rows)


def prediction_records(report: CvReport) -> List[dict]:
    return [{"task": report.task, "id": unit_id, "labels": labels}
            for unit_id, labels in sorted(report.predictions.items())]


def write_text(text: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_cv_reports(reports: Mapping[str, CvReport], out_dir: Union[str, Path],
                     languages: Optional[Mapping[str, Mapping[str, float]]] = None) -> Dict[str, Path]:
    """cv_report.json, cv_report.txt and out-of-fold predictions.jsonl, plus a by-language table if given."""
    out_dir = Path(out_dir)
    payload = {task: report.to_dict() for task, report in reports.items()}
    if languages:
        for task, scores in languages.items():
            payload[task]["by_language"] = dict(scores)
    written = {
        "json": write_json(payload, out_dir / "cv_report.json"),
        "table": write_text(cv_table(reports), out_dir / "cv_report.txt"),
        "predictions": write_jsonl((r for task in sorted(reports) for r in prediction_records(reports[task])),
                                   out_dir / "predictions.jsonl"),
    }
    if languages:
        written["languages"] = write_text(language_table(languages), out_dir / "by_language.txt")
    return written
