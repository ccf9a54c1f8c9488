"""Data model and line-delimited JSON ingestion for tables, passages, and questions.

A corpus is a pair of id-keyed maps: tables (grids of cells whose cells may
hyperlink passages) and the passages themselves. Question sets are loaded
separately and tagged with their split.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .errors import CorpusError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")

_TABLE_FIELDS = {"id", "page_title", "section_title", "header", "rows"}
_CELL_FIELDS = {"text", "links"}
_PASSAGE_FIELDS = {"id", "title", "text"}
_QA_FIELDS = {"id", "question", "answers", "gold_table_id", "gold_passage_ids"}


@dataclass(frozen=True)
class Passage:
    """A hyperlinked text unit referenced from table cells."""

    id: str
    title: str
    text: str


@dataclass(frozen=True)
class Cell:
    text: str
    links: tuple[str, ...] = ()


@dataclass(frozen=True)
class Table:
    """A grid of cells plus the page/section titles it was scraped with."""

    id: str
    page_title: str
    section_title: str
    header: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]


@dataclass(frozen=True)
class Corpus:
    tables: dict[str, Table]
    passages: dict[str, Passage]


@dataclass(frozen=True)
class QAExample:
    """A question with its gold answers and optional gold evidence ids."""

    id: str
    question: str
    answers: tuple[str, ...]
    split: str
    gold_table_id: str | None = None
    gold_passage_ids: tuple[str, ...] = ()


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def error_count(self) -> int:
        return len(self.errors)


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) pairs; blank lines are skipped."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: malformed JSON line: {exc}") from exc
        if not isinstance(record, dict):
            raise CorpusError(f"{path}:{lineno}: record is not a JSON object")
        yield lineno, record


def _warn_unknown_fields(record: dict[str, Any], known: set[str], where: str) -> None:
    unknown = set(record) - known
    if unknown:
        logger.warning("%s: ignoring unknown fields %s", where, sorted(unknown))


def _require(record: dict[str, Any], key: str, where: str) -> Any:
    if key not in record:
        raise CorpusError(f"{where}: missing required field '{key}'")
    return record[key]


def _parse_cell(raw: Any, where: str) -> Cell:
    if not isinstance(raw, dict):
        raise CorpusError(f"{where}: cell is not a JSON object")
    _warn_unknown_fields(raw, _CELL_FIELDS, where)
    text = _require(raw, "text", where)
    links = raw.get("links", [])
    if not isinstance(links, list):
        raise CorpusError(f"{where}: cell 'links' must be a list")
    return Cell(text=str(text), links=tuple(str(l) for l in links))


def _parse_table(record: dict[str, Any], where: str) -> Table:
    _warn_unknown_fields(record, _TABLE_FIELDS, where)
    table_id = str(_require(record, "id", where))
    header = _require(record, "header", where)
    rows_raw = _require(record, "rows", where)
    if not isinstance(header, list) or not header:
        raise CorpusError(f"{where}: table '{table_id}' header must be a non-empty list")
    if not isinstance(rows_raw, list):
        raise CorpusError(f"{where}: table '{table_id}' rows must be a list")
    rows = []
    for row_raw in rows_raw:
        if not isinstance(row_raw, list):
            raise CorpusError(f"{where}: table '{table_id}' row is not a list")
        row = tuple(_parse_cell(c, f"{where} table '{table_id}'") for c in row_raw)
        if len(row) != len(header):
            raise CorpusError(
                f"{where}: table '{table_id}': row-length mismatch "
                f"({len(row)} cells under a {len(header)}-cell header)"
            )
        rows.append(row)
    return Table(
        id=table_id,
        page_title=str(_require(record, "page_title", where)),
        section_title=str(record.get("section_title", "")),
        header=tuple(str(h) for h in header),
        rows=tuple(rows),
    )


def _parse_passage(record: dict[str, Any], where: str) -> Passage:
    _warn_unknown_fields(record, _PASSAGE_FIELDS, where)
    return Passage(
        id=str(_require(record, "id", where)),
        title=str(_require(record, "title", where)),
        text=str(_require(record, "text", where)),
    )


def load_corpus(tables_path: str | Path, passages_path: str | Path) -> Corpus:
    """Load tables and passages from two line-delimited JSON files.

    Duplicate ids and structurally invalid records are hard errors; the
    error message names the file, line, and offending id.
    """
    tables: dict[str, Table] = {}
    for lineno, record in _iter_jsonl(tables_path):
        table = _parse_table(record, f"{tables_path}:{lineno}")
        if table.id in tables:
            raise CorpusError(f"{tables_path}:{lineno}: duplicate table id '{table.id}'")
        tables[table.id] = table

    passages: dict[str, Passage] = {}
    for lineno, record in _iter_jsonl(passages_path):
        passage = _parse_passage(record, f"{passages_path}:{lineno}")
        if passage.id in passages:
            raise CorpusError(f"{passages_path}:{lineno}: duplicate passage id '{passage.id}'")
        passages[passage.id] = passage

    return Corpus(tables=tables, passages=passages)


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check corpus invariants; findings go into the report, nothing raises.

    Dangling passage links, key/id mismatches, empty headers, and row-length
    mismatches are errors; empty passage text is a warning.
    """
    report = ValidationReport()
    for key, passage in corpus.passages.items():
        if not passage.id:
            report.errors.append(f"passage keyed '{key}' has an empty id")
        elif key != passage.id:
            report.errors.append(f"passage map key '{key}' != passage id '{passage.id}'")
        if not passage.text:
            report.warnings.append(f"passage '{passage.id}' has empty text")
    for key, table in corpus.tables.items():
        if not table.id:
            report.errors.append(f"table keyed '{key}' has an empty id")
        elif key != table.id:
            report.errors.append(f"table map key '{key}' != table id '{table.id}'")
        if not table.header:
            report.errors.append(f"table '{table.id}' has an empty header")
        for i, row in enumerate(table.rows, 1):
            if len(row) != len(table.header):
                report.errors.append(f"table '{table.id}' row {i}: row-length mismatch")
            for cell in row:
                for link in cell.links:
                    if link not in corpus.passages:
                        report.errors.append(
                            f"table '{table.id}' row {i}: dangling passage link '{link}'"
                        )
    return report


def load_qa_set(path: str | Path, split: str) -> list[QAExample]:
    """Load a question file, tagging every record with the given split.

    Train records must carry a gold_table_id (exemplar construction needs
    the gold table); records with empty answers are rejected.
    """
    if split not in SPLITS:
        raise CorpusError(f"unknown split '{split}' (expected one of {SPLITS})")
    examples: list[QAExample] = []
    seen: set[str] = set()
    for lineno, record in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        _warn_unknown_fields(record, _QA_FIELDS, where)
        qid = str(_require(record, "id", where))
        if qid in seen:
            raise CorpusError(f"{where}: duplicate question id '{qid}'")
        seen.add(qid)
        answers = _require(record, "answers", where)
        if not isinstance(answers, list) or not answers:
            raise CorpusError(f"{where}: question '{qid}' has no answers")
        gold_table_id = record.get("gold_table_id")
        if split == "train" and not gold_table_id:
            raise CorpusError(f"{where}: train question '{qid}' lacks gold_table_id")
        examples.append(
            QAExample(
                id=qid,
                question=str(_require(record, "question", where)),
                answers=tuple(str(a) for a in answers),
                split=split,
                gold_table_id=str(gold_table_id) if gold_table_id else None,
                gold_passage_ids=tuple(str(p) for p in record.get("gold_passage_ids") or ()),
            )
        )
    return examples


def table_to_record(table: Table) -> dict[str, Any]:
    return {
        "id": table.id,
        "page_title": table.page_title,
        "section_title": table.section_title,
        "header": list(table.header),
        "rows": [
            [{"text": c.text, "links": list(c.links)} for c in row] for row in table.rows
        ],
    }


def passage_to_record(passage: Passage) -> dict[str, Any]:
    return {"id": passage.id, "title": passage.title, "text": passage.text}


def save_corpus(corpus: Corpus, tables_path: str | Path, passages_path: str | Path) -> None:
    """Re-serialize a corpus to the same JSONL schema load_corpus reads."""
    with open(tables_path, "w", encoding="utf-8") as f:
        for table in corpus.tables.values():
            f.write(json.dumps(table_to_record(table), ensure_ascii=False) + "\n")
    with open(passages_path, "w", encoding="utf-8") as f:
        for passage in corpus.passages.values():
            f.write(json.dumps(passage_to_record(passage), ensure_ascii=False) + "\n")
