"""Deterministic table linearization and passage attachment.

The grammar is contractual and golden-file tested:

    title: <page_title> ; section: <section_title>
    header: h1 | h2 | ... | hn
    row 1: c1 | c2 | ... | cn
    ...
    passage (<title>): <text>

Pipes inside cell text become ``/`` and newlines become spaces so the line
and column structure stays unambiguous. When the flattened table exceeds
its character budget, whole trailing rows are dropped, never partial rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Passage, Table

DEFAULT_TABLE_BUDGET = 4000
DEFAULT_PASSAGE_BUDGET = 600


@dataclass(frozen=True)
class Budgets:
    """Character budgets for flattened tables and attached passages."""

    table_chars: int = DEFAULT_TABLE_BUDGET
    passage_chars: int = DEFAULT_PASSAGE_BUDGET


@dataclass(frozen=True)
class FlattenedTable:
    table_id: str
    text: str
    truncated: bool


@dataclass(frozen=True)
class RichContext:
    """A flattened table followed by its attached passages, in order."""

    table_id: str
    text: str
    passage_ids: tuple[str, ...]


def _escape(text: str) -> str:
    # / for pipes keeps the column delimiter unambiguous; newlines would
    # break the one-line-per-row structure.
    return (
        text.replace("|", "/").replace("\r\n", " ").replace("\n", " ").replace("\r", " ")
    )


def flatten_table(table: Table, budget: int = DEFAULT_TABLE_BUDGET) -> FlattenedTable:
    """Linearize a table to text, dropping whole trailing rows past the budget.

    The title and header lines are always emitted; ``truncated`` is true iff
    at least one row was dropped.
    """
    if budget <= 0:
        raise ValueError("table budget must be positive")
    title_line = f"title: {_escape(table.page_title)} ; section: {_escape(table.section_title)}"
    header_line = "header: " + " | ".join(_escape(h) for h in table.header)
    text = title_line + "\n" + header_line
    kept = 0
    for i, row in enumerate(table.rows, 1):
        row_line = f"row {i}: " + " | ".join(_escape(c.text) for c in row)
        candidate = text + "\n" + row_line
        if len(candidate) > budget:
            break
        text = candidate
        kept += 1
    return FlattenedTable(table_id=table.id, text=text, truncated=kept < len(table.rows))


def attach_passages(
    flat: FlattenedTable,
    passages: Sequence[Passage],
    per_passage_budget: int = DEFAULT_PASSAGE_BUDGET,
) -> RichContext:
    """Append one ``passage (<title>): <text>`` block per passage, caller order.

    Passage bodies are truncated to the per-passage budget; the caller is
    responsible for ranking (retrieval's job).
    """
    if per_passage_budget <= 0:
        raise ValueError("passage budget must be positive")
    parts = [flat.text]
    ids = []
    for passage in passages:
        title = passage.title.replace("\r\n", " ").replace("\n", " ").replace("\r", " ")
        parts.append(f"passage ({title}): {passage.text[:per_passage_budget]}")
        ids.append(passage.id)
    return RichContext(table_id=flat.table_id, text="\n".join(parts), passage_ids=tuple(ids))
