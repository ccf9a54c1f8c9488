"""Question-driven retrieval of candidate tables and their hyperlinked passages.

Passage candidates for a table are exactly the passages its cells link to;
they are re-ranked against the query text (the question or the current
sub-question) so hop-specific sub-questions re-rank the same pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Corpus, Table
from .embedding import Embedding
from .errors import CorpusError
from .textprep import Budgets, RichContext, attach_passages, flatten_table
from .vindex import ScoredId, VectorIndex, build_index, top_k


@dataclass(frozen=True)
class RetrievalConfig:
    k_tables: int = 3
    k_passages: int = 3

    def __post_init__(self) -> None:
        if self.k_tables < 1 or self.k_passages < 1:
            raise ValueError("k_tables and k_passages must be >= 1")


@dataclass(frozen=True)
class Candidate:
    """One retrieved table with its assembled rich context."""

    table_id: str
    table_score: float
    context: RichContext
    passage_scores: tuple[ScoredId, ...]


@dataclass(frozen=True)
class RetrievedContext:
    question: str
    candidates: tuple[Candidate, ...] = field(default_factory=tuple)


def retrieve_tables(query: str, table_index: VectorIndex, embedder, k: int) -> list[ScoredId]:
    """Rank indexed tables by cosine against the embedded query."""
    return top_k(table_index, embedder.embed_text(query), k)


def linked_passage_ids(table: Table) -> list[str]:
    """Passage ids linked from any cell, deduplicated in row-major order."""
    return list(
        dict.fromkeys(link for row in table.rows for cell in row for link in cell.links)
    )


def retrieve_passages(
    query: str, table: Table, corpus: Corpus, embedder, k: int
) -> list[ScoredId]:
    """Top-k of the table's linked passages, ranked by cosine to the query.

    Passages are embedded as ``title + " " + text``; the pool never includes
    passages the table does not link.
    """
    pool = linked_passage_ids(table)
    if not pool:
        return []
    items: list[tuple[str, Embedding]] = []
    for pid in pool:
        passage = corpus.passages.get(pid)
        if passage is None:
            raise CorpusError(f"table '{table.id}' links unknown passage '{pid}'")
        items.append((pid, embedder.embed_text(passage.title + " " + passage.text)))
    return top_k(build_index(items), embedder.embed_text(query), k)


def assemble_context(
    question: str,
    corpus: Corpus,
    table_index: VectorIndex,
    embedder,
    cfg: RetrievalConfig,
    budgets: Budgets,
) -> RetrievedContext:
    """Retrieve top tables for the question and attach each one's top passages."""
    candidates = []
    for scored in retrieve_tables(question, table_index, embedder, cfg.k_tables):
        table = corpus.tables.get(scored.id)
        if table is None:
            raise CorpusError(f"index entry '{scored.id}' has no table in the corpus")
        flat = flatten_table(table, budgets.table_chars)
        passage_scores = retrieve_passages(question, table, corpus, embedder, cfg.k_passages)
        passages = [corpus.passages[p.id] for p in passage_scores]
        rich = attach_passages(flat, passages, budgets.passage_chars)
        candidates.append(
            Candidate(
                table_id=scored.id,
                table_score=scored.score,
                context=rich,
                passage_scores=tuple(passage_scores),
            )
        )
    return RetrievedContext(question=question, candidates=tuple(candidates))


def hits_at_k(ranked_lists, gold_ids, k: int) -> float:
    """Percentage of questions whose gold id appears in the first k ranked entries.

    Ranked entries may be ScoredId objects or plain id strings.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    if len(ranked_lists) != len(gold_ids):
        raise ValueError(
            f"{len(ranked_lists)} ranked lists vs {len(gold_ids)} gold ids"
        )
    if not gold_ids:
        raise ValueError("hits_at_k needs at least one question")
    hits = 0
    for ranked, gold in zip(ranked_lists, gold_ids):
        head = [getattr(entry, "id", entry) for entry in ranked[:k]]
        if gold in head:
            hits += 1
    return 100.0 * hits / len(gold_ids)
