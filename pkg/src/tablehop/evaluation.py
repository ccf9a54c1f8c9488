"""Answer normalization, EM, token-level F1, and batch evaluation reports.

Normalization follows the open-domain QA convention: lowercase, strip
punctuation, drop the articles a/an/the, collapse whitespace. EM and F1
take the best score over all gold answers; unanswered questions score zero
everywhere.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import QAExample
from .errors import DataError

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)

METRIC_COLUMNS = ("f1", "precision", "recall", "em")  # display order mirrors the report tables


@dataclass(frozen=True)
class ScoredAnswer:
    question_id: str
    em: int
    precision: float
    recall: float
    f1: float
    matched_gold: str


@dataclass
class EvalReport:
    per_question: list[ScoredAnswer]
    aggregate: dict[str, float]  # percentages, full precision
    hits: dict[int, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, drop standalone articles, collapse whitespace."""
    lowered = text.lower()
    no_punct = "".join(ch for ch in lowered if ch not in _PUNCT)
    no_articles = _ARTICLES_RE.sub(" ", no_punct)
    return " ".join(no_articles.split())


def exact_match(pred: str | None, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals some normalized gold; absent pred scores 0."""
    if not golds:
        raise ValueError("exact_match needs at least one gold answer")
    if pred is None:
        return 0
    normalized = normalize_answer(pred)
    return int(any(normalized == normalize_answer(g) for g in golds))


def _pr_f1(pred_tokens: list[str], gold_tokens: list[str]) -> tuple[float, float, float]:
    if not pred_tokens and not gold_tokens:
        # Both normalize to nothing (e.g. article-only strings): that is an
        # exact normalized match, so it must score as a full overlap.
        return 1.0, 1.0, 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0, 0.0, 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0, 0.0, 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return precision, recall, 2 * precision * recall / (precision + recall)


def token_f1(pred: str | None, golds: Sequence[str]) -> tuple[float, float, float]:
    """(precision, recall, f1) against the gold maximizing F1 (ties: first gold)."""
    if not golds:
        raise ValueError("token_f1 needs at least one gold answer")
    if pred is None:
        return 0.0, 0.0, 0.0
    pred_tokens = normalize_answer(pred).split()
    best = (0.0, 0.0, -1.0)
    for gold in golds:
        scores = _pr_f1(pred_tokens, normalize_answer(gold).split())
        if scores[2] > best[2]:
            best = scores
    return best if best[2] >= 0 else (0.0, 0.0, 0.0)


def _best_gold(pred: str | None, golds: Sequence[str]) -> str:
    if pred is None:
        return golds[0]
    pred_tokens = normalize_answer(pred).split()
    best_f1, best_gold = -1.0, golds[0]
    for gold in golds:
        f1 = _pr_f1(pred_tokens, normalize_answer(gold).split())[2]
        if f1 > best_f1:
            best_f1, best_gold = f1, gold
    return best_gold


def evaluate_run(
    records: Sequence,
    qa: Sequence[QAExample],
    retrieval_ranks: Mapping[str, Sequence[str]] | None = None,
    ks: Sequence[int] = (1, 3),
) -> EvalReport:
    """Score a batch of answer records against their questions.

    ``records`` are AnswerRecord or AnswerSummary objects (anything with
    question_id, final_answer, and outcome). HITS@K is computed from
    ``retrieval_ranks`` (question id -> ranked table ids) over the questions
    that carry a gold_table_id; pass None to skip it.
    """
    by_id: dict[str, object] = {}
    for record in records:
        if record.question_id in by_id:
            raise DataError(f"duplicate answer records for question '{record.question_id}'")
        by_id[record.question_id] = record
    qa_ids = {example.id for example in qa}
    for qid in by_id:
        if qid not in qa_ids:
            raise DataError(f"answer record '{qid}' has no matching question")

    per_question: list[ScoredAnswer] = []
    counts = {"answered_fsl": 0, "answered_multihop": 0, "unanswered": 0}
    sums = {"em": 0.0, "f1": 0.0, "precision": 0.0, "recall": 0.0}
    for example in qa:
        record = by_id.get(example.id)
        if record is None:
            raise DataError(f"no answer record for question '{example.id}'")
        counts[record.outcome] = counts.get(record.outcome, 0) + 1
        pred = None if record.outcome == "unanswered" else record.final_answer
        em = exact_match(pred, example.answers)
        precision, recall, f1 = token_f1(pred, example.answers)
        per_question.append(
            ScoredAnswer(
                question_id=example.id,
                em=em,
                precision=precision,
                recall=recall,
                f1=f1,
                matched_gold=_best_gold(pred, example.answers),
            )
        )
        sums["em"] += em
        sums["f1"] += f1
        sums["precision"] += precision
        sums["recall"] += recall

    n = len(per_question)
    aggregate = {name: (100.0 * total / n if n else 0.0) for name, total in sums.items()}

    hits: dict[int, float] = {}
    if retrieval_ranks is not None:
        with_gold = [ex for ex in qa if ex.gold_table_id]
        if with_gold:
            for k in ks:
                hit = sum(
                    1
                    for ex in with_gold
                    if ex.gold_table_id in list(retrieval_ranks.get(ex.id, ()))[:k]
                )
                hits[int(k)] = 100.0 * hit / len(with_gold)

    return EvalReport(per_question=per_question, aggregate=aggregate, hits=hits, counts=counts)


def render_table(report: EvalReport) -> str:
    """Fixed-width metric table, columns ordered F1, Precision, Recall, EM."""
    header = f"{'F1':>8}  {'Precision':>9}  {'Recall':>8}  {'EM':>8}"
    agg = report.aggregate
    row = (
        f"{agg['f1']:>8.2f}  {agg['precision']:>9.2f}  "
        f"{agg['recall']:>8.2f}  {agg['em']:>8.2f}"
    )
    lines = [header, row]
    for k in sorted(report.hits):
        lines.append(f"HITS@{k}: {report.hits[k]:.2f}")
    return "\n".join(lines)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "aggregate": report.aggregate,
        "hits": {str(k): v for k, v in report.hits.items()},
        "counts": report.counts,
        "per_question": [
            {
                "question_id": s.question_id,
                "em": s.em,
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "matched_gold": s.matched_gold,
            }
            for s in report.per_question
        ],
    }


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
