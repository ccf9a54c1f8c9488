"""End-to-end answering pipeline.

A question is first attempted with a few-shot prompt over its retrieved
table contexts. In the full mode, a not-answerable (or unparseable) reply
triggers the multi-hop fallback: up to max_hops rounds of sub-question
generation, retrieval against the sub-question, and intermediate
answering, followed by one final generation over the original prompt
supplemented with all hop evidence.

Four pipeline modes ablate the stages: llm_only (bare question), zero_shot
(context, no exemplars), fsl (context plus exemplars, no fallback), and
fsl_cot_rag (everything).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .corpus import Corpus, QAExample
from .errors import BackendError, DataError, TablehopError
from .fewshot import ExemplarStore, select_exemplars
from .generation import (
    build_decomposition_prompt,
    build_final_prompt,
    build_fsl_prompt,
    build_hop_answer_prompt,
    build_plain_prompt,
    parse_response,
)
from .retrieval import RetrievalConfig, RetrievedContext, assemble_context
from .textprep import Budgets
from .vindex import VectorIndex

MODES = ("llm_only", "zero_shot", "fsl", "fsl_cot_rag")
OUTCOMES = ("answered_fsl", "answered_multihop", "unanswered")


@dataclass(frozen=True)
class PipelineConfig:
    retrieval: RetrievalConfig = RetrievalConfig()
    shots: int = 1
    max_hops: int = 2
    strict_parsing: bool = True
    mode: str = "fsl_cot_rag"
    budgets: Budgets = Budgets()

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown pipeline mode '{self.mode}'")
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")


@dataclass(frozen=True)
class HopRecord:
    hop_index: int
    sub_question: str
    context: RetrievedContext
    intermediate_answer: str | None


@dataclass
class AnswerRecord:
    question_id: str
    question: str
    final_answer: str | None
    outcome: str
    hops: tuple[HopRecord, ...]
    fsl_context: RetrievedContext
    exemplar_ids: tuple[str, ...]
    prompts_issued: int
    elapsed: float = 0.0


class DecomposeFailure(TablehopError):
    """A decomposition prompt did not yield a sub-question; the hop path stops."""

    def __init__(self, hop_index: int, raw: str):
        super().__init__(f"hop {hop_index}: decomposition output is not a sub-question: {raw!r}")
        self.hop_index = hop_index
        self.raw = raw


class PipelineBackendError(TablehopError):
    """A backend failed mid-question; carries the partial trace for inspection."""

    def __init__(self, cause: Exception, record: AnswerRecord):
        super().__init__(str(cause))
        self.cause = cause
        self.record = record


def run_hop(
    hop_index: int,
    original_question: str,
    prior: Sequence[HopRecord],
    corpus: Corpus,
    table_index: VectorIndex,
    exemplar_store: ExemplarStore,
    embedder,
    generator,
    cfg: PipelineConfig,
) -> HopRecord:
    """One decomposition round: sub-question, retrieval for it, intermediate answer.

    Hop prompts use zero exemplars (the store targets the original question
    distribution). Raises DecomposeFailure when the decomposition output
    cannot be parsed as a sub-question.
    """
    del exemplar_store  # hop prompts are zero-shot by design
    if hop_index != len(prior) + 1:
        raise ValueError(f"hop_index {hop_index} does not follow {len(prior)} prior hops")
    decompose = build_decomposition_prompt(
        original_question,
        hop_index,
        [(h.sub_question, h.intermediate_answer) for h in prior],
    )
    parsed = parse_response(generator.generate(decompose), "decompose", cfg.strict_parsing)
    if parsed.kind != "sub_question":
        raise DecomposeFailure(hop_index, parsed.text)
    sub_question = parsed.text
    context = assemble_context(sub_question, corpus, table_index, embedder, cfg.retrieval, cfg.budgets)
    answer_prompt = build_hop_answer_prompt(sub_question, context)
    answered = parse_response(generator.generate(answer_prompt), "hop_answer", cfg.strict_parsing)
    return HopRecord(
        hop_index=hop_index,
        sub_question=sub_question,
        context=context,
        intermediate_answer=answered.text if answered.is_answer else None,
    )


def answer_question(
    q: QAExample,
    corpus: Corpus,
    table_index: VectorIndex,
    exemplar_store: ExemplarStore,
    embedder,
    generator,
    cfg: PipelineConfig,
) -> AnswerRecord:
    """Run the configured pipeline mode on one question.

    Backend failures abort the question and raise PipelineBackendError with
    the partial trace attached; batch drivers emit that trace as an
    unanswered record instead of stopping the run.
    """
    start = time.perf_counter()
    prompts_issued = 0
    hops: list[HopRecord] = []
    fsl_context = RetrievedContext(question=q.question)
    exemplar_ids: tuple[str, ...] = ()

    def finish(outcome: str, final_answer: str | None) -> AnswerRecord:
        return AnswerRecord(
            question_id=q.id,
            question=q.question,
            final_answer=final_answer,
            outcome=outcome,
            hops=tuple(hops),
            fsl_context=fsl_context,
            exemplar_ids=exemplar_ids,
            prompts_issued=prompts_issued,
            elapsed=time.perf_counter() - start,
        )

    try:
        if cfg.mode == "llm_only":
            first_prompt = build_plain_prompt(q.question)
        else:
            fsl_context = assemble_context(
                q.question, corpus, table_index, embedder, cfg.retrieval, cfg.budgets
            )
            shots = 0 if cfg.mode == "zero_shot" else cfg.shots
            if fsl_context.candidates:
                exemplars = (
                    select_exemplars(
                        exemplar_store,
                        q.question,
                        fsl_context.candidates[0].context.text,
                        shots,
                    )
                    if shots > 0
                    else []
                )
                exemplar_ids = tuple(e.source_id for e in exemplars)
                first_prompt = build_fsl_prompt(q.question, fsl_context, exemplars)
            else:
                # Nothing retrievable (empty index); fall back to the bare prompt.
                first_prompt = build_plain_prompt(q.question)
        first_prompt.meta["question_id"] = q.id

        raw = generator.generate(first_prompt)
        prompts_issued += 1
        parsed = parse_response(raw, first_prompt.kind, cfg.strict_parsing)
        if parsed.is_answer:
            return finish("answered_fsl", parsed.text)
        if cfg.mode != "fsl_cot_rag":
            return finish("unanswered", None)

        # Multi-hop fallback: the first pass could not produce an answer.
        for hop_index in range(1, cfg.max_hops + 1):
            try:
                hop = run_hop(
                    hop_index, q.question, hops, corpus, table_index,
                    exemplar_store, embedder, generator, cfg,
                )
            except DecomposeFailure:
                prompts_issued += 1  # the failed decomposition call
                break
            prompts_issued += 2  # decomposition + intermediate answer
            hops.append(hop)

        if not hops:
            return finish("unanswered", None)
        final_prompt = build_final_prompt(
            first_prompt, [(h.sub_question, h.context, h.intermediate_answer) for h in hops]
        )
        final_prompt.meta["question_id"] = q.id
        raw = generator.generate(final_prompt)
        prompts_issued += 1
        parsed = parse_response(raw, final_prompt.kind, cfg.strict_parsing)
        if parsed.is_answer:
            return finish("answered_multihop", parsed.text)
        return finish("unanswered", None)
    except BackendError as exc:
        raise PipelineBackendError(exc, finish("unanswered", None)) from exc


def run_batch(
    questions: Sequence[QAExample],
    corpus: Corpus,
    table_index: VectorIndex,
    exemplar_store: ExemplarStore,
    embedder,
    generator,
    cfg: PipelineConfig,
    parallelism: int = 1,
    on_error=None,
) -> list[AnswerRecord]:
    """Answer every question; backend failures yield unanswered records, not a dead run.

    Results come back in input order regardless of parallelism. ``on_error``
    receives (question_id, exception) for each degraded question.
    """

    def worker(q: QAExample) -> AnswerRecord:
        try:
            return answer_question(
                q, corpus, table_index, exemplar_store, embedder, generator, cfg
            )
        except PipelineBackendError as exc:
            if on_error is not None:
                on_error(q.id, exc.cause)
            return exc.record

    if parallelism <= 1 or len(questions) <= 1:
        return [worker(q) for q in questions]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(worker, questions))


@dataclass(frozen=True)
class AnswerSummary:
    """The answers.jsonl view of a record: what evaluation needs, nothing more."""

    question_id: str
    final_answer: str | None
    outcome: str
    hops: tuple[dict, ...]
    prompts_issued: int


def record_to_dict(record: AnswerRecord) -> dict:
    return {
        "question_id": record.question_id,
        "final_answer": record.final_answer,
        "outcome": record.outcome,
        "hops": [
            {
                "sub_question": h.sub_question,
                "candidate_table_ids": [c.table_id for c in h.context.candidates],
                "passage_ids": [
                    pid for c in h.context.candidates for pid in c.context.passage_ids
                ],
                "intermediate_answer": h.intermediate_answer,
            }
            for h in record.hops
        ],
        "prompts_issued": record.prompts_issued,
    }


def write_answers(records: Sequence[AnswerRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")


def read_answers(path: str | Path) -> list[AnswerSummary]:
    summaries: list[AnswerSummary] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            summaries.append(
                AnswerSummary(
                    question_id=record["question_id"],
                    final_answer=record.get("final_answer"),
                    outcome=record["outcome"],
                    hops=tuple(record.get("hops", [])),
                    prompts_issued=int(record.get("prompts_issued", 0)),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad answer record: {exc}") from exc
    return summaries
