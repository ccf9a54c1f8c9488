"""Prompt construction, generation backends, and strict response parsing.

Prompts are built by pure template functions; generated text is parsed into
typed responses using three line tags:

    ANSWER: <text>      a direct answer
    NOT_ANSWERABLE      the context does not contain the answer
    SUBQUESTION: <text> the next decomposition sub-question

Two backends share the generate contract: a remote HTTP generator and a
scripted generator that replays canned responses by prompt substring match
(first rule wins), which makes end-to-end pipeline runs fully deterministic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import BackendError, ConfigError
from .retrieval import RetrievedContext
from .fewshot import Exemplar
from .embedding import Transport, post_json

logger = logging.getLogger(__name__)

PROMPT_KINDS = ("fsl_answer", "decompose", "hop_answer", "final_answer")
ANSWER_KINDS = ("fsl_answer", "hop_answer", "final_answer")

DEFAULT_MAX_OUTPUT_CHARS = 4000

_ANSWER_INSTRUCTIONS = (
    "Answer the question using only the tables and passages provided below.\n"
    "Reply with exactly one line: ANSWER: <answer text>\n"
    "If the answer is not present in the provided material, reply with the single line: NOT_ANSWERABLE"
)

_PLAIN_INSTRUCTIONS = (
    "Answer the question.\n"
    "Reply with exactly one line: ANSWER: <answer text>\n"
    "If you cannot answer, reply with the single line: NOT_ANSWERABLE"
)

_DECOMPOSE_INSTRUCTIONS = (
    "The question below is too complex to answer directly. Break it down: state the single\n"
    "next sub-question whose answer would make progress, taking any findings so far into account.\n"
    "Reply with exactly one line: SUBQUESTION: <sub-question text>"
)

NO_FINDING = "(no answer found)"


@dataclass
class Prompt:
    kind: str
    text: str
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ParsedResponse:
    """Typed model output: answer, not_answerable, sub_question, or unparseable."""

    kind: str
    text: str = ""

    @property
    def is_answer(self) -> bool:
        return self.kind == "answer"


def _answer(text: str) -> ParsedResponse:
    return ParsedResponse(kind="answer", text=text)


def _sub_question(text: str) -> ParsedResponse:
    return ParsedResponse(kind="sub_question", text=text)


def _not_answerable() -> ParsedResponse:
    return ParsedResponse(kind="not_answerable")


def _unparseable(raw: str) -> ParsedResponse:
    return ParsedResponse(kind="unparseable", text=raw)


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "scripted"  # remote | scripted
    endpoint: str | None = None
    model_name: str | None = None
    temperature: float = 0.0
    max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS
    script_path: str | None = None
    strict_parsing: bool = True


def build_fsl_prompt(
    question: str, ctx: RetrievedContext, exemplars: Sequence[Exemplar]
) -> Prompt:
    """Few-shot answer prompt: instructions, exemplar blocks, candidate contexts, question last."""
    if not ctx.candidates:
        raise ValueError("FSL prompt needs at least one candidate context")
    parts = [_ANSWER_INSTRUCTIONS]
    for exemplar in exemplars:
        parts.append(
            f"Question: {exemplar.question}\nContext:\n{exemplar.context_text}\nANSWER: {exemplar.answer}"
        )
    for candidate in ctx.candidates:
        parts.append(f"Context:\n{candidate.context.text}")
    parts.append(f"Question: {question}")
    return Prompt(
        kind="fsl_answer",
        text="\n\n".join(parts),
        meta={
            "question": question,
            "candidate_table_ids": [c.table_id for c in ctx.candidates],
            "exemplar_ids": [e.source_id for e in exemplars],
        },
    )


def build_hop_answer_prompt(sub_question: str, ctx: RetrievedContext) -> Prompt:
    """Intermediate-answer prompt for one hop: zero exemplars, tolerates zero candidates."""
    parts = [_ANSWER_INSTRUCTIONS]
    for candidate in ctx.candidates:
        parts.append(f"Context:\n{candidate.context.text}")
    parts.append(f"Question: {sub_question}")
    return Prompt(
        kind="hop_answer",
        text="\n\n".join(parts),
        meta={
            "question": sub_question,
            "candidate_table_ids": [c.table_id for c in ctx.candidates],
        },
    )


def build_plain_prompt(question: str) -> Prompt:
    """Instruction + question only; no retrieval, no exemplars."""
    return Prompt(
        kind="fsl_answer",
        text=f"{_PLAIN_INSTRUCTIONS}\n\nQuestion: {question}",
        meta={"question": question},
    )


def build_decomposition_prompt(
    question: str,
    hop_index: int,
    prior_hops: Sequence[tuple[str, str | None]],
) -> Prompt:
    """Sub-question prompt for the given hop, listing prior sub-questions and findings."""
    if hop_index < 1:
        raise ValueError("hop_index must be >= 1")
    if hop_index > 1 and not prior_hops:
        raise ValueError(f"hop {hop_index} requires the prior hops' sub-questions and findings")
    lines = [_DECOMPOSE_INSTRUCTIONS, "", f"Original question: {question}"]
    for i, (sub_question, finding) in enumerate(prior_hops, 1):
        lines.append(f"Sub-question {i}: {sub_question}")
        lines.append(f"Finding {i}: {finding if finding is not None else NO_FINDING}")
    return Prompt(
        kind="decompose",
        text="\n".join(lines),
        meta={"question": question, "hop_index": hop_index},
    )


def build_final_prompt(
    fsl_prompt: Prompt,
    hop_evidence: Sequence[tuple[str, RetrievedContext, str | None]],
) -> Prompt:
    """The FSL prompt supplemented with every hop's evidence, question restated last."""
    if fsl_prompt.kind != "fsl_answer":
        raise ValueError(f"final prompt builds on an fsl_answer prompt, not '{fsl_prompt.kind}'")
    if not hop_evidence:
        raise ValueError("final prompt needs at least one hop of evidence")
    question = fsl_prompt.meta.get("question", "")
    lines = [fsl_prompt.text, "", "Additional context:"]
    for i, (sub_question, ctx, answer) in enumerate(hop_evidence, 1):
        lines.append(f"Sub-question {i}: {sub_question}")
        lines.append("Context:")
        for candidate in ctx.candidates:
            lines.append(candidate.context.text)
        lines.append(f"Finding {i}: {answer if answer is not None else NO_FINDING}")
    lines.append("")
    lines.append(f"Question: {question}")
    return Prompt(
        kind="final_answer",
        text="\n".join(lines),
        meta={
            **fsl_prompt.meta,
            "hop_count": len(hop_evidence),
        },
    )


@dataclass(frozen=True)
class ScriptRule:
    match: str
    response: str


class ScriptedGenerator:
    """Deterministic replay backend: first rule whose match substring occurs in the prompt wins."""

    def __init__(self, rules: Sequence[ScriptRule], max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS):
        self.rules = list(rules)
        self.max_output_chars = max_output_chars

    @classmethod
    def from_file(cls, path: str | Path, max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS) -> "ScriptedGenerator":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read script file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"script file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, list):
            raise ConfigError(f"script file {path} must hold a JSON list of rules")
        rules = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict) or "match" not in entry or "response" not in entry:
                raise ConfigError(f"script file {path}: rule {i} needs 'match' and 'response'")
            rules.append(ScriptRule(match=str(entry["match"]), response=str(entry["response"])))
        return cls(rules, max_output_chars=max_output_chars)

    def generate(self, prompt: Prompt) -> str:
        for rule in self.rules:
            if rule.match in prompt.text:
                return _truncate(rule.response, self.max_output_chars)
        raise BackendError(f"no scripted rule matched prompt (meta={prompt.meta})")


class RemoteGenerator:
    """HTTP generation client: POST {"model", "prompt", "temperature"} -> {"text"}."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        temperature: float = 0.0,
        timeout: float = 60.0,
        max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS,
        transport: Transport | None = None,
    ):
        if not endpoint:
            raise ConfigError("remote generator requires an endpoint")
        self.endpoint = endpoint
        self.model_name = model_name
        self.temperature = temperature
        self.timeout = timeout
        self.max_output_chars = max_output_chars
        self._transport = transport

    def generate(self, prompt: Prompt) -> str:
        response = post_json(
            self.endpoint,
            {"model": self.model_name, "prompt": prompt.text, "temperature": self.temperature},
            self.timeout,
            self._transport,
        )
        text = response.get("text")
        if not isinstance(text, str):
            raise BackendError(f"{self.endpoint}: response lacks a 'text' string")
        return _truncate(text, self.max_output_chars)


def _truncate(text: str, limit: int) -> str:
    if len(text) > limit:
        logger.warning("generator response truncated from %d to %d chars", len(text), limit)
        return text[:limit]
    return text


def make_generator(config: GeneratorConfig, transport: Transport | None = None):
    if config.kind == "scripted":
        if not config.script_path:
            raise ConfigError("generator kind 'scripted' requires script_path")
        return ScriptedGenerator.from_file(config.script_path, config.max_output_chars)
    if config.kind == "remote":
        if not config.endpoint or not config.model_name:
            raise ConfigError("generator kind 'remote' requires endpoint and model_name")
        return RemoteGenerator(
            endpoint=config.endpoint,
            model_name=config.model_name,
            temperature=config.temperature,
            max_output_chars=config.max_output_chars,
            transport=transport,
        )
    raise ConfigError(f"unknown generator kind '{config.kind}'")


def parse_response(raw: str, expected: str, strict: bool = True) -> ParsedResponse:
    """Parse raw model output against the tags legal for the expected prompt kind.

    Lines are scanned top-down; the first line carrying a legal, non-empty
    tag wins. With nothing legal, strict mode yields an unparseable value
    (callers treat it as "cannot be generated") while lenient mode takes the
    whole output, collapsed to one line, as the answer.
    """
    if expected not in PROMPT_KINDS:
        raise ValueError(f"unknown prompt kind '{expected}'")
    wants_answer = expected in ANSWER_KINDS
    for line in raw.splitlines():
        stripped = line.strip()
        upper = stripped.upper()
        if wants_answer:
            if upper.startswith("ANSWER:"):
                rest = stripped[len("ANSWER:") :].strip()
                if rest:
                    return _answer(rest)
            elif upper == "NOT_ANSWERABLE":
                return _not_answerable()
        elif upper.startswith("SUBQUESTION:"):
            rest = stripped[len("SUBQUESTION:") :].strip()
            if rest:
                return _sub_question(rest)
    if strict:
        return _unparseable(raw)
    one_line = " ".join(raw.split())
    return _answer(one_line) if one_line else _unparseable(raw)
