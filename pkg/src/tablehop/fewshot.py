"""Exemplar store: training (question, table context, answer) triples with joint embeddings.

Each training example's gold table is flattened, its top passages for the
training question attached, and the triple embedded as one string joined by
a literal " [SEP] " separator (contractual). At query time the question is
combined with the best candidate table's context; the answer side is left
out since it is unknown.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, QAExample
from .errors import CorpusError, PersistenceError
from .retrieval import RetrievalConfig, retrieve_passages
from .textprep import Budgets, attach_passages, flatten_table
from .vindex import VectorIndex, build_index, load_index, save_index, top_k

SEPARATOR = " [SEP] "
INDEX_DIR = "index"
EXEMPLARS_NAME = "exemplars.jsonl"


@dataclass(frozen=True)
class Exemplar:
    source_id: str
    question: str
    context_text: str
    answer: str


class ExemplarStore:
    """Immutable exemplar collection keyed by source id, with a joint-embedding index.

    The store keeps the embedder it was built with; selection queries must
    use the same encoder as the stored triples.
    """

    def __init__(self, exemplars: list[Exemplar], index: VectorIndex, embedder):
        if sorted(e.source_id for e in exemplars) != sorted(index.ids):
            raise ValueError("index ids differ from exemplar source_ids")
        self.exemplars = exemplars
        self.index = index
        self.embedder = embedder
        self._by_id = {e.source_id: e for e in exemplars}

    def __len__(self) -> int:
        return len(self.exemplars)

    def get(self, source_id: str) -> Exemplar:
        return self._by_id[source_id]


def joint_text(question: str, context_text: str, answer: str | None = None) -> str:
    parts = [question, context_text]
    if answer is not None:
        parts.append(answer)
    return SEPARATOR.join(parts)


def build_exemplar_store(
    train: list[QAExample],
    corpus: Corpus,
    embedder,
    cfg: RetrievalConfig,
    budgets: Budgets,
) -> ExemplarStore:
    """Embed every training triple and index it by the example's id.

    Multi-answer examples embed their first answer; the gold table must
    resolve in the corpus.
    """
    exemplars: list[Exemplar] = []
    items = []
    for example in train:
        if example.split != "train":
            raise CorpusError(f"exemplar '{example.id}' is from split '{example.split}', not train")
        if not example.gold_table_id:
            raise CorpusError(f"train example '{example.id}' lacks gold_table_id")
        table = corpus.tables.get(example.gold_table_id)
        if table is None:
            raise CorpusError(
                f"train example '{example.id}': gold table '{example.gold_table_id}' not in corpus"
            )
        flat = flatten_table(table, budgets.table_chars)
        scores = retrieve_passages(example.question, table, corpus, embedder, cfg.k_passages)
        rich = attach_passages(flat, [corpus.passages[s.id] for s in scores], budgets.passage_chars)
        answer = example.answers[0]
        exemplars.append(
            Exemplar(
                source_id=example.id,
                question=example.question,
                context_text=rich.text,
                answer=answer,
            )
        )
        items.append((example.id, embedder.embed_text(joint_text(example.question, rich.text, answer))))
    return ExemplarStore(exemplars, build_index(items), embedder)


def select_exemplars(
    store: ExemplarStore, question: str, candidate_context: str, n: int
) -> list[Exemplar]:
    """Top-n exemplars by cosine between the query pair and the stored triples."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0 or len(store) == 0:
        return []
    query = store.embedder.embed_text(joint_text(question, candidate_context))
    return [store.get(s.id) for s in top_k(store.index, query, n)]


def save_store(store: ExemplarStore, path: str | Path) -> None:
    """Write the store into directory ``path``: vector index plus exemplars sidecar."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_index(store.index, path / INDEX_DIR)
    with open(path / EXEMPLARS_NAME, "w", encoding="utf-8") as f:
        for e in store.exemplars:
            f.write(
                json.dumps(
                    {
                        "source_id": e.source_id,
                        "question": e.question,
                        "context_text": e.context_text,
                        "answer": e.answer,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_store(path: str | Path, embedder) -> ExemplarStore:
    """Load a store saved by save_store; the embedder must match the one used at build time."""
    path = Path(path)
    index = load_index(path / INDEX_DIR)
    exemplars: list[Exemplar] = []
    sidecar = path / EXEMPLARS_NAME
    try:
        lines = sidecar.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise PersistenceError(f"cannot read {sidecar}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            exemplars.append(
                Exemplar(
                    source_id=record["source_id"],
                    question=record["question"],
                    context_text=record["context_text"],
                    answer=record["answer"],
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise PersistenceError(f"{sidecar}:{lineno}: bad exemplar record: {exc}") from exc
    try:
        return ExemplarStore(exemplars, index, embedder)
    except ValueError as exc:
        raise PersistenceError(f"{path}: {exc}") from exc


def empty_store(embedder) -> ExemplarStore:
    return ExemplarStore([], build_index([]), embedder)
