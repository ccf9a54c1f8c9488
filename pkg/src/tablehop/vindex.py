"""Exact cosine top-k index over (id, embedding) pairs, with disk persistence.

Search is an exact linear scan with heap selection; exact score ties break
by id ascending, so rankings are reproducible across runs and
implementations. On disk an index is a directory holding a JSON manifest
and a line-delimited vectors file with full decimal precision.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .embedding import Embedding, dot_score
from .errors import PersistenceError

MANIFEST_NAME = "manifest.json"
VECTORS_NAME = "vectors.jsonl"
MAGIC = "tablehop-vindex"
VERSION = 1


@dataclass(frozen=True)
class ScoredId:
    id: str
    score: float


class VectorIndex:
    """Immutable ordered collection of (id, unit vector) entries."""

    def __init__(self, dim: int, ids: Sequence[str], vectors: np.ndarray):
        self.dim = dim
        self.ids = list(ids)
        self.vectors = vectors  # shape (len(ids), dim)

    def __len__(self) -> int:
        return len(self.ids)

    def entries(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, id_ in enumerate(self.ids):
            yield id_, self.vectors[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorIndex):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.ids == other.ids
            and np.array_equal(self.vectors, other.vectors)
        )


def build_index(items: Sequence[tuple[str, Embedding]]) -> VectorIndex:
    """Build an index from (id, embedding) pairs; duplicate ids and mixed dims are errors."""
    if not items:
        return VectorIndex(dim=0, ids=[], vectors=np.zeros((0, 0), dtype=np.float64))
    dim = items[0][1].dim
    ids: list[str] = []
    seen: set[str] = set()
    vectors = np.zeros((len(items), dim), dtype=np.float64)
    for i, (id_, emb) in enumerate(items):
        if id_ in seen:
            raise ValueError(f"duplicate index id '{id_}'")
        if emb.dim != dim:
            raise ValueError(f"entry '{id_}' has dim {emb.dim}, expected {dim}")
        seen.add(id_)
        ids.append(id_)
        vectors[i] = emb.values
    return VectorIndex(dim=dim, ids=ids, vectors=vectors)


def top_k(index: VectorIndex, query: Embedding, k: int) -> list[ScoredId]:
    """The min(k, |index|) highest-cosine entries, score descending, ties by id ascending."""
    if k <= 0:
        raise ValueError("k must be positive")
    if len(index) == 0:
        return []
    if query.dim != index.dim:
        raise ValueError(f"query dim {query.dim} != index dim {index.dim}")
    scored = (
        ScoredId(id=id_, score=dot_score(index.vectors[i], query.values))
        for i, id_ in enumerate(index.ids)
    )
    return heapq.nsmallest(k, scored, key=lambda s: (-s.score, s.id))


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Write the index into directory ``path`` (manifest + vectors file)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = []
    for id_, values in index.entries():
        lines.append(json.dumps({"id": id_, "values": values.tolist()}))
    payload = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
    (path / VECTORS_NAME).write_bytes(payload)
    manifest = {
        "magic": MAGIC,
        "version": VERSION,
        "dim": index.dim,
        "count": len(index),
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> VectorIndex:
    """Load an index saved by save_index; verifies magic, version, and checksum."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    vectors_path = path / VECTORS_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise PersistenceError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{manifest_path} is not valid JSON: {exc}") from exc
    if manifest.get("magic") != MAGIC or manifest.get("version") != VERSION:
        raise PersistenceError(
            f"{manifest_path}: version mismatch "
            f"(magic={manifest.get('magic')!r}, version={manifest.get('version')!r})"
        )
    try:
        payload = vectors_path.read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read {vectors_path}: {exc}") from exc
    checksum = hashlib.sha256(payload).hexdigest()
    if checksum != manifest.get("checksum"):
        raise PersistenceError(f"{vectors_path}: checksum mismatch (index corrupted)")

    dim = int(manifest["dim"])
    count = int(manifest["count"])
    ids: list[str] = []
    vectors = np.zeros((count, dim), dtype=np.float64)
    rows = [line for line in payload.decode("utf-8").splitlines() if line.strip()]
    if len(rows) != count:
        raise PersistenceError(f"{vectors_path}: expected {count} entries, found {len(rows)}")
    for i, line in enumerate(rows):
        record = json.loads(line)
        values = np.asarray(record["values"], dtype=np.float64)
        if values.shape[0] != dim:
            raise PersistenceError(
                f"{vectors_path}: entry '{record['id']}' has dim {values.shape[0]}, manifest says {dim}"
            )
        ids.append(record["id"])
        vectors[i] = values
    return VectorIndex(dim=dim, ids=ids, vectors=vectors)
