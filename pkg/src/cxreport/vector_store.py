"""Embedded document store: chunking, ingestion, and threshold retrieval.

The store is an immutable snapshot; ingestion returns a new snapshot and
never mutates the old one. Retrieval is an exhaustive cosine scan — the
corpus is tens of documents, so the reference semantics (top-k among chunks
scoring at least tau, ties broken by chunk id) double as the implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import DocumentRecord
from .errors import (
    DimensionMismatch,
    DuplicateChunkId,
    EmptyStore,
    InvalidWindow,
    MalformedFile,
    ValueOutOfRange,
    ZeroNormVector,
)
from .serialize import dump_json, load_json

_SENTENCE_BREAKS = (". ", "? ", "! ", "\n")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    disease: str
    text: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1:
            raise DimensionMismatch(f"chunk {self.chunk_id!r}: vector must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise MalformedFile(f"chunk {self.chunk_id!r}: vector must be finite")
        if np.linalg.norm(vec) == 0.0:
            raise ZeroNormVector(f"chunk {self.chunk_id!r}: vector has zero norm")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class ChunkProvenance:
    doc_id: str
    disease: str
    index: int
    start: int
    end: int


@dataclass(frozen=True)
class StoreSnapshot:
    chunks: tuple[Chunk, ...] = ()
    dim: int | None = None

    def __post_init__(self) -> None:
        ids = set()
        for chunk in self.chunks:
            if chunk.chunk_id in ids:
                raise DuplicateChunkId(f"duplicate chunk id {chunk.chunk_id!r}")
            ids.add(chunk.chunk_id)
            if self.dim is not None and chunk.vector.size != self.dim:
                raise DimensionMismatch(
                    f"chunk {chunk.chunk_id!r} dim {chunk.vector.size} != store dim {self.dim}")

    @property
    def disease_index(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = {}
        for chunk in self.chunks:
            index.setdefault(chunk.disease, []).append(chunk.chunk_id)
        return index

    def chunk_by_id(self, chunk_id: str) -> Chunk:
        for chunk in self.chunks:
            if chunk.chunk_id == chunk_id:
                return chunk
        raise KeyError(chunk_id)


@dataclass(frozen=True)
class Hit:
    chunk_id: str
    score: float
    text: str


@dataclass(frozen=True)
class RetrievalResult:
    hits: tuple[Hit, ...]
    query_echo: str
    tau: float
    k: int

    def __post_init__(self) -> None:
        scores = [h.score for h in self.hits]
        if any(s < self.tau for s in scores):
            raise ValueOutOfRange("retrieval hit below the relevance threshold")
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueOutOfRange("retrieval scores must be non-increasing")
        if len(self.hits) > self.k:
            raise ValueOutOfRange("more hits than requested k")

    def chunk_ids(self) -> list[str]:
        return [h.chunk_id for h in self.hits]


def chunk_documents(
    docs: Sequence[DocumentRecord], max_chars: int, overlap_chars: int = 0
) -> list[tuple[str, ChunkProvenance]]:
    """Split documents into overlapping windows, preferring sentence breaks.

    Consecutive chunks of one document overlap by exactly ``overlap_chars``
    (except possibly the final chunk), so the original text is recoverable by
    concatenating the first chunk with each later chunk minus its overlap
    prefix.
    """
    if overlap_chars < 0 or max_chars <= overlap_chars:
        raise InvalidWindow(f"need max_chars > overlap_chars >= 0, got {max_chars}/{overlap_chars}")
    out: list[tuple[str, ChunkProvenance]] = []
    for doc in docs:
        text = doc.text
        start = 0
        index = 0
        while start < len(text):
            hard_end = min(start + max_chars, len(text))
            end = hard_end
            if hard_end < len(text):
                window = text[start:hard_end]
                best = -1
                for brk in _SENTENCE_BREAKS:
                    pos = window.rfind(brk)
                    if pos >= 0:
                        best = max(best, pos + len(brk))
                # a sentence cut must still make progress past the overlap
                if best > overlap_chars:
                    end = start + best
            out.append((
                text[start:end],
                ChunkProvenance(doc_id=doc.doc_id, disease=doc.disease,
                                index=index, start=start, end=end),
            ))
            index += 1
            if end >= len(text):
                break
            start = end - overlap_chars
    return out


def ingest(snapshot: StoreSnapshot, chunks: Sequence[Chunk]) -> StoreSnapshot:
    """Return a new snapshot with the chunks appended; the input is unchanged."""
    if not chunks:
        return snapshot
    dim = snapshot.dim if snapshot.dim is not None else chunks[0].vector.size
    existing = {c.chunk_id for c in snapshot.chunks}
    for chunk in chunks:
        if chunk.chunk_id in existing:
            raise DuplicateChunkId(f"chunk id {chunk.chunk_id!r} already ingested")
        existing.add(chunk.chunk_id)
        if chunk.vector.size != dim:
            raise DimensionMismatch(
                f"chunk {chunk.chunk_id!r} dim {chunk.vector.size} != store dim {dim}")
    return StoreSnapshot(chunks=snapshot.chunks + tuple(chunks), dim=dim)


def retrieve(
    snapshot: StoreSnapshot,
    query_vector: np.ndarray,
    tau: float,
    k: int,
    disease_filter: str | None = None,
    query_echo: str = "",
) -> RetrievalResult:
    """Top-k chunks by cosine similarity with score >= tau.

    Descending score order; exact ties broken by ascending chunk id.
    """
    if k < 1:
        raise ValueOutOfRange(f"k must be >= 1, got {k}")
    if not snapshot.chunks:
        raise EmptyStore("retrieval against an empty store")
    query = np.asarray(query_vector, dtype=np.float64)
    if query.ndim != 1 or query.size != snapshot.dim:
        raise DimensionMismatch(f"query dim {query.size} != store dim {snapshot.dim}")
    qnorm = np.linalg.norm(query)
    if qnorm == 0.0:
        raise ZeroNormVector("query vector has zero norm")

    candidates = [
        c for c in snapshot.chunks
        if disease_filter is None or c.disease == disease_filter
    ]
    scored: list[tuple[float, str, Chunk]] = []
    if candidates:
        matrix = np.stack([c.vector for c in candidates])
        norms = np.linalg.norm(matrix, axis=1)
        scores = np.clip((matrix @ query) / (norms * qnorm), -1.0, 1.0)
        for chunk, score in zip(candidates, scores):
            if score >= tau:
                scored.append((float(score), chunk.chunk_id, chunk))
    scored.sort(key=lambda item: (-item[0], item[1]))
    hits = tuple(
        Hit(chunk_id=chunk.chunk_id, score=score, text=chunk.text)
        for score, _, chunk in scored[:k]
    )
    return RetrievalResult(hits=hits, query_echo=query_echo, tau=float(tau), k=int(k))


# --- persistence ---

def save_store(snapshot: StoreSnapshot, path: str | Path) -> None:
    dump_json(path, {
        "dim": snapshot.dim,
        "chunks": [
            {
                "chunk_id": c.chunk_id,
                "doc_id": c.doc_id,
                "disease": c.disease,
                "text": c.text,
                "vector": c.vector,
            }
            for c in snapshot.chunks
        ],
    })


def load_store(path: str | Path) -> StoreSnapshot:
    raw = load_json(path)
    if not isinstance(raw, dict) or "chunks" not in raw:
        raise MalformedFile(f"{path}: expected a store manifest")
    chunks = []
    for row in raw["chunks"]:
        try:
            chunks.append(Chunk(
                chunk_id=str(row["chunk_id"]), doc_id=str(row["doc_id"]),
                disease=str(row["disease"]), text=str(row["text"]),
                vector=np.asarray(row["vector"], dtype=np.float64),
            ))
        except KeyError as exc:
            raise MalformedFile(f"{path}: chunk missing key {exc}") from exc
    dim = raw.get("dim")
    return StoreSnapshot(chunks=tuple(chunks), dim=None if dim is None else int(dim))
