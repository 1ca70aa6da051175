"""BM25 inverted index, hybrid fusion with a dense reranking client, persistence.

A built index is immutable and may serve unlimited concurrent queries;
building and saving are single-writer phases.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx

from rcgauge.core import Document, Question, RcgaugeError, tokenize

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75

INDEX_MAGIC = b"RCGX"
INDEX_VERSION = "1"


class CorpusError(RcgaugeError, ValueError):
    """Corpus input violates an index precondition."""


class IndexFormatError(RcgaugeError):
    """Persisted index file is unreadable, corrupted, or version-incompatible."""


class DenseBackendError(RcgaugeError):
    """Dense reranking backend failed; hybrid retrieval degrades to BM25."""


@dataclass(frozen=True)
class InvertedIndex:
    """Term postings plus document statistics over one corpus.

    Postings lists are sorted by doc_id; terms carry no positional data.
    """

    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    doc_count: int
    avg_doc_length: float
    doc_store: dict[str, Document]
    version: str = INDEX_VERSION


@dataclass(frozen=True)
class RetrievalBatch:
    """Top-k scored documents for one question, highest score first."""

    question_id: str
    entries: tuple[tuple[Document, float], ...]
    degraded: bool = False

    def __post_init__(self) -> None:
        seen: set[str] = set()
        previous: tuple[float, str] | None = None
        for doc, score in self.entries:
            if doc.doc_id in seen:
                raise ValueError(f"duplicate doc_id {doc.doc_id!r} in batch")
            seen.add(doc.doc_id)
            key = (-score, doc.doc_id)
            if previous is not None and key < previous:
                raise ValueError("batch entries not sorted by (score desc, doc_id asc)")
            previous = key

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def documents(self) -> tuple[Document, ...]:
        return tuple(doc for doc, _ in self.entries)


class EmbeddingClient(Protocol):
    """Dense backend: ranks candidate documents by semantic relevance."""

    def rank(self, query: str, doc_ids: Sequence[str], texts: Sequence[str]) -> list[str]:
        """Return doc_ids reordered by decreasing dense relevance."""
        ...


class HttpEmbeddingClient:
    """Talks to a reranking service over ``POST /rank``.

    Request: ``{"query": str, "doc_ids": [str], "texts": [str]}``;
    response: ``{"ranking": [str]}`` with the same ids in relevance order.
    """

    def __init__(self, url: str, timeout: float = 10.0, retries: int = 2) -> None:
        self.url = url.rstrip("/")
        self.retries = retries
        self._client = httpx.Client(timeout=timeout)

    def rank(self, query: str, doc_ids: Sequence[str], texts: Sequence[str]) -> list[str]:
        payload = {"query": query, "doc_ids": list(doc_ids), "texts": list(texts)}
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(self.url + "/rank", json=payload)
                response.raise_for_status()
                body = response.json()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
        else:
            raise DenseBackendError(f"dense backend unreachable: {last_error}")

        ranking = body.get("ranking") if isinstance(body, dict) else None
        if not isinstance(ranking, list) or sorted(ranking) != sorted(doc_ids):
            raise DenseBackendError(
                "dense backend returned an invalid ranking "
                f"(expected a permutation of {len(doc_ids)} doc_ids)"
            )
        return list(ranking)

    def close(self) -> None:
        self._client.close()


def build_index(corpus: Iterable[Document]) -> InvertedIndex:
    """Index a corpus of documents for BM25 retrieval.

    The result is independent of corpus iteration order; duplicate doc_ids
    and empty corpora are errors.
    """
    docs: dict[str, Document] = {}
    for doc in corpus:
        if doc.doc_id in docs:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        docs[doc.doc_id] = doc
    if not docs:
        raise CorpusError("corpus is empty")

    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc_id in sorted(docs):
        tokens = tokenize(docs[doc_id].text)
        doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc_id, tf))

    doc_count = len(docs)
    ordered_postings = {term: postings[term] for term in sorted(postings)}
    return InvertedIndex(
        postings=ordered_postings,
        doc_lengths=doc_lengths,
        doc_count=doc_count,
        avg_doc_length=sum(doc_lengths.values()) / doc_count,
        doc_store={doc_id: docs[doc_id] for doc_id in sorted(docs)},
    )


def _idf(doc_count: int, doc_frequency: int) -> float:
    return math.log(1.0 + (doc_count - doc_frequency + 0.5) / (doc_frequency + 0.5))


def _term_weight(tf: int, doc_length: int, avg_doc_length: float) -> float:
    norm = BM25_K1 * (1.0 - BM25_B + BM25_B * doc_length / avg_doc_length)
    return tf * (BM25_K1 + 1.0) / (tf + norm)


def _unique_terms(question: Question) -> list[str]:
    return list(dict.fromkeys(question.tokens))


def bm25_score(index: InvertedIndex, question: Question, doc_id: str) -> float:
    """BM25 score of one document for a question (k1=1.2, b=0.75).

    Sums over the question's distinct terms in first-occurrence order, so
    repeated scoring is bit-identical.
    """
    if doc_id not in index.doc_store:
        raise KeyError(f"unknown doc_id {doc_id!r}")
    if index.avg_doc_length == 0.0:
        return 0.0
    doc_length = index.doc_lengths[doc_id]
    score = 0.0
    for term in _unique_terms(question):
        plist = index.postings.get(term)
        if not plist:
            continue
        position = bisect_left(plist, (doc_id, 0))
        if position == len(plist) or plist[position][0] != doc_id:
            continue
        tf = plist[position][1]
        score += _idf(index.doc_count, len(plist)) * _term_weight(
            tf, doc_length, index.avg_doc_length
        )
    return score


def retrieve_bm25(index: InvertedIndex, question: Question, top_k: int) -> RetrievalBatch:
    """Top-k documents by BM25 score; ties broken by ascending doc_id.

    Only documents with a strictly positive score are returned, so the
    batch may be shorter than top_k.
    """
    if not question.tokens:
        raise ValueError(f"question {question.id!r} has no tokens")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")

    accumulated: dict[str, float] = {}
    if index.avg_doc_length > 0.0:
        for term in _unique_terms(question):
            plist = index.postings.get(term)
            if not plist:
                continue
            idf = _idf(index.doc_count, len(plist))
            for doc_id, tf in plist:
                weight = idf * _term_weight(
                    tf, index.doc_lengths[doc_id], index.avg_doc_length
                )
                accumulated[doc_id] = accumulated.get(doc_id, 0.0) + weight

    ranked = sorted(
        ((doc_id, score) for doc_id, score in accumulated.items() if score > 0.0),
        key=lambda item: (-item[1], item[0]),
    )[:top_k]
    entries = tuple((index.doc_store[doc_id], score) for doc_id, score in ranked)
    return RetrievalBatch(question_id=question.id, entries=entries)


def retrieve_hybrid(
    index: InvertedIndex,
    dense_backend: EmbeddingClient,
    question: Question,
    top_k: int,
    fusion_k: int,
) -> RetrievalBatch:
    """Reciprocal-rank fusion of the BM25 ranking and a dense reranking.

    The dense backend reranks a BM25 candidate pool of 2*top_k documents;
    each list contributes 1/(fusion_k + rank) with 1-based ranks. If the
    backend fails, the plain BM25 result is returned with ``degraded`` set.
    """
    pool = retrieve_bm25(index, question, top_k=2 * top_k)
    if not pool.entries:
        return pool

    pool_ids = [doc.doc_id for doc, _ in pool.entries]
    try:
        dense_ranking = dense_backend.rank(
            question.raw_text, pool_ids, [index.doc_store[d].text for d in pool_ids]
        )
    except DenseBackendError as exc:
        logger.warning("question %s: %s; falling back to BM25", question.id, exc)
        bm25 = retrieve_bm25(index, question, top_k)
        return RetrievalBatch(
            question_id=bm25.question_id, entries=bm25.entries, degraded=True
        )

    fused: dict[str, float] = {}
    for ranking in (pool_ids[:top_k], dense_ranking[:top_k]):
        for rank, doc_id in enumerate(ranking, start=1):
            fused[doc_id] = fused.get(doc_id, 0.0) + 1.0 / (fusion_k + rank)

    ranked = sorted(fused.items(), key=lambda item: (-item[1], item[0]))[:top_k]
    entries = tuple((index.doc_store[doc_id], score) for doc_id, score in ranked)
    return RetrievalBatch(question_id=question.id, entries=entries)


def _canonical_json(obj: object) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Persist an index as a checksummed single-file segment.

    Layout: magic, length-prefixed JSON manifest, then length-prefixed
    JSON blocks (documents, postings) covered by a sha256 checksum.
    """
    doc_block = _canonical_json(
        {
            "docs": [
                {
                    "doc_id": doc_id,
                    "text": index.doc_store[doc_id].text,
                    "source": index.doc_store[doc_id].source,
                    "length": index.doc_lengths[doc_id],
                }
                for doc_id in sorted(index.doc_store)
            ]
        }
    )
    postings_block = _canonical_json(
        {"postings": {term: [[d, tf] for d, tf in plist] for term, plist in index.postings.items()}}
    )
    payload = b"".join(struct.pack(">I", len(b)) + b for b in (doc_block, postings_block))

    manifest = _canonical_json(
        {
            "format": "rcgauge-index",
            "version": index.version,
            "doc_count": index.doc_count,
            "blocks": 2,
            "payload_sha256": hashlib.sha256(payload).hexdigest(),
        }
    )
    with open(path, "wb") as handle:
        handle.write(INDEX_MAGIC)
        handle.write(struct.pack(">I", len(manifest)))
        handle.write(manifest)
        handle.write(payload)


def _read_exact(handle, size: int, what: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise IndexFormatError(f"truncated index file while reading {what}")
    return data


def load_index(path: str | Path) -> InvertedIndex:
    """Load an index written by :func:`save_index`, verifying its checksum."""
    with open(path, "rb") as handle:
        if _read_exact(handle, len(INDEX_MAGIC), "magic") != INDEX_MAGIC:
            raise IndexFormatError(f"{path}: not an rcgauge index file")
        (manifest_len,) = struct.unpack(">I", _read_exact(handle, 4, "manifest size"))
        try:
            manifest = json.loads(_read_exact(handle, manifest_len, "manifest"))
        except ValueError as exc:
            raise IndexFormatError(f"{path}: bad manifest: {exc}") from None
        version = manifest.get("version")
        if version != INDEX_VERSION:
            raise IndexFormatError(
                f"{path}: index version {version!r} unsupported "
                f"(this build reads version {INDEX_VERSION!r})"
            )
        payload = handle.read()

    if hashlib.sha256(payload).hexdigest() != manifest.get("payload_sha256"):
        raise IndexFormatError(f"{path}: checksum mismatch (corrupted payload)")

    blocks: list[dict] = []
    offset = 0
    for _ in range(manifest.get("blocks", 0)):
        if offset + 4 > len(payload):
            raise IndexFormatError(f"{path}: truncated block header")
        (block_len,) = struct.unpack(">I", payload[offset : offset + 4])
        offset += 4
        blocks.append(json.loads(payload[offset : offset + block_len]))
        offset += block_len

    if len(blocks) != 2:
        raise IndexFormatError(f"{path}: expected 2 blocks, found {len(blocks)}")

    doc_store: dict[str, Document] = {}
    doc_lengths: dict[str, int] = {}
    for entry in blocks[0]["docs"]:
        doc = Document(doc_id=entry["doc_id"], text=entry["text"], source=entry["source"])
        doc_store[doc.doc_id] = doc
        doc_lengths[doc.doc_id] = entry["length"]

    postings = {
        term: [(doc_id, tf) for doc_id, tf in plist]
        for term, plist in sorted(blocks[1]["postings"].items())
    }
    doc_count = manifest["doc_count"]
    if doc_count != len(doc_store):
        raise IndexFormatError(
            f"{path}: manifest doc_count {doc_count} != stored documents {len(doc_store)}"
        )
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        doc_count=doc_count,
        avg_doc_length=sum(doc_lengths.values()) / doc_count,
        doc_store=doc_store,
        version=version,
    )


def corpus_idf_weights(index: InvertedIndex) -> dict[str, float]:
    """Per-term inverse document frequencies, for optional relevance weighting."""
    return {
        term: _idf(index.doc_count, len(plist)) for term, plist in index.postings.items()
    }


def read_corpus(path: str | Path) -> Iterable[Document]:
    """Stream documents from a JSON-lines corpus file.

    Each line is ``{"doc_id": str, "text": str, "source": str}``; ``source``
    defaults to ``custom`` when absent.
    """
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield Document(
                    doc_id=obj["doc_id"],
                    text=obj["text"],
                    source=obj.get("source", "custom"),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad corpus line: {exc}") from None
