"""Exact top-k similarity search shared by ontology, abbreviation and lab-range tools.

Similarity is 1 / (1 + Euclidean distance), so scores live in (0, 1] and
identical vectors score exactly 1.  Search is a brute-force scan: the indexed
collections (tens of thousands of rows) are small enough that exactness costs
nothing.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import requests

from .errors import OntomineError, TransportError


class DimensionMismatchError(OntomineError):
    pass


class EmptyIndexError(OntomineError):
    pass


class EmbeddingError(OntomineError):
    pass


@dataclass(frozen=True)
class IndexEntry:
    key: str            # the embedded text
    payload: Any        # JSON-serializable reference (code string, record dict, ...)
    vector: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise EmbeddingError(f"non-finite vector for key {self.key!r}")


@dataclass(frozen=True)
class Candidate:
    entry: IndexEntry
    score: float


@dataclass
class SimilarityIndex:
    entries: list[IndexEntry]
    dimension: int
    provider_id: str
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def matrix(self) -> np.ndarray:
        if self._matrix is None or self._matrix.shape[0] != len(self.entries):
            self._matrix = np.vstack([e.vector for e in self.entries])
        return self._matrix


def similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """1 / (1 + ||a - b||_2); symmetric, strictly decreasing in distance."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"dimensions differ: {va.shape} vs {vb.shape}")
    return float(1.0 / (1.0 + np.sqrt(np.sum((va - vb) ** 2))))


class HashingEmbedder:
    """Deterministic bag-of-words embedder for tests and offline runs.

    Each case-folded token is hashed (md5) to a bucket of a ``dimension``-long
    count vector, which is then L2-normalized.  No model downloads, bit-exact
    across processes.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.provider_id = f"hashing-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmbeddingError("cannot embed empty text")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in re.findall(r"[a-z0-9]+", text.casefold()):
            digest = hashlib.md5(token.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:8], "big") % self.dimension] += 1.0
        norm = np.sqrt(np.sum(vec**2))
        if norm > 0:
            vec /= norm
        return vec

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for the embedding wire protocol.

    POSTs {"model": ..., "input": [...]} and expects
    {"data": [{"embedding": [...]}, ...]} back, one row per input.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        dimension: int,
        retries: int = 3,
        timeout: float = 60.0,
        backoff_base: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dimension = dimension
        self.retries = retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.provider_id = f"remote-{model}"

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        payload = {"model": self.model, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise TransportError(f"server error {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()["data"]
                vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in data]
            except (requests.RequestException, TransportError, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.retries - 1 and self.backoff_base > 0:
                    time.sleep(self.backoff_base * (2**attempt))
                continue
            if len(vectors) != len(texts):
                raise EmbeddingError(
                    f"embedding response returned {len(vectors)} rows for {len(texts)} inputs"
                )
            for vec in vectors:
                if vec.shape != (self.dimension,):
                    raise DimensionMismatchError(
                        f"expected dimension {self.dimension}, got {vec.shape}"
                    )
            return vectors
        raise TransportError(f"embedding request failed after {self.retries} attempts: {last_error}")


def build_index(items: Sequence[tuple[str, Any]], embedder) -> SimilarityIndex:
    """Embed (key, payload) items once into a searchable index."""
    if not items:
        raise EmptyIndexError("cannot build an index from zero items")
    vectors = embedder.embed_batch([key for key, _ in items])
    entries = []
    for (key, payload), vec in zip(items, vectors):
        if vec.shape != (embedder.dimension,):
            raise DimensionMismatchError(
                f"vector for {key!r} has shape {vec.shape}, expected ({embedder.dimension},)"
            )
        entries.append(IndexEntry(key=key, payload=payload, vector=vec))
    return SimilarityIndex(
        entries=entries, dimension=embedder.dimension, provider_id=embedder.provider_id
    )


def top_k(index: SimilarityIndex, query: str, k: int, embedder) -> list[Candidate]:
    """The k entries most similar to ``query``, descending; ties keep load order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise EmptyIndexError("top_k over an empty index")
    qvec = embedder.embed(query)
    return top_k_by_vector(index, qvec, k)


def top_k_by_vector(index: SimilarityIndex, qvec: np.ndarray, k: int) -> list[Candidate]:
    if qvec.shape != (index.dimension,):
        raise DimensionMismatchError(
            f"query dimension {qvec.shape} does not match index dimension {index.dimension}"
        )
    matrix = index.matrix()
    distances = np.sqrt(np.sum((matrix - qvec) ** 2, axis=1))
    scores = 1.0 / (1.0 + distances)
    # lexsort: primary key last; negated score descending, then load order ascending
    order = np.lexsort((np.arange(len(scores)), -scores))
    chosen = order[: min(k, len(scores))]
    return [Candidate(entry=index.entries[i], score=float(scores[i])) for i in chosen]


def save_index(index: SimilarityIndex, path: str | Path) -> None:
    """Persist as JSONL: a header line then one {key, payload, vector} per entry."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "dimension": index.dimension,
                    "provider_id": index.provider_id,
                    "count": len(index.entries),
                }
            )
            + "\n"
        )
        for e in index.entries:
            fh.write(
                json.dumps(
                    {"key": e.key, "payload": e.payload, "vector": e.vector.tolist()},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_index(path: str | Path) -> SimilarityIndex:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        entries = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            vec = np.asarray(obj["vector"], dtype=np.float64)
            if vec.shape != (header["dimension"],):
                raise DimensionMismatchError(f"entry {obj['key']!r} has wrong dimension")
            entries.append(IndexEntry(key=obj["key"], payload=obj["payload"], vector=vec))
    if len(entries) != header["count"]:
        raise OntomineError(
            f"index {path} declares {header['count']} entries but contains {len(entries)}"
        )
    return SimilarityIndex(
        entries=entries, dimension=header["dimension"], provider_id=header["provider_id"]
    )


def ontology_index_items(store) -> list[tuple[str, Any]]:
    """Index rows for an ontology store: label plus synonyms as key, code as payload."""
    items = []
    for code in sorted(store.records):
        record = store.records[code]
        key = "; ".join(record.terms())
        items.append((key, str(code)))
    return items
