"""Stage 1: per-chunk candidate retrieval and LLM entity extraction.

Every document is chunked, each chunk pulls its nearest ontology candidates,
and the model lists candidate mention spans.  Spans that are not verbatim
(case-insensitive) substrings of their chunk are dropped and logged, which
makes hallucinated spans detectable instead of silently polluting output.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from .corpus import Chunk, ChunkingConfig, Document, chunk_document
from .errors import OntomineError
from .gateway import LlmGateway
from .retrieval import Candidate, SimilarityIndex, top_k

logger = logging.getLogger(__name__)

_LIST_MARKER_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


class Task(str, Enum):
    PHENOTYPE = "phenotype"
    DISEASE = "disease"


class EntityStatus(str, Enum):
    UNVERIFIED = "unverified"
    EXPANDED = "expanded"
    VERIFIED_DIRECT = "verified_direct"
    IMPLIED_LAB = "implied_lab"
    IMPLIED_CONTEXT = "implied_context"
    REJECTED = "rejected"


class ExtractionError(OntomineError):
    pass


@dataclass(frozen=True)
class TrailStep:
    step: str
    verdict: str
    evidence: str = ""


@dataclass
class EntityRecord:
    """A mined mention moving through unverified -> verified/implied/rejected."""

    doc_id: str
    chunk_index: int
    mention: str
    task: Task
    status: EntityStatus = EntityStatus.UNVERIFIED
    expansion: str | None = None
    implied_phenotype: str | None = None
    trail: list[TrailStep] = field(default_factory=list)

    def __post_init__(self):
        if not self.mention:
            raise ValueError("mention must be non-empty")

    def record(self, step: str, verdict: str, evidence: str = "") -> None:
        self.trail.append(TrailStep(step, verdict, evidence))

    def current_term(self) -> str:
        """The term verification works with: the expansion when present."""
        return self.expansion or self.mention


@dataclass(frozen=True)
class CandidateSet:
    chunk: Chunk
    candidates: tuple[Candidate, ...]


def retrieve_chunk_candidates(
    chunk: Chunk, index: SimilarityIndex, embedder, k: int = 5
) -> CandidateSet:
    """Nearest ontology candidates for a chunk, used as extraction context."""
    if not chunk.text.strip():
        raise ValueError("cannot retrieve candidates for an empty chunk")
    return CandidateSet(chunk=chunk, candidates=tuple(top_k(index, chunk.text, k, embedder)))


def parse_mention_list(raw: str) -> list[str]:
    """Parse a newline- or semicolon-separated mention list out of model text."""
    mentions: list[str] = []
    for line in (raw or "").replace(";", "\n").splitlines():
        item = _LIST_MARKER_RE.sub("", line).strip()
        if not item or item.casefold() == "none":
            continue
        mentions.append(item)
    return mentions


def extract_entities(
    chunk: Chunk, candidate_set: CandidateSet, task: Task, gateway: LlmGateway
) -> list[EntityRecord]:
    """Run the extraction prompt for one chunk and ground the returned spans."""
    if candidate_set.chunk is not chunk and candidate_set.chunk != chunk:
        raise ValueError("candidate set does not belong to this chunk")
    template_id = "extract.phenotype" if task is Task.PHENOTYPE else "extract.disease"
    raw = gateway.complete(
        template_id, {"context": chunk.text, "candidates": list(candidate_set.candidates)}
    )
    records: list[EntityRecord] = []
    seen: set[str] = set()
    folded_chunk = chunk.text.casefold()
    for mention in parse_mention_list(raw):
        key = mention.casefold()
        if key in seen:
            continue
        if key not in folded_chunk:
            logger.warning(
                "dropping ungrounded mention %r (not a substring of chunk %s/%d)",
                mention,
                chunk.doc_id,
                chunk.index,
            )
            continue
        seen.add(key)
        records.append(
            EntityRecord(
                doc_id=chunk.doc_id, chunk_index=chunk.index, mention=mention, task=task
            )
        )
    return records


def extract_document(
    doc: Document,
    *,
    index: SimilarityIndex,
    embedder,
    gateway: LlmGateway,
    task: Task,
    k: int = 5,
    chunking: ChunkingConfig | None = None,
) -> list[EntityRecord]:
    """Chunk a document and extract candidate entities from every chunk.

    Per-chunk failures are logged and skipped; the rest of the document still
    yields records.
    """
    records: list[EntityRecord] = []
    seen: set[tuple[str, int]] = set()
    for chunk in chunk_document(doc, chunking or ChunkingConfig()):
        try:
            candidate_set = retrieve_chunk_candidates(chunk, index, embedder, k)
            chunk_records = extract_entities(chunk, candidate_set, task, gateway)
        except OntomineError as exc:
            logger.warning("chunk %s/%d skipped: %s", doc.doc_id, chunk.index, exc)
            continue
        for record in chunk_records:
            key = (record.mention.casefold(), record.chunk_index)
            if key not in seen:
                seen.add(key)
                records.append(record)
    return records
