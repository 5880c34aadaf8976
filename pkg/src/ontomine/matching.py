"""Stage 3: assign ontology codes to verified entities and aggregate per document."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import OntomineError
from .extraction import Task, TrailStep
from .gateway import LlmGateway
from .ontology import Code, Namespace
from .retrieval import SimilarityIndex, top_k
from .verification import VerifiedOutcome

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchedAnnotation:
    doc_id: str
    mention: str
    final_term: str
    code: Code
    route: str
    score_of_chosen_candidate: float
    trail: tuple[TrailStep, ...] = ()


@dataclass
class MiningResult:
    doc_id: str
    phenotype_codes: set[Code] = field(default_factory=set)
    disease_codes: set[Code] = field(default_factory=set)
    annotations: list[MatchedAnnotation] = field(default_factory=list)


def match_entity(
    outcome: VerifiedOutcome,
    chunk_text: str,
    ontology_index: SimilarityIndex,
    gateway: LlmGateway,
    embedder,
    k: int = 5,
) -> MatchedAnnotation | None:
    """Match a verified entity's final term to one candidate code.

    A "no suitable match" answer or an out-of-candidate response yields None;
    callers keep such entities in the unmatched side-channel log instead of
    dropping them silently.
    """
    if not outcome.accepted:
        raise ValueError("only accepted outcomes can be matched")
    candidates = top_k(ontology_index, outcome.final_term, k, embedder)
    try:
        code = gateway.match_candidates(outcome.final_term, chunk_text, candidates)
    except OntomineError as exc:
        logger.warning("match failed for %r: %s", outcome.final_term, exc)
        outcome.entity.record("match", "error", str(exc))
        return None
    if code is None:
        outcome.entity.record("match", "none")
        return None
    expected = Namespace.HPO if outcome.entity.task is Task.PHENOTYPE else Namespace.ORPHA
    if code.namespace is not expected:
        raise OntomineError(
            f"matched {code} but task {outcome.entity.task.value} requires {expected.value} codes"
        )
    score = next(s.score for s in candidates if str(Code.parse(str(s.entry.payload))) == str(code))
    outcome.entity.record("match", str(code))
    return MatchedAnnotation(
        doc_id=outcome.entity.doc_id,
        mention=outcome.entity.mention,
        final_term=outcome.final_term,
        code=code,
        route=outcome.route.value,
        score_of_chosen_candidate=score,
        trail=tuple(outcome.entity.trail),
    )


def aggregate_document(annotations: list[MatchedAnnotation], doc_id: str | None = None) -> MiningResult:
    """Union annotation codes into per-document code sets, keeping all annotations."""
    if not annotations:
        if doc_id is None:
            raise ValueError("aggregate_document needs annotations or an explicit doc_id")
        return MiningResult(doc_id=doc_id)
    doc_ids = {a.doc_id for a in annotations}
    if len(doc_ids) > 1:
        raise ValueError(f"annotations span multiple documents: {sorted(doc_ids)}")
    result = MiningResult(doc_id=annotations[0].doc_id, annotations=list(annotations))
    for a in annotations:
        if a.code.namespace is Namespace.HPO:
            result.phenotype_codes.add(a.code)
        else:
            result.disease_codes.add(a.code)
    return result
