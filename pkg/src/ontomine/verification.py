"""Stage 2: the task-specific verification and implication state machine.

Disease entities go through abbreviation expansion, then a combined ontology
plus is-a-disease check.  Phenotype entities are verified directly, and when
that fails they get a second chance through lab-value interpretation or
context implication, each followed by a check that the implied phenotype
actually exists in the ontology.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import OntomineError
from .extraction import EntityRecord, EntityStatus, Task
from .gateway import LlmGateway
from .ontology import OntologyStore, contains_term
from .retrieval import SimilarityIndex, top_k

logger = logging.getLogger(__name__)


class Route(str, Enum):
    DIRECT = "direct"
    LAB_IMPLIED = "lab_implied"
    CONTEXT_IMPLIED = "context_implied"
    REJECTED = "rejected"


@dataclass(frozen=True)
class AbbreviationEntry:
    abbr: str
    expansions: tuple[str, ...]

    def __post_init__(self):
        if not self.abbr or not self.expansions:
            raise ValueError("abbreviation entries need an abbr and at least one expansion")


@dataclass(frozen=True)
class LabReferenceRange:
    test_name: str
    unit: str
    low: float
    high: float
    low_phenotype: str = ""
    high_phenotype: str = ""

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"range for {self.test_name!r} must have low < high")

    def phenotype_for(self, direction: str) -> str:
        return self.low_phenotype if direction == "low" else self.high_phenotype


@dataclass(frozen=True)
class VerifiedOutcome:
    entity: EntityRecord
    accepted: bool
    final_term: str
    route: Route

    def __post_init__(self):
        if self.accepted and self.route is Route.REJECTED:
            raise ValueError("accepted outcomes cannot carry the rejected route")
        if self.accepted and not self.final_term:
            raise ValueError("accepted outcomes need a final term")


def load_abbreviations(path: str | Path) -> list[AbbreviationEntry]:
    entries = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries.append(
                AbbreviationEntry(abbr=obj["abbr"], expansions=tuple(obj["expansions"]))
            )
    return entries


def load_lab_ranges(path: str | Path) -> list[LabReferenceRange]:
    ranges = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ranges.append(
                LabReferenceRange(
                    test_name=obj["test_name"],
                    unit=obj.get("unit", ""),
                    low=float(obj["low"]),
                    high=float(obj["high"]),
                    low_phenotype=obj.get("low_phenotype", ""),
                    high_phenotype=obj.get("high_phenotype", ""),
                )
            )
    return ranges


def abbreviation_index_items(entries: list[AbbreviationEntry]) -> list[tuple[str, dict]]:
    return [
        (e.abbr, {"abbr": e.abbr, "expansions": list(e.expansions)}) for e in entries
    ]


def lab_index_items(ranges: list[LabReferenceRange]) -> list[tuple[str, dict]]:
    return [
        (
            f"{r.test_name} {r.unit}".strip(),
            {
                "test_name": r.test_name,
                "unit": r.unit,
                "low": r.low,
                "high": r.high,
                "low_phenotype": r.low_phenotype,
                "high_phenotype": r.high_phenotype,
            },
        )
        for r in ranges
    ]


@dataclass
class VerifierDeps:
    """Read-only dependencies the state machine needs; shareable across workers."""

    gateway: LlmGateway
    embedder: object
    ontology_index: SimilarityIndex
    hpo_store: OntologyStore | None = None
    abbrev_index: SimilarityIndex | None = None
    lab_index: SimilarityIndex | None = None
    k: int = 5


def expand_abbreviation(
    entity: EntityRecord,
    chunk_text: str,
    abbrev_index: SimilarityIndex | None,
    gateway: LlmGateway,
    embedder,
    k: int = 5,
) -> EntityRecord:
    """Expand the mention when it exactly matches a retrieved abbreviation.

    Non-abbreviations pass through unchanged.  Gateway failures leave the
    entity unexpanded and logged rather than killing the pipeline.
    """
    if abbrev_index is None or not abbrev_index.entries:
        return entity
    candidates = top_k(abbrev_index, entity.mention, k, embedder)
    hit = next(
        (
            c
            for c in candidates
            if str(c.entry.payload["abbr"]).casefold() == entity.mention.casefold()
        ),
        None,
    )
    if hit is None:
        entity.record("abbrev.expand", "not_abbreviation")
        return entity
    expansions = [str(x) for x in hit.entry.payload["expansions"]]
    expansion = gateway.choose_expansion(entity.mention, chunk_text, expansions)
    entity.expansion = expansion
    entity.status = EntityStatus.EXPANDED
    entity.record("abbrev.expand", "expanded", expansion)
    return entity


def verify_direct(
    entity: EntityRecord,
    chunk_text: str,
    ontology_index: SimilarityIndex,
    gateway: LlmGateway,
    task: Task,
    embedder,
    k: int = 5,
) -> bool:
    """Direct ontology verification of the entity's current term, in context.

    For the disease task the term must pass both the ontology match and an
    is-a-disease check, because the rare-disease nomenclature also lists
    genes, proteins, and lab entities.
    """
    term = entity.current_term()
    candidates = top_k(ontology_index, term, k, embedder)
    template_id = "verify.direct" if task is Task.PHENOTYPE else "verify.disease"
    verified = gateway.judge(template_id, term, chunk_text, candidates)
    entity.record(template_id, "yes" if verified else "no")
    if not verified:
        return False
    if task is Task.DISEASE:
        is_disease = gateway.classify(term, chunk_text, "is disease")
        entity.record("disease.check", "yes" if is_disease else "no")
        if not is_disease:
            return False
    return True


def detect_lab_event(entity: EntityRecord, gateway: LlmGateway) -> bool:
    """Digit scan first; only entities containing numbers reach the classifier."""
    term = entity.current_term()
    if not any(ch.isdigit() for ch in term):
        return False
    try:
        is_lab = gateway.classify(term, "", "lab event")
    except OntomineError as exc:
        logger.warning("lab-event classification failed for %r: %s", term, exc)
        entity.record("lab.check", "error", str(exc))
        return False
    entity.record("lab.check", "yes" if is_lab else "no")
    return is_lab


def imply_from_lab(
    entity: EntityRecord,
    lab_index: SimilarityIndex | None,
    gateway: LlmGateway,
    embedder,
    k: int = 5,
) -> EntityRecord | None:
    """Interpret a lab event against reference ranges and imply a phenotype."""
    if lab_index is None or not lab_index.entries:
        logger.warning("no lab ranges available for %r", entity.mention)
        entity.record("lab.analysis", "no_ranges")
        return None
    term = entity.current_term()
    candidates = top_k(lab_index, term, k, embedder)
    ranges = [LabReferenceRange(**c.entry.payload) for c in candidates]
    judgment = gateway.reason_abnormal(term, ranges, "")
    entity.record("lab.analysis", judgment.verdict, judgment.range_name or "")
    if not judgment.is_abnormal:
        return None
    chosen = next(r for r in ranges if r.test_name == judgment.range_name)
    implied = chosen.phenotype_for(judgment.verdict)
    if not implied:
        implied = gateway.generate_implied(term, "", direction=judgment.verdict)
    entity.implied_phenotype = implied
    entity.status = EntityStatus.IMPLIED_LAB
    entity.record("imply.generate", implied, f"{judgment.verdict} {judgment.range_name}")
    return entity


def imply_from_context(
    entity: EntityRecord, chunk_text: str, gateway: LlmGateway
) -> EntityRecord | None:
    """When an entity is neither a phenotype nor a lab event, try implication."""
    term = entity.current_term()
    implies = gateway.classify(term, chunk_text, "implies phenotype")
    entity.record("imply.check", "yes" if implies else "no")
    if not implies:
        return None
    try:
        implied = gateway.generate_implied(term, chunk_text)
    except OntomineError as exc:
        logger.warning("implication generation failed for %r: %s", term, exc)
        entity.record("imply.generate", "error", str(exc))
        return None
    entity.implied_phenotype = implied
    entity.status = EntityStatus.IMPLIED_CONTEXT
    entity.record("imply.generate", implied)
    return entity


def verify_implied(
    entity: EntityRecord,
    hpo_store: OntologyStore | None,
    ontology_index: SimilarityIndex,
    gateway: LlmGateway,
    embedder,
    k: int = 5,
) -> bool:
    """Accept an implied phenotype if it is an ontology term, literally or by judgment."""
    term = entity.implied_phenotype or ""
    if hpo_store is not None and contains_term(hpo_store, term) is not None:
        entity.record("verify.implied", "yes", "exact ontology term")
        return True
    candidates = top_k(ontology_index, term, k, embedder)
    verified = gateway.judge("verify.implied", term, "", candidates)
    entity.record("verify.implied", "yes" if verified else "no")
    return verified


def verify_entity(
    entity: EntityRecord, chunk_text: str, task: Task, deps: VerifierDeps
) -> VerifiedOutcome:
    """Run the full task-specific pipeline for one unverified entity.

    Abbreviation expansion only runs for the disease task; lab interpretation
    and context implication only run for the phenotype task.  Any step error
    rejects the entity with the failure recorded on its trail.
    """
    try:
        if task is Task.DISEASE:
            expand_abbreviation(
                entity, chunk_text, deps.abbrev_index, deps.gateway, deps.embedder, deps.k
            )
            if verify_direct(
                entity, chunk_text, deps.ontology_index, deps.gateway, task, deps.embedder, deps.k
            ):
                return _accept(entity, Route.DIRECT, entity.current_term())
            return _reject(entity)

        if verify_direct(
            entity, chunk_text, deps.ontology_index, deps.gateway, task, deps.embedder, deps.k
        ):
            return _accept(entity, Route.DIRECT, entity.current_term())
        if detect_lab_event(entity, deps.gateway):
            implied = imply_from_lab(entity, deps.lab_index, deps.gateway, deps.embedder, deps.k)
            if implied is not None and verify_implied(
                implied, deps.hpo_store, deps.ontology_index, deps.gateway, deps.embedder, deps.k
            ):
                return _accept(implied, Route.LAB_IMPLIED, implied.implied_phenotype or "")
            return _reject(entity)
        implied = imply_from_context(entity, chunk_text, deps.gateway)
        if implied is not None and verify_implied(
            implied, deps.hpo_store, deps.ontology_index, deps.gateway, deps.embedder, deps.k
        ):
            return _accept(implied, Route.CONTEXT_IMPLIED, implied.implied_phenotype or "")
        return _reject(entity)
    except OntomineError as exc:
        logger.warning("verification of %r failed: %s", entity.mention, exc)
        entity.record("error", "rejected", str(exc))
        return _reject(entity)


def _accept(entity: EntityRecord, route: Route, final_term: str) -> VerifiedOutcome:
    entity.status = {
        Route.DIRECT: EntityStatus.VERIFIED_DIRECT,
        Route.LAB_IMPLIED: EntityStatus.IMPLIED_LAB,
        Route.CONTEXT_IMPLIED: EntityStatus.IMPLIED_CONTEXT,
    }[route]
    return VerifiedOutcome(entity=entity, accepted=True, final_term=final_term, route=route)


def _reject(entity: EntityRecord) -> VerifiedOutcome:
    entity.status = EntityStatus.REJECTED
    return VerifiedOutcome(
        entity=entity, accepted=False, final_term=entity.current_term(), route=Route.REJECTED
    )
