"""Wires configuration into the extract -> verify -> match run over a corpus."""

from __future__ import annotations

import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .config import RunConfig
from .corpus import ChunkingConfig, Document, chunk_document, load_corpus, sentence_spans
from .extraction import EntityRecord, Task, extract_document
from .gateway import (
    DecodingConfig,
    LlmGateway,
    PromptLibrary,
    RemoteChatBackend,
    ScriptedBackend,
    load_behavior,
    validate_behavior,
)
from .matching import MatchedAnnotation, MiningResult, aggregate_document, match_entity
from .ontology import Namespace, OntologyStore, load_ontology
from .retrieval import (
    HashingEmbedder,
    RemoteEmbedder,
    SimilarityIndex,
    build_index,
    load_index,
    ontology_index_items,
    save_index,
    top_k,
)
from .verification import (
    VerifierDeps,
    abbreviation_index_items,
    lab_index_items,
    load_abbreviations,
    load_lab_ranges,
    verify_entity,
)

logger = logging.getLogger(__name__)


@dataclass
class Runtime:
    """Everything a mining or refinement run needs, built once from config."""

    config: RunConfig
    task: Task
    store: OntologyStore
    embedder: object
    gateway: LlmGateway
    ontology_index: SimilarityIndex
    deps: VerifierDeps
    corpus: list[Document] = field(default_factory=list)


def make_embedder(config: RunConfig):
    emb = config.embedding
    if emb.provider == "hashing":
        return HashingEmbedder(dimension=emb.dimension)
    return RemoteEmbedder(
        endpoint=emb.endpoint,
        model=emb.model or "embedding",
        dimension=emb.dimension,
        retries=emb.retries,
    )


def make_gateway(config: RunConfig, hpo_store: OntologyStore | None = None) -> LlmGateway:
    library = PromptLibrary(config.resolve(config.paths.prompts))
    decoding = DecodingConfig(
        temperature=config.llm.temperature, max_tokens=config.llm.max_tokens
    )
    if config.llm.backend == "scripted":
        behavior = load_behavior(config.resolve(config.llm.behavior))
        if hpo_store is not None and hpo_store.kind is Namespace.HPO:
            validate_behavior(behavior, hpo_store)
        backend = ScriptedBackend(behavior)
    else:
        backend = RemoteChatBackend(
            endpoint=config.llm.endpoint,
            model=config.llm.model or "model",
            retries=config.llm.retries,
            max_in_flight=config.llm.max_in_flight,
        )
    return LlmGateway(library, backend, decoding)


def build_runtime(config: RunConfig, load_docs: bool = True) -> Runtime:
    task = Task(config.task)
    kind = Namespace.HPO if task is Task.PHENOTYPE else Namespace.ORPHA
    store = load_ontology(config.resolve(config.paths.ontology), kind)
    embedder = make_embedder(config)
    gateway = make_gateway(config, store if kind is Namespace.HPO else None)

    index_path = config.resolve(config.paths.index)
    if index_path is not None and index_path.exists():
        ontology_index = load_index(index_path)
    else:
        ontology_index = build_index(ontology_index_items(store), embedder)
        if index_path is not None:
            save_index(ontology_index, index_path)

    abbrev_index = None
    if task is Task.DISEASE and config.paths.abbreviations:
        entries = load_abbreviations(config.resolve(config.paths.abbreviations))
        if entries:
            abbrev_index = build_index(abbreviation_index_items(entries), embedder)
    lab_index = None
    if task is Task.PHENOTYPE and config.paths.lab_ranges:
        ranges = load_lab_ranges(config.resolve(config.paths.lab_ranges))
        if ranges:
            lab_index = build_index(lab_index_items(ranges), embedder)

    deps = VerifierDeps(
        gateway=gateway,
        embedder=embedder,
        ontology_index=ontology_index,
        hpo_store=store if kind is Namespace.HPO else None,
        abbrev_index=abbrev_index,
        lab_index=lab_index,
        k=config.retrieval_k,
    )
    corpus = load_corpus(config.resolve(config.paths.corpus)) if load_docs else []
    return Runtime(
        config=config,
        task=task,
        store=store,
        embedder=embedder,
        gateway=gateway,
        ontology_index=ontology_index,
        deps=deps,
        corpus=corpus,
    )


@dataclass
class DocumentOutcome:
    doc_id: str
    result: MiningResult
    entities: list[EntityRecord]
    unmatched: list[dict]


def mine_document(runtime: Runtime, doc: Document) -> DocumentOutcome:
    """Extract, verify, and match one document."""
    config = runtime.config
    chunking = ChunkingConfig(mode=config.chunking.mode, min_size=config.chunking.min_size)
    chunks = {c.index: c for c in chunk_document(doc, chunking)}
    records = extract_document(
        doc,
        index=runtime.ontology_index,
        embedder=runtime.embedder,
        gateway=runtime.gateway,
        task=runtime.task,
        k=config.retrieval_k,
        chunking=chunking,
    )
    annotations: list[MatchedAnnotation] = []
    unmatched: list[dict] = []
    for record in records:
        chunk_text = chunks[record.chunk_index].text
        outcome = verify_entity(record, chunk_text, runtime.task, runtime.deps)
        if not outcome.accepted:
            continue
        annotation = match_entity(
            outcome,
            chunk_text,
            runtime.ontology_index,
            runtime.gateway,
            runtime.embedder,
            config.retrieval_k,
        )
        if annotation is None:
            unmatched.append(
                {
                    "doc_id": doc.doc_id,
                    "mention": record.mention,
                    "term": outcome.final_term,
                    "route": outcome.route.value,
                    "reason": "no suitable candidate",
                }
            )
        else:
            annotations.append(annotation)
    result = aggregate_document(annotations, doc_id=doc.doc_id)
    return DocumentOutcome(
        doc_id=doc.doc_id, result=result, entities=records, unmatched=unmatched
    )


def mine_corpus(
    runtime: Runtime, progress: Callable[[str], None] | None = None
) -> list[DocumentOutcome]:
    """Mine every document, in parallel when configured, in stable corpus order."""
    docs = runtime.corpus
    outcomes: dict[str, DocumentOutcome] = {}
    workers = runtime.config.workers
    if workers <= 1:
        iterator: Iterable[DocumentOutcome] = (mine_document(runtime, d) for d in docs)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        iterator = pool.map(lambda d: mine_document(runtime, d), docs)
    done = 0
    accepted_total = 0
    entity_total = 0
    for outcome in iterator:
        outcomes[outcome.doc_id] = outcome
        done += 1
        entity_total += len(outcome.entities)
        accepted_total += len(outcome.result.annotations)
        if progress:
            progress(
                f"[{done}/{len(docs)}] {outcome.doc_id}: "
                f"entities={entity_total} accepted={accepted_total}"
            )
    if workers > 1:
        pool.shutdown()
    return [outcomes[d.doc_id] for d in docs]


def annotation_to_json(a: MatchedAnnotation) -> dict:
    return {
        "doc_id": a.doc_id,
        "mention": a.mention,
        "term": a.final_term,
        "code": str(a.code),
        "route": a.route,
        "trail": [
            {"step": t.step, "verdict": t.verdict, "evidence": t.evidence} for t in a.trail
        ],
    }


def write_atomic(path: str | Path, lines: Iterable[str]) -> None:
    """Write a text file via a temp file and rename, so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_annotations(outcomes: list[DocumentOutcome], path: str | Path) -> None:
    write_atomic(
        path,
        (
            json.dumps(annotation_to_json(a), ensure_ascii=False) + "\n"
            for outcome in outcomes
            for a in outcome.result.annotations
        ),
    )


def write_unmatched(outcomes: list[DocumentOutcome], path: str | Path) -> None:
    write_atomic(
        path,
        (
            json.dumps(row, ensure_ascii=False) + "\n"
            for outcome in outcomes
            for row in outcome.unmatched
        ),
    )


def write_entity_dump(outcomes: list[DocumentOutcome], path: str | Path) -> None:
    def rows():
        for outcome in outcomes:
            for e in outcome.entities:
                yield json.dumps(
                    {
                        "doc_id": e.doc_id,
                        "chunk_index": e.chunk_index,
                        "mention": e.mention,
                        "task": e.task.value,
                        "status": e.status.value,
                        "expansion": e.expansion,
                        "implied_phenotype": e.implied_phenotype,
                        "trail": [
                            {"step": t.step, "verdict": t.verdict, "evidence": t.evidence}
                            for t in e.trail
                        ],
                    },
                    ensure_ascii=False,
                ) + "\n"

    write_atomic(path, rows())


def context_sentence(doc: Document, mention: str) -> str:
    """The first sentence of the document containing the mention, or ""."""
    folded = mention.casefold()
    for start, end in sentence_spans(doc.text):
        if folded in doc.text[start:end].casefold():
            return doc.text[start:end]
    return ""


def make_refinement_hooks(runtime: Runtime):
    """(verdict_fn, context_fn, candidates_fn) closing over a built runtime."""
    docs = {d.doc_id: d for d in runtime.corpus}

    def context_fn(doc_id: str, mention: str) -> str:
        doc = docs.get(doc_id)
        return context_sentence(doc, mention) if doc else ""

    def verdict_fn(doc_id, mention, code, category) -> bool:
        record = EntityRecord(
            doc_id=doc_id, chunk_index=0, mention=mention, task=runtime.task
        )
        outcome = verify_entity(record, context_fn(doc_id, mention), runtime.task, runtime.deps)
        return outcome.accepted

    def candidates_fn(mention: str) -> list[dict]:
        found = top_k(
            runtime.ontology_index, mention, runtime.config.retrieval_k, runtime.embedder
        )
        return [
            {"label": c.entry.key, "code": str(c.entry.payload), "score": c.score}
            for c in found
        ]

    return verdict_fn, context_fn, candidates_fn


def stream_progress(line: str) -> None:
    print(line, file=sys.stderr, flush=True)
