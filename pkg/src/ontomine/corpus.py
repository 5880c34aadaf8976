"""Documents, annotations, and sentence-level chunking with optional agglomeration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import OntomineError
from .ontology import Code, OntologyFormatError

_TERMINATORS = ".!?"


class CorpusLoadError(OntomineError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str

    @property
    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class ChunkingConfig:
    mode: str = "sentence"
    min_size: int | None = None  # characters; merging is a no-op unless > 0


@dataclass(frozen=True)
class AnnotationEntry:
    doc_id: str
    mention: str
    code: Code
    context: str | None = None

    def key(self) -> tuple[str, str, Code]:
        return (self.doc_id, self.mention, self.code)


@dataclass
class AnnotationSet:
    """Deduplicated (doc_id, mention, code) triples with optional context snippets."""

    entries: list[AnnotationEntry] = field(default_factory=list)
    _seen: set[tuple[str, str, Code]] = field(default_factory=set, repr=False)

    def add(self, entry: AnnotationEntry) -> bool:
        if entry.key() in self._seen:
            return False
        self._seen.add(entry.key())
        self.entries.append(entry)
        return True

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_doc(self) -> dict[str, list[AnnotationEntry]]:
        out: dict[str, list[AnnotationEntry]] = {}
        for e in self.entries:
            out.setdefault(e.doc_id, []).append(e)
        return out


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Half-open [start, end) spans of the sentences in ``text``.

    A sentence ends at a run of ".", "!" or "?" followed by whitespace, or at
    a newline run, or at end of text.  A terminator followed by a digit after
    the whitespace does not split, so decimal values like "Hb 6.2 g/dL" stay
    intact.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0

    def emit(end: int) -> None:
        nonlocal start
        raw = text[start:end]
        stripped = raw.strip()
        if stripped:
            lead = len(raw) - len(raw.lstrip())
            spans.append((start + lead, start + lead + len(stripped)))

    while i < n:
        ch = text[i]
        if ch in _TERMINATORS:
            j = i + 1
            while j < n and text[j] in _TERMINATORS:
                j += 1
            if j >= n:
                emit(j)
                start = j
                i = j
                continue
            if text[j].isspace():
                k = j
                while k < n and text[k].isspace():
                    k += 1
                if k >= n or not text[k].isdigit():
                    emit(j)
                    start = k
                    i = k
                    continue
            i = j
        elif ch == "\n":
            emit(i)
            k = i
            while k < n and text[k].isspace():
                k += 1
            start = k
            i = k
        else:
            i += 1
    if start < n:
        emit(n)
    return spans


def segment(doc: Document) -> list[Chunk]:
    """Split a document into sentence chunks with character offsets."""
    return [
        Chunk(doc_id=doc.doc_id, index=idx, text=doc.text[s:e], char_start=s, char_end=e)
        for idx, (s, e) in enumerate(sentence_spans(doc.text))
    ]


def merge_small_sentences(sentences: list[str], min_size: int | None) -> list[str]:
    """Greedily absorb successors into sentences shorter than ``min_size`` characters.

    A sentence at or above the threshold passes through unchanged; a shorter
    one keeps appending following sentences (single-space joined when both
    parts are non-empty) until it reaches the threshold or input runs out.
    """
    if not sentences:
        return []
    if min_size is None or min_size <= 0:
        return list(sentences)
    merged: list[str] = []
    current_idx = 0
    while current_idx < len(sentences):
        current = sentences[current_idx]
        if len(current) >= min_size:
            merged.append(current)
            current_idx += 1
            continue
        chunk = current
        next_idx = current_idx + 1
        while next_idx < len(sentences) and len(chunk) < min_size:
            if chunk and sentences[next_idx]:
                chunk = chunk + " " + sentences[next_idx]
            else:
                chunk = chunk + sentences[next_idx]
            next_idx += 1
        merged.append(chunk)
        current_idx = next_idx
    return merged


def chunk_document(doc: Document, config: ChunkingConfig) -> list[Chunk]:
    """Segment a document and, when configured, agglomerate small sentences.

    Merged chunk text joins constituents with single spaces; offsets span
    from the first constituent's start to the last one's end.
    """
    chunks = segment(doc)
    if config.min_size is None or config.min_size <= 0 or not chunks:
        return chunks
    min_size = config.min_size
    merged: list[Chunk] = []
    current_idx = 0
    while current_idx < len(chunks):
        current = chunks[current_idx]
        if len(current.text) >= min_size:
            merged.append(
                Chunk(doc.doc_id, len(merged), current.text, current.char_start, current.char_end)
            )
            current_idx += 1
            continue
        text = current.text
        end = current.char_end
        next_idx = current_idx + 1
        while next_idx < len(chunks) and len(text) < min_size:
            nxt = chunks[next_idx]
            text = text + " " + nxt.text if text and nxt.text else text + nxt.text
            end = nxt.char_end
            next_idx += 1
        merged.append(Chunk(doc.doc_id, len(merged), text, current.char_start, end))
        current_idx = next_idx
    return merged


def load_corpus(path: str | Path) -> list[Document]:
    """Load a corpus JSONL file: one {"doc_id", "text"} object per line."""
    docs: list[Document] = []
    seen: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                doc = Document(doc_id=obj["doc_id"], text=obj["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusLoadError(f"bad document record: {exc}", line=line_no) from exc
            if doc.doc_id in seen:
                raise CorpusLoadError(f"duplicate doc_id {doc.doc_id!r}", line=line_no)
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def load_annotations(path: str | Path) -> AnnotationSet:
    """Load an annotations JSONL file, normalizing codes to canonical form."""
    out = AnnotationSet()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entry = AnnotationEntry(
                    doc_id=obj["doc_id"],
                    mention=obj["mention"],
                    code=Code.parse(obj["code"]),
                    context=obj.get("context"),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusLoadError(f"bad annotation record: {exc}", line=line_no) from exc
            except OntologyFormatError as exc:
                raise CorpusLoadError(str(exc), line=line_no) from exc
            out.add(entry)
    return out


def save_annotations(annotations: AnnotationSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in annotations:
            obj = {"doc_id": e.doc_id, "mention": e.mention, "code": str(e.code)}
            if e.context is not None:
                obj["context"] = e.context
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
