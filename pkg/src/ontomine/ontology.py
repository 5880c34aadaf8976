"""HPO and Orphanet term stores: code parsing, JSONL ingestion, label lookup.

The two stores define the label spaces the mining pipeline maps text into:
phenotype runs resolve against an HPO store, rare-disease runs against an
Orphanet store.  Stores are immutable after load and safe to share across
threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import OntomineError


class Namespace(str, Enum):
    HPO = "HPO"
    ORPHA = "ORPHA"


class OntologyFormatError(OntomineError):
    """A code string does not parse into a known namespace."""


class OntologyLoadError(OntomineError):
    """An ontology JSONL file is malformed.

    Carries the 1-based line number when the problem is tied to a line.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateCodeError(OntologyLoadError):
    """The same code appears on more than one line of an ontology file."""


_CODE_RE = re.compile(r"^\s*(hp|orpha|orphanet)\s*[:_]\s*(\d+)\s*$", re.IGNORECASE)


@dataclass(frozen=True, order=True)
class Code:
    """An ontology code: HP:NNNNNNN (zero-padded) or ORPHA:N (unpadded)."""

    namespace: Namespace
    numeric_id: int

    def __post_init__(self):
        if self.numeric_id < 0:
            raise OntologyFormatError(f"negative numeric id: {self.numeric_id}")

    def __str__(self) -> str:
        if self.namespace is Namespace.HPO:
            return f"HP:{self.numeric_id:07d}"
        return f"ORPHA:{self.numeric_id}"

    @classmethod
    def parse(cls, raw: str) -> "Code":
        m = _CODE_RE.match(raw or "")
        if not m:
            raise OntologyFormatError(f"unparseable ontology code: {raw!r}")
        prefix = m.group(1).lower()
        namespace = Namespace.HPO if prefix == "hp" else Namespace.ORPHA
        return cls(namespace, int(m.group(2)))


def normalize_code(raw: str) -> Code:
    """Parse any accepted spelling ("hp_123", "Orphanet_79501", ...) to canonical form."""
    return Code.parse(raw)


@dataclass(frozen=True)
class OntologyRecord:
    """One HPO or Orphanet entry.

    ``is_disease`` only carries meaning for Orphanet records, which include
    non-disease entities such as genes and lab analytes; HPO entries are
    always usable as phenotype targets.
    """

    code: Code
    label: str
    synonyms: tuple[str, ...] = ()
    definition: str | None = None
    is_disease: bool = True

    def terms(self) -> tuple[str, ...]:
        return (self.label,) + self.synonyms


@dataclass
class OntologyStore:
    """Code-keyed record collection with a case-folded label/synonym index."""

    kind: Namespace
    records: dict[Code, OntologyRecord] = field(default_factory=dict)
    label_index: dict[str, list[Code]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: OntologyRecord) -> None:
        if record.code in self.records:
            raise DuplicateCodeError(f"duplicate code {record.code}")
        if record.code.namespace is not self.kind:
            raise OntologyLoadError(
                f"code {record.code} does not belong to a {self.kind.value} store"
            )
        self.records[record.code] = record
        for term in record.terms():
            codes = self.label_index.setdefault(term.casefold(), [])
            if record.code not in codes:
                codes.append(record.code)
                codes.sort(key=lambda c: c.numeric_id)

    def lookup(self, code: Code | str) -> OntologyRecord | None:
        if isinstance(code, str):
            code = Code.parse(code)
        return self.records.get(code)


def _dedupe_synonyms(label: str, synonyms: list[str]) -> tuple[str, ...]:
    seen = {label.casefold()}
    out = []
    for s in synonyms:
        key = s.casefold()
        if key and key not in seen:
            seen.add(key)
            out.append(s)
    return tuple(out)


def load_ontology(path: str | Path, kind: Namespace | str) -> OntologyStore:
    """Load an ontology JSONL file into a store.

    Each line is an object with "code", "label", optional "synonyms",
    "definition" and "is_disease" fields.  Duplicate codes and blank files
    are rejected.
    """
    kind = Namespace(kind)
    store = OntologyStore(kind=kind)
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise OntologyLoadError(f"invalid JSON: {exc}", line=line_no) from exc
            try:
                code = Code.parse(obj["code"])
                label = obj["label"]
            except KeyError as exc:
                raise OntologyLoadError(f"missing field {exc}", line=line_no) from exc
            except OntologyFormatError as exc:
                raise OntologyLoadError(str(exc), line=line_no) from exc
            if not isinstance(label, str) or not label.strip():
                raise OntologyLoadError("empty label", line=line_no)
            record = OntologyRecord(
                code=code,
                label=label,
                synonyms=_dedupe_synonyms(label, list(obj.get("synonyms") or [])),
                definition=obj.get("definition"),
                is_disease=bool(obj.get("is_disease", kind is Namespace.ORPHA)),
            )
            try:
                store.add(record)
            except DuplicateCodeError as exc:
                raise DuplicateCodeError(str(exc), line=line_no) from None
    if not store.records:
        raise OntologyLoadError(f"no records found in {path}")
    return store


def contains_term(store: OntologyStore, term: str) -> Code | None:
    """Exact case-folded label/synonym membership; ties go to the lowest numeric id."""
    if not term:
        return None
    codes = store.label_index.get(term.strip().casefold())
    return codes[0] if codes else None
