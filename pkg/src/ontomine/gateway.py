"""The single seam through which every reasoning step talks to a language model.

Two interchangeable backends sit behind one request shape:

* ``RemoteChatBackend`` speaks the chat wire protocol to a local or hosted
  inference server.
* ``ScriptedBackend`` is a deterministic stand-in driven by gazetteers and
  maps, so the whole pipeline can be exercised bit-exactly in tests.

Prompt bodies live in template files (``prompts/``), one per reasoning step,
with the named placeholders {entity}, {context}, {candidates} and {ranges}.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Sequence

import requests

from .errors import OntomineError, TransportError
from .ontology import Code, OntologyFormatError, contains_term
from .retrieval import Candidate

if TYPE_CHECKING:  # pragma: no cover
    from .ontology import OntologyStore
    from .verification import LabReferenceRange

TEMPLATE_IDS = (
    "extract.phenotype",
    "extract.disease",
    "abbrev.expand",
    "verify.direct",
    "verify.disease",
    "disease.check",
    "lab.check",
    "lab.analysis",
    "imply.check",
    "imply.generate",
    "imply.validate",
    "verify.implied",
    "match.final",
    "match.disease",
)

_NEGATION_CUES = ("negative", "no evidence of", "denies", "denied", "ruled out")
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class TemplateError(OntomineError):
    pass


class ClassificationParseError(OntomineError):
    """The model did not answer a strict YES/NO question; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}: {raw!r}")
        self.raw = raw


class GenerationError(OntomineError):
    pass


class MatchParseError(OntomineError):
    pass


class OutOfCandidateError(OntomineError):
    """The model named a code that was not among the offered candidates."""


class TruncationError(OntomineError):
    pass


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float = 0.0
    max_tokens: int = 256
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system: str
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER_RE.findall(self.system + self.body))

    def render(self, bindings: dict[str, str]) -> tuple[str, str]:
        missing = self.placeholders - set(bindings)
        if missing:
            raise TemplateError(f"template {self.id}: unfilled placeholders {sorted(missing)}")

        def fill(text: str) -> str:
            return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], text)

        return fill(self.system), fill(self.body)


class PromptLibrary:
    """Loads the prompt set from a directory of ``<id>.txt`` files.

    A file may start with a system-message block separated from the user body
    by a line containing only ``---``; otherwise the whole file is the user
    body.
    """

    def __init__(self, directory: str | Path | None = None):
        directory = Path(directory) if directory else Path(__file__).parent / "prompts"
        self.templates: dict[str, PromptTemplate] = {}
        for path in sorted(directory.glob("*.txt")):
            template_id = path.name[: -len(".txt")]
            text = path.read_text(encoding="utf-8")
            if "\n---\n" in text:
                system, body = text.split("\n---\n", 1)
            else:
                system, body = "", text
            self.templates[template_id] = PromptTemplate(
                id=template_id, system=system.strip(), body=body.strip()
            )
        missing = set(TEMPLATE_IDS) - set(self.templates)
        if missing:
            raise TemplateError(f"prompt directory {directory} is missing {sorted(missing)}")

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise TemplateError(f"unknown template id {template_id!r}") from None


@dataclass(frozen=True)
class LabPattern:
    test_name: str
    directions: dict[str, str]  # "low"/"high" -> phenotype term


@dataclass
class ScriptedBehavior:
    """Deterministic stand-in knowledge for the scripted backend.

    ``abbreviation_map`` keys are trigger terms: the abbreviation itself, or a
    context cue word whose presence selects a particular expansion (for
    example an insulin cue selecting the insulin reading of an ambiguous
    abbreviation).
    """

    phenotype_gazetteer: tuple[str, ...] = ()
    disease_gazetteer: tuple[str, ...] = ()
    abbreviation_map: dict[str, str] = field(default_factory=dict)
    lab_patterns: tuple[LabPattern, ...] = ()
    implication_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.phenotype_gazetteer = tuple(t.casefold() for t in self.phenotype_gazetteer)
        self.disease_gazetteer = tuple(t.casefold() for t in self.disease_gazetteer)
        self.abbreviation_map = {k.casefold(): v for k, v in self.abbreviation_map.items()}
        self.implication_map = {k.casefold(): v for k, v in self.implication_map.items()}


def load_behavior(path: str | Path) -> ScriptedBehavior:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    patterns = []
    for row in obj.get("lab_patterns", []):
        directions = {d: row[d] for d in ("low", "high") if row.get(d)}
        patterns.append(LabPattern(test_name=row["test_name"].casefold(), directions=directions))
    return ScriptedBehavior(
        phenotype_gazetteer=tuple(obj.get("phenotype_gazetteer", [])),
        disease_gazetteer=tuple(obj.get("disease_gazetteer", [])),
        abbreviation_map=dict(obj.get("abbreviation_map", {})),
        lab_patterns=tuple(patterns),
        implication_map=dict(obj.get("implication_map", {})),
    )


def validate_behavior(behavior: ScriptedBehavior, hpo_store: "OntologyStore") -> None:
    """Every phenotype term the behavior can emit must exist in the HPO store."""
    missing = []
    for term in behavior.implication_map.values():
        if contains_term(hpo_store, term) is None:
            missing.append(term)
    for pattern in behavior.lab_patterns:
        for term in pattern.directions.values():
            if contains_term(hpo_store, term) is None:
                missing.append(term)
    if missing:
        raise ValueError(f"scripted behavior maps to terms absent from the HPO store: {missing}")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.casefold()))


def format_candidates(candidates: Sequence[Candidate]) -> str:
    """Render retrieval candidates one per line as ``KEY (PAYLOAD)``."""
    return "\n".join(f"{c.entry.key} ({c.entry.payload})" for c in candidates)


def format_ranges(ranges: Sequence["LabReferenceRange"]) -> str:
    return "\n".join(
        f"{r.test_name} ({r.unit}): low {r.low}, high {r.high}" for r in ranges
    )


def best_matching_range(
    entity: str, ranges: Sequence["LabReferenceRange"]
) -> "LabReferenceRange":
    """The range whose test name shares the most tokens with the entity; ties keep order."""
    entity_tokens = _tokens(entity)
    best = ranges[0]
    best_overlap = -1
    for r in ranges:
        overlap = len(entity_tokens & _tokens(r.test_name))
        if overlap > best_overlap:
            best, best_overlap = r, overlap
    return best


def _contains_negation(context: str) -> bool:
    folded = context.casefold()
    return any(cue in folded for cue in _NEGATION_CUES)


def _matches_lab_pattern(term: str, test_name: str) -> bool:
    # boundary-aware, so the hemoglobin pattern does not fire inside methemoglobinemia
    return re.search(rf"(?<![a-z0-9]){re.escape(test_name)}(?![a-z0-9])", term.casefold()) is not None


class ScriptedBackend:
    """Deterministic responder dispatching on template id.

    Stateless and reentrant; with temperature 0 its answers are a pure
    function of (template id, bindings).
    """

    kind = "scripted"

    def __init__(self, behavior: ScriptedBehavior):
        self.behavior = behavior

    def complete(self, template_id: str, bindings: dict[str, Any], decoding: DecodingConfig) -> str:
        entity = str(bindings.get("entity", ""))
        context = str(bindings.get("context", ""))
        handler = getattr(self, "_" + template_id.replace(".", "_"), None)
        if handler is None:
            raise TemplateError(f"scripted backend has no behavior for template {template_id!r}")
        return handler(entity, context, bindings)

    # -- extraction ---------------------------------------------------------

    def _extract(self, gazetteer: tuple[str, ...], context: str) -> str:
        folded = context.casefold()
        found: list[tuple[int, str]] = []
        for term in gazetteer:
            # word-boundary occurrence, so "hit" never fires inside "white"
            match = re.search(rf"(?<![a-z0-9]){re.escape(term)}(?![a-z0-9])", folded)
            if match:
                pos = match.start()
                found.append((pos, context[pos : pos + len(term)]))
        if not found:
            return "NONE"
        found.sort(key=lambda item: (item[0], item[1].casefold()))
        return "\n".join(span for _, span in found)

    def _extract_phenotype(self, entity, context, bindings):
        return self._extract(self.behavior.phenotype_gazetteer, context)

    def _extract_disease(self, entity, context, bindings):
        return self._extract(self.behavior.disease_gazetteer, context)

    # -- abbreviation expansion ---------------------------------------------

    def _abbrev_expand(self, entity, context, bindings):
        expansions = [str(x) for x in bindings.get("candidates", [])]
        folded_expansions = [x.casefold() for x in expansions]
        folded_context = context.casefold()
        for key, expansion in self.behavior.abbreviation_map.items():
            if key == entity.casefold():
                continue
            if key in folded_context and expansion.casefold() in folded_expansions:
                return expansion
        mapped = self.behavior.abbreviation_map.get(entity.casefold())
        if mapped and mapped.casefold() in folded_expansions:
            return mapped
        return expansions[0] if expansions else ""

    # -- verification -------------------------------------------------------

    def _verify_direct(self, entity, context, bindings):
        if _contains_negation(context):
            return "NO"
        term = entity.casefold()
        if any(ch.isdigit() for ch in term):
            return "NO"  # raw measurements are not phenotypes
        if term in self.behavior.implication_map:
            return "NO"  # implies one rather than naming one
        return "YES" if term in self.behavior.phenotype_gazetteer else "NO"

    def _verify_disease(self, entity, context, bindings):
        if _contains_negation(context):
            return "NO"
        return "YES" if entity.casefold() in self.behavior.disease_gazetteer else "NO"

    def _disease_check(self, entity, context, bindings):
        term = entity.casefold()
        if any(_matches_lab_pattern(term, p.test_name) for p in self.behavior.lab_patterns):
            return "NO"  # lab analytes and similar non-disease entries
        return "YES" if term in self.behavior.disease_gazetteer else "NO"

    def _verify_implied(self, entity, context, bindings):
        return "YES" if entity.casefold() in self.behavior.phenotype_gazetteer else "NO"

    # -- lab reasoning ------------------------------------------------------

    def _lab_check(self, entity, context, bindings):
        return (
            "YES"
            if any(_matches_lab_pattern(entity, p.test_name) for p in self.behavior.lab_patterns)
            else "NO"
        )

    def _lab_analysis(self, entity, context, bindings):
        ranges = bindings.get("ranges") or []
        match = _NUMBER_RE.search(entity)
        if not match or not ranges:
            return "INDETERMINATE"
        value = float(match.group(0))
        chosen = best_matching_range(entity, ranges)
        if value < chosen.low:
            return "LOW"
        if value > chosen.high:
            return "HIGH"
        return "NORMAL"

    # -- implication --------------------------------------------------------

    def _imply_check(self, entity, context, bindings):
        return "YES" if entity.casefold() in self.behavior.implication_map else "NO"

    def _imply_generate(self, entity, context, bindings):
        direction = bindings.get("direction")
        if direction:
            for pattern in self.behavior.lab_patterns:
                if _matches_lab_pattern(entity, pattern.test_name) and direction in pattern.directions:
                    return pattern.directions[direction]
            return ""
        return self.behavior.implication_map.get(entity.casefold(), "")

    def _imply_validate(self, entity, context, bindings):
        proposed = str(bindings.get("candidates", ""))
        return "YES" if proposed.casefold() in self.behavior.phenotype_gazetteer else "NO"

    # -- matching -----------------------------------------------------------

    def _match(self, entity, bindings):
        entity_tokens = _tokens(entity)
        best_payload = None
        best_overlap = 0
        for cand in bindings.get("candidates", []):
            overlap = len(entity_tokens & _tokens(cand.entry.key))
            if overlap > best_overlap:
                best_overlap = overlap
                best_payload = cand.entry.payload
        return str(best_payload) if best_payload is not None else "NONE"

    def _match_final(self, entity, context, bindings):
        return self._match(entity, bindings)

    def _match_disease(self, entity, context, bindings):
        return self._match(entity, bindings)


class RemoteChatBackend:
    """Chat-protocol client with retries, backoff, and a bounded in-flight cap."""

    kind = "remote_chat"

    def __init__(
        self,
        endpoint: str,
        model: str,
        retries: int = 3,
        max_in_flight: int = 4,
        timeout: float = 120.0,
        backoff_base: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.retries = retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self._slots = threading.Semaphore(max_in_flight)

    def complete(self, template_id: str, bindings: dict[str, Any], decoding: DecodingConfig) -> str:
        system = str(bindings["_system"])
        user = str(bindings["_user"])
        body: dict[str, Any] = {
            "model": self.model,
            "messages": (
                [{"role": "system", "content": system}] if system else []
            )
            + [{"role": "user", "content": user}],
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        }
        if decoding.stop:
            body["stop"] = list(decoding.stop)
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                with self._slots:
                    resp = requests.post(self.endpoint, json=body, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise TransportError(f"server error {resp.status_code}")
                resp.raise_for_status()
                choice = resp.json()["choices"][0]
                if choice.get("finish_reason") == "length":
                    raise TruncationError(
                        f"completion for {template_id} was truncated at {decoding.max_tokens} tokens"
                    )
                return choice["message"]["content"]
            except TruncationError:
                raise
            except (requests.RequestException, TransportError, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.retries - 1 and self.backoff_base > 0:
                    time.sleep(self.backoff_base * (2**attempt))
        raise TransportError(
            f"chat request for {template_id} failed after {self.retries} attempts: {last_error}"
        )


@dataclass(frozen=True)
class AbnormalityJudgment:
    verdict: str  # "low" | "high" | "normal" | "indeterminate"
    range_name: str | None = None
    reason: str = ""

    @property
    def is_abnormal(self) -> bool:
        return self.verdict in ("low", "high")


class LlmGateway:
    """Typed operations over a prompt library and a backend."""

    def __init__(self, library: PromptLibrary, backend, decoding: DecodingConfig | None = None):
        self.library = library
        self.backend = backend
        self.decoding = decoding or DecodingConfig()

    def complete(
        self,
        template_id: str,
        bindings: dict[str, Any],
        decoding: DecodingConfig | None = None,
    ) -> str:
        """Render a template and run it through the backend, returning raw text.

        Bindings may hold structured values (candidate lists, range lists);
        they are stringified for rendering while the scripted backend sees
        them as-is.
        """
        template = self.library.get(template_id)
        rendered = {name: _stringify(bindings.get(name)) for name in template.placeholders}
        system, user = template.render(rendered)
        call_bindings = dict(bindings)
        call_bindings["_system"] = system
        call_bindings["_user"] = user
        return self.backend.complete(template_id, call_bindings, decoding or self.decoding)

    def judge(
        self,
        template_id: str,
        entity: str,
        context: str,
        candidates: Sequence[Candidate] | str = "",
    ) -> bool:
        """Strict yes/no judgment for the verification templates."""
        raw = self.complete(
            template_id, {"entity": entity, "context": context, "candidates": candidates}
        )
        return _parse_yes_no(raw)

    def classify(self, entity: str, context: str, question_kind: str) -> bool:
        """Binary classification (Yes/No) for a named question kind.

        An unparseable answer raises instead of defaulting to NO; callers must
        treat that as "entity skipped, logged".
        """
        if not entity:
            raise ValueError("entity must be non-empty")
        template_id = {
            "lab event": "lab.check",
            "implies phenotype": "imply.check",
            "is disease": "disease.check",
        }.get(question_kind)
        if template_id is None:
            raise ValueError(f"unknown question kind {question_kind!r}")
        raw = self.complete(template_id, {"entity": entity, "context": context})
        return _parse_yes_no(raw)

    def reason_abnormal(
        self,
        entity: str,
        ranges: Sequence["LabReferenceRange"],
        context: str = "",
    ) -> AbnormalityJudgment:
        """Judge a lab value against retrieved reference ranges."""
        if not ranges:
            raise ValueError("reason_abnormal requires at least one reference range")
        if not _NUMBER_RE.search(entity):
            return AbnormalityJudgment("indeterminate", None, "no numeric value in entity")
        raw = self.complete(
            template_id="lab.analysis",
            bindings={"entity": entity, "context": context, "ranges": ranges},
        )
        match = re.match(r"\s*([A-Za-z]+)", raw or "")
        verdict = match.group(1).lower() if match else ""
        if verdict not in ("low", "high", "normal", "indeterminate"):
            raise ClassificationParseError("unparseable abnormality judgment", raw)
        chosen = best_matching_range(entity, ranges)
        return AbnormalityJudgment(verdict, chosen.test_name, f"compared against {chosen.test_name}")

    def generate_implied(self, entity: str, context: str, direction: str | None = None) -> str:
        """Produce a short implied-phenotype phrase for an entity."""
        bindings: dict[str, Any] = {"entity": entity, "context": context}
        if direction:
            bindings["direction"] = direction
        raw = self.complete("imply.generate", bindings)
        phrase = (raw or "").strip().splitlines()[0].strip() if (raw or "").strip() else ""
        if not phrase:
            raise GenerationError(f"empty implied-phenotype generation for {entity!r}")
        return phrase

    def choose_expansion(self, entity: str, context: str, expansions: Sequence[str]) -> str:
        """Pick the contextually correct expansion for an abbreviation."""
        if not expansions:
            raise GenerationError(f"no expansions offered for {entity!r}")
        raw = self.complete(
            "abbrev.expand", {"entity": entity, "context": context, "candidates": list(expansions)}
        )
        answer = (raw or "").strip().splitlines()[0].strip() if (raw or "").strip() else ""
        for expansion in expansions:
            if expansion.casefold() == answer.casefold():
                return expansion
        raise GenerationError(
            f"expansion {answer!r} for {entity!r} is not among the offered candidates"
        )

    def match_candidates(
        self, entity: str, context: str, candidates: Sequence[Candidate]
    ) -> Code | None:
        """Ground an entity to exactly one retrieved candidate code, or none.

        The backend must name a code from the candidate list; anything else is
        an out-of-candidate error so hallucinated codes never reach output.
        """
        if not candidates:
            raise ValueError("match_candidates requires a non-empty candidate list")
        namespace = Code.parse(str(candidates[0].entry.payload)).namespace
        template_id = "match.final" if namespace.value == "HPO" else "match.disease"
        raw = self.complete(
            template_id, {"entity": entity, "context": context, "candidates": list(candidates)}
        )
        text = (raw or "").strip()
        if re.match(r"(?i)^\s*none\b", text):
            return None
        code_match = re.search(r"(?i)(hp|orpha|orphanet)\s*[:_]\s*\d+", text)
        if not code_match:
            raise MatchParseError(f"no code found in match response: {raw!r}")
        try:
            code = Code.parse(code_match.group(0))
        except OntologyFormatError as exc:
            raise MatchParseError(str(exc)) from exc
        allowed = {str(Code.parse(str(c.entry.payload))) for c in candidates}
        if str(code) not in allowed:
            raise OutOfCandidateError(f"code {code} is not among the offered candidates")
        return code


def _stringify(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], Candidate):
            return format_candidates(value)
        if value and hasattr(value[0], "test_name"):
            return format_ranges(value)
        return "\n".join(str(v) for v in value)
    return str(value)


def _parse_yes_no(raw: str) -> bool:
    match = re.match(r"\s*([A-Za-z]+)", raw or "")
    word = match.group(1).upper() if match else ""
    if word == "YES":
        return True
    if word == "NO":
        return False
    raise ClassificationParseError("expected YES or NO at response start", raw or "")
