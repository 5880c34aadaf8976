"""Stage 4: keyword pre-filtering, prior-vs-new comparison, flagging, and decisions.

New mining output is compared against a prior annotation set, producing pseudo
true positives, false negatives, and false positives per document.  Each item
is re-judged by the verifier, and only the contentious combinations are routed
to a human: agreeing items keep their automatic outcome.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .corpus import AnnotationEntry, AnnotationSet, Document
from .errors import OntomineError
from .ontology import Code

logger = logging.getLogger(__name__)

Pair = tuple[str, Code]  # (normalized mention, code)


class FlagCategory(str, Enum):
    TP = "TP"
    FN = "FN"
    FP = "FP"


class FlagAction(str, Enum):
    FLAG = "flag"
    NO_FLAG = "no_flag"


class DecisionKind(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    EDIT = "edit"


class IncompleteReviewError(OntomineError):
    pass


def normalize_mention(mention: str) -> str:
    return re.sub(r"\s+", " ", mention).strip().casefold()


@dataclass(frozen=True)
class FilterList:
    kept_abbreviations: frozenset[str]
    removed_terms: frozenset[str]
    added_terms: tuple[tuple[str, Code], ...]


def load_filter_list(path: str | Path) -> FilterList:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return FilterList(
        kept_abbreviations=frozenset(t.casefold() for t in obj.get("kept_abbreviations", [])),
        removed_terms=frozenset(t.casefold() for t in obj.get("removed_terms", [])),
        added_terms=tuple(
            (row["term"], Code.parse(row["code"])) for row in obj.get("added_terms", [])
        ),
    )


def is_abbreviation_occurrence(mention: str, doc_text: str) -> bool:
    """An "abbreviation" is a short all-letter mention appearing uppercase in the text."""
    if len(mention) > 5 or not mention.isalpha():
        return False
    return re.search(rf"\b{re.escape(mention.upper())}\b", doc_text) is not None


def apply_keyword_filter(
    annotations: AnnotationSet, filters: FilterList, corpus: list[Document]
) -> AnnotationSet:
    """Drop known-bad mentions and add known-good terms found in document text."""
    texts = {d.doc_id: d.text for d in corpus}
    out = AnnotationSet()
    for entry in annotations:
        folded = entry.mention.casefold()
        if folded in filters.removed_terms:
            continue
        text = texts.get(entry.doc_id)
        if text is None:
            logger.warning("annotation for unknown document %r kept as-is", entry.doc_id)
        elif (
            is_abbreviation_occurrence(entry.mention, text)
            and folded not in filters.kept_abbreviations
        ):
            continue
        out.add(entry)
    for term, code in filters.added_terms:
        folded = term.casefold()
        for doc in corpus:
            if folded in doc.text.casefold():
                out.add(AnnotationEntry(doc_id=doc.doc_id, mention=term, code=code))
    return out


@dataclass
class RefinementComparison:
    """Per-document set algebra between new mining output and prior annotations."""

    doc_id: str
    true_positives: set[Pair] = field(default_factory=set)
    false_negatives: set[Pair] = field(default_factory=set)
    false_positives: set[Pair] = field(default_factory=set)
    display: dict[Pair, str] = field(default_factory=dict)  # normalized -> original mention


def compare(new: Iterable, prior: AnnotationSet) -> list[RefinementComparison]:
    """TP = new ∩ prior, FN = prior − new, FP = new − prior on (mention, code) pairs.

    ``new`` may be per-document mining results or a flat annotation set loaded
    back from a mined JSONL file.
    """
    new_by_doc: dict[str, set[Pair]] = {}
    display: dict[str, dict[Pair, str]] = {}
    if isinstance(new, AnnotationSet):
        for entry in new:
            pair = (normalize_mention(entry.mention), entry.code)
            new_by_doc.setdefault(entry.doc_id, set()).add(pair)
            display.setdefault(entry.doc_id, {}).setdefault(pair, entry.mention)
        new = ()
    for result in new:
        pairs = new_by_doc.setdefault(result.doc_id, set())
        for a in result.annotations:
            pair = (normalize_mention(a.mention), a.code)
            pairs.add(pair)
            display.setdefault(result.doc_id, {}).setdefault(pair, a.mention)
    prior_by_doc: dict[str, set[Pair]] = {}
    for entry in prior:
        pair = (normalize_mention(entry.mention), entry.code)
        prior_by_doc.setdefault(entry.doc_id, set()).add(pair)
        display.setdefault(entry.doc_id, {}).setdefault(pair, entry.mention)

    comparisons = []
    for doc_id in sorted(set(new_by_doc) | set(prior_by_doc)):
        new_pairs = new_by_doc.get(doc_id, set())
        prior_pairs = prior_by_doc.get(doc_id, set())
        comparisons.append(
            RefinementComparison(
                doc_id=doc_id,
                true_positives=new_pairs & prior_pairs,
                false_negatives=prior_pairs - new_pairs,
                false_positives=new_pairs - prior_pairs,
                display=display.get(doc_id, {}),
            )
        )
    return comparisons


def decide_flag(category: FlagCategory, verified: bool) -> FlagAction:
    """The six-case flag rule: agreement passes, disagreement goes to a human.

    True positives are flagged when the verifier doubts them; false negatives
    when the verifier still believes them; false positives when the verifier
    backs the new annotation.
    """
    if category is FlagCategory.TP:
        return FlagAction.NO_FLAG if verified else FlagAction.FLAG
    if category is FlagCategory.FN:
        return FlagAction.FLAG if verified else FlagAction.NO_FLAG
    return FlagAction.FLAG if verified else FlagAction.NO_FLAG


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    code: Code | None = None

    def __post_init__(self):
        if self.kind is DecisionKind.EDIT and self.code is None:
            raise ValueError("edit decisions must carry a code")


@dataclass
class AnnotationFlag:
    flag_id: str
    doc_id: str
    mention: str
    code: Code
    category: FlagCategory
    verifier_verdict: bool | None  # None = verifier errored (indeterminate)
    action: FlagAction
    context_snippet: str = ""
    candidates: list[dict] = field(default_factory=list)
    prior_code: Code | None = None
    decision: Decision | None = None
    decided_by: str | None = None
    decided_at: str | None = None

    def to_json(self) -> dict:
        return {
            "flag_id": self.flag_id,
            "doc_id": self.doc_id,
            "mention": self.mention,
            "code": str(self.code),
            "category": self.category.value,
            "verifier_verdict": self.verifier_verdict,
            "action": self.action.value,
            "context_snippet": self.context_snippet,
            "candidates": self.candidates,
            "prior_code": str(self.prior_code) if self.prior_code else None,
            "decision": self.decision.kind.value if self.decision else None,
            "decision_code": str(self.decision.code) if self.decision and self.decision.code else None,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotationFlag":
        decision = None
        if obj.get("decision"):
            decision = Decision(
                kind=DecisionKind(obj["decision"]),
                code=Code.parse(obj["decision_code"]) if obj.get("decision_code") else None,
            )
        return cls(
            flag_id=obj["flag_id"],
            doc_id=obj["doc_id"],
            mention=obj["mention"],
            code=Code.parse(obj["code"]),
            category=FlagCategory(obj["category"]),
            verifier_verdict=obj.get("verifier_verdict"),
            action=FlagAction(obj["action"]),
            context_snippet=obj.get("context_snippet", ""),
            candidates=list(obj.get("candidates", [])),
            prior_code=Code.parse(obj["prior_code"]) if obj.get("prior_code") else None,
            decision=decision,
            decided_by=obj.get("decided_by"),
            decided_at=obj.get("decided_at"),
        )


def make_flag_id(doc_id: str, category: FlagCategory, mention: str, code: Code) -> str:
    digest = hashlib.sha1(
        f"{doc_id}|{category.value}|{normalize_mention(mention)}|{code}".encode("utf-8")
    ).hexdigest()
    return digest[:12]


@dataclass
class ReviewQueue:
    """Flagged items plus the no-flag remainder needed to apply outcomes later."""

    flags: list[AnnotationFlag] = field(default_factory=list)
    no_flag: list[AnnotationFlag] = field(default_factory=list)

    @property
    def no_flag_count(self) -> int:
        return len(self.no_flag)

    def all_items(self) -> list[AnnotationFlag]:
        return self.flags + self.no_flag


# verdict callable: (doc_id, mention, code, category) -> bool; may raise
VerdictFn = Callable[[str, str, Code, FlagCategory], bool]
# context callable: (doc_id, mention) -> context snippet
ContextFn = Callable[[str, str], str]
# candidates callable: (mention) -> list of {"label","code","score"} dicts
CandidatesFn = Callable[[str], list[dict]]


def build_review_queue(
    comparisons: list[RefinementComparison],
    verdict_fn: VerdictFn,
    context_fn: ContextFn | None = None,
    candidates_fn: CandidatesFn | None = None,
) -> ReviewQueue:
    """Re-verify every comparison item and split into flagged and no-flag sets.

    Verifier errors flag the item with an indeterminate verdict: when the
    machine cannot decide, a human must.
    """
    queue = ReviewQueue()
    for comparison in comparisons:
        prior_lookup = {
            norm: code
            for norm, code in (comparison.true_positives | comparison.false_negatives)
        }
        groups = (
            (FlagCategory.TP, comparison.true_positives),
            (FlagCategory.FN, comparison.false_negatives),
            (FlagCategory.FP, comparison.false_positives),
        )
        for category, pairs in groups:
            for norm_mention, code in sorted(pairs, key=lambda p: (p[0], str(p[1]))):
                mention = comparison.display.get((norm_mention, code), norm_mention)
                verdict: bool | None
                try:
                    verdict = bool(verdict_fn(comparison.doc_id, mention, code, category))
                except Exception as exc:  # conservative: indeterminate goes to a human
                    logger.warning(
                        "verifier error on %s/%r (%s): %s",
                        comparison.doc_id,
                        mention,
                        category.value,
                        exc,
                    )
                    verdict = None
                action = (
                    FlagAction.FLAG if verdict is None else decide_flag(category, verdict)
                )
                flag = AnnotationFlag(
                    flag_id=make_flag_id(comparison.doc_id, category, mention, code),
                    doc_id=comparison.doc_id,
                    mention=mention,
                    code=code,
                    category=category,
                    verifier_verdict=verdict,
                    action=action,
                    context_snippet=context_fn(comparison.doc_id, mention) if context_fn else "",
                    candidates=candidates_fn(mention) if candidates_fn else [],
                    prior_code=(
                        code if category is not FlagCategory.FP else prior_lookup.get(norm_mention)
                    ),
                )
                (queue.flags if action is FlagAction.FLAG else queue.no_flag).append(flag)
    return queue


def apply_decisions(queue: ReviewQueue, prior: AnnotationSet) -> AnnotationSet:
    """Materialize the refined annotation set from decisions plus agreement outcomes.

    No-flag items keep the automatic result (TP kept, FN removed, FP not
    added).  For flagged items, "accept" applies the suggested change (add an
    FP, remove an FN or TP), "reject" keeps the prior state, and "edit" keeps
    the mention under a corrected code.
    """
    pending = [f.flag_id for f in queue.flags if f.decision is None]
    if pending:
        raise IncompleteReviewError(f"{len(pending)} flags still pending: {pending[:5]}")

    context_lookup = {
        (e.doc_id, normalize_mention(e.mention), e.code): e.context for e in prior
    }

    def entry(flag: AnnotationFlag, code: Code | None = None) -> AnnotationEntry:
        code = code or flag.code
        context = context_lookup.get((flag.doc_id, normalize_mention(flag.mention), flag.code))
        return AnnotationEntry(
            doc_id=flag.doc_id, mention=flag.mention, code=code, context=context or flag.context_snippet or None
        )

    kept: list[AnnotationEntry] = []
    for flag in queue.no_flag:
        if flag.category is FlagCategory.TP:
            kept.append(entry(flag))
        elif flag.category is FlagCategory.FN:
            logger.info("agreement removal of %s/%r (%s)", flag.doc_id, flag.mention, flag.code)
        # no-flag FP: never entered the set
    for flag in queue.flags:
        decision = flag.decision
        assert decision is not None
        if flag.category is FlagCategory.FP:
            if decision.kind is DecisionKind.ACCEPT:
                kept.append(entry(flag))
            elif decision.kind is DecisionKind.EDIT:
                kept.append(entry(flag, decision.code))
        else:  # TP or FN: prior state is "present"
            if decision.kind is DecisionKind.REJECT:
                kept.append(entry(flag))
            elif decision.kind is DecisionKind.EDIT:
                kept.append(entry(flag, decision.code))
            # accept: the challenge stands, annotation removed

    out = AnnotationSet()
    for e in sorted(kept, key=lambda e: (e.doc_id, normalize_mention(e.mention), str(e.code))):
        out.add(e)
    return out


def save_queue(queue: ReviewQueue, path: str | Path, flags_only: bool = False) -> None:
    items = queue.flags if flags_only else queue.all_items()
    with Path(path).open("w", encoding="utf-8") as fh:
        for flag in items:
            fh.write(json.dumps(flag.to_json(), ensure_ascii=False) + "\n")


def load_queue(path: str | Path) -> ReviewQueue:
    queue = ReviewQueue()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            flag = AnnotationFlag.from_json(json.loads(line))
            (queue.flags if flag.action is FlagAction.FLAG else queue.no_flag).append(flag)
    return queue
