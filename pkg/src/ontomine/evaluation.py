"""Scoring: micro-averaged set metrics, fuzzy mention matching, and Cohen's kappa."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from .corpus import Document


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass
class EvalReport:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    per_document: dict[str, ConfusionCounts] = field(default_factory=dict)
    strata: list[tuple[str, "EvalReport"]] | None = None

    def to_json(self) -> dict:
        out = {
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp, "fn": self.counts.fn},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }
        if self.strata is not None:
            out["strata"] = [
                {"bin": label, **report.to_json()} for label, report in self.strata
            ]
        return out


def _metrics(counts: ConfusionCounts) -> tuple[float, float, float]:
    # zero-denominator metrics are defined as 0 to keep empty strata finite
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _report(per_document: dict[str, ConfusionCounts]) -> EvalReport:
    total = ConfusionCounts()
    for counts in per_document.values():
        total = total + counts
    precision, recall, f1 = _metrics(total)
    return EvalReport(total, precision, recall, f1, per_document)


def score(
    pred: Mapping[str, set], gold: Mapping[str, set]
) -> EvalReport:
    """Micro-averaged precision/recall/F1 over per-document code sets.

    Documents missing on either side count as empty sets; counts are summed
    across the corpus before the metric formulas are applied.
    """
    per_document: dict[str, ConfusionCounts] = {}
    for doc_id in sorted(set(pred) | set(gold)):
        p = set(pred.get(doc_id, set()))
        g = set(gold.get(doc_id, set()))
        per_document[doc_id] = ConfusionCounts(
            tp=len(p & g), fp=len(p - g), fn=len(g - p)
        )
    return _report(per_document)


def levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def edit_similarity(a: str, b: str) -> float:
    """1 − levenshtein/max(len) on case-folded strings; 1.0 for two empties."""
    a, b = a.casefold(), b.casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def fuzzy_score(
    pred_mentions: Mapping[str, Sequence[str]],
    gold_mentions: Mapping[str, Sequence[str]],
    threshold: float = 0.8,
) -> EvalReport:
    """String-level scoring that credits near-miss mentions.

    Within each document, prediction/gold pairs are matched one-to-one
    greedily in descending edit similarity; pairs at or above the threshold
    count as true positives, the leftovers as FP/FN.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    per_document: dict[str, ConfusionCounts] = {}
    for doc_id in sorted(set(pred_mentions) | set(gold_mentions)):
        preds = list(pred_mentions.get(doc_id, ()))
        golds = list(gold_mentions.get(doc_id, ()))
        pairs = sorted(
            (
                (edit_similarity(p, g), pi, gi)
                for pi, p in enumerate(preds)
                for gi, g in enumerate(golds)
            ),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        used_pred: set[int] = set()
        used_gold: set[int] = set()
        tp = 0
        for sim, pi, gi in pairs:
            if sim < threshold:
                break
            if pi in used_pred or gi in used_gold:
                continue
            used_pred.add(pi)
            used_gold.add(gi)
            tp += 1
        per_document[doc_id] = ConfusionCounts(
            tp=tp, fp=len(preds) - tp, fn=len(golds) - tp
        )
    return _report(per_document)


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two equally long decision sequences."""
    if len(a) != len(b):
        raise ValueError(f"decision sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("cannot compute kappa over zero items")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    labels = set(a) | set(b)
    expected = sum(
        (sum(1 for x in a if x == label) / n) * (sum(1 for y in b if y == label) / n)
        for label in labels
    )
    if expected == 1.0:
        return 1.0  # degenerate marginals: identical constant sequences
    return (observed - expected) / (1.0 - expected)


DEFAULT_BIN_EDGES = (0, 200, 400, 800, 1600)


def stratify_by_length(
    pred: Mapping[str, set],
    gold: Mapping[str, set],
    corpus: Iterable[Document],
    bin_edges: Sequence[int] = DEFAULT_BIN_EDGES,
) -> EvalReport:
    """Global report plus per-word-count-bin sub-reports.

    The final bin is open-ended, so every document lands in exactly one bin.
    """
    edges = list(bin_edges)
    if any(b >= c for b, c in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing")
    word_counts = {d.doc_id: d.word_count for d in corpus}
    labels = [
        f"[{lo},{hi})" for lo, hi in zip(edges, edges[1:])
    ] + [f"[{edges[-1]},inf)"]
    bins: list[dict[str, ConfusionCounts]] = [{} for _ in labels]
    report = score(pred, gold)
    for doc_id, counts in report.per_document.items():
        words = word_counts.get(doc_id, 0)
        idx = len(edges) - 1
        for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
            if lo <= words < hi:
                idx = i
                break
        else:
            if words < edges[0]:
                idx = 0
        bins[idx][doc_id] = counts
    report.strata = [(label, _report(bucket)) for label, bucket in zip(labels, bins)]
    return report


def format_report_table(report: EvalReport) -> str:
    """Aligned plain-text rendering of a report and its strata."""
    rows = [("stratum", "tp", "fp", "fn", "precision", "recall", "f1")]

    def add(label: str, rep: EvalReport) -> None:
        rows.append(
            (
                label,
                str(rep.counts.tp),
                str(rep.counts.fp),
                str(rep.counts.fn),
                f"{rep.precision:.4f}",
                f"{rep.recall:.4f}",
                f"{rep.f1:.4f}",
            )
        )

    add("all", report)
    for label, sub in report.strata or []:
        add(label, sub)
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)) for row in rows
    )
