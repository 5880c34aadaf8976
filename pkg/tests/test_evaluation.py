import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontomine.corpus import Document
from ontomine.evaluation import (
    ConfusionCounts,
    cohen_kappa,
    edit_similarity,
    format_report_table,
    fuzzy_score,
    levenshtein,
    score,
    stratify_by_length,
)

code_sets = st.dictionaries(
    st.sampled_from([f"doc_{i}" for i in range(6)]),
    st.sets(st.integers(min_value=0, max_value=20), max_size=8),
    max_size=6,
)


def brute_force_counts(pred, gold):
    tp = fp = fn = 0
    for doc_id in set(pred) | set(gold):
        p = pred.get(doc_id, set())
        g = gold.get(doc_id, set())
        for code in p:
            if code in g:
                tp += 1
            else:
                fp += 1
        for code in g:
            if code not in p:
                fn += 1
    return tp, fp, fn


class TestScore:
    def test_identity_is_perfect(self):
        sets = {"a": {1, 2}, "b": {3}}
        report = score(sets, sets)
        assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)

    def test_hand_case(self):
        report = score({"d": {1, 2, 3}}, {"d": {1, 2, 4, 5}})
        assert (report.counts.tp, report.counts.fp, report.counts.fn) == (2, 1, 2)
        assert abs(report.precision - 2 / 3) < 1e-9
        assert abs(report.recall - 0.5) < 1e-9
        assert abs(report.f1 - 4 / 7) < 1e-9

    def test_empty_predictions_zero_rule(self):
        report = score({}, {"d": {1}})
        assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)

    def test_matches_brute_force_oracle(self):
        rng = random.Random(99)
        for _ in range(50):
            pred = {
                f"doc_{i}": set(rng.sample(range(30), rng.randint(0, 8)))
                for i in range(rng.randint(0, 6))
            }
            gold = {
                f"doc_{i}": set(rng.sample(range(30), rng.randint(0, 8)))
                for i in range(rng.randint(0, 6))
            }
            report = score(pred, gold)
            assert (report.counts.tp, report.counts.fp, report.counts.fn) == brute_force_counts(
                pred, gold
            )

    @given(code_sets, code_sets)
    def test_swapping_roles_exchanges_fp_fn(self, pred, gold):
        forward = score(pred, gold)
        backward = score(gold, pred)
        assert forward.counts.tp == backward.counts.tp
        assert forward.counts.fp == backward.counts.fn
        assert forward.counts.fn == backward.counts.fp
        assert abs(forward.precision - backward.recall) < 1e-12

    @given(code_sets, code_sets)
    def test_metrics_in_unit_interval(self, pred, gold):
        report = score(pred, gold)
        for value in (report.precision, report.recall, report.f1):
            assert 0.0 <= value <= 1.0


class TestFuzzy:
    def test_identical_sets(self):
        report = fuzzy_score({"d": ["fever", "rash"]}, {"d": ["fever", "rash"]})
        assert report.f1 == 1.0

    def test_below_threshold_no_match(self):
        assert abs(edit_similarity("abcd", "abce") - 0.75) < 1e-12
        report = fuzzy_score({"d": ["abcd"]}, {"d": ["abce"]})
        assert report.counts.tp == 0

    def test_inclusive_threshold(self):
        assert abs(edit_similarity("abcde", "abcdX") - 0.8) < 1e-12
        report = fuzzy_score({"d": ["abcde"]}, {"d": ["abcdX"]})
        assert report.counts.tp == 1

    def test_case_folded(self):
        assert edit_similarity("Fever", "fever") == 1.0

    def test_one_to_one_greedy(self):
        report = fuzzy_score({"d": ["fever", "fever"]}, {"d": ["fever"]})
        assert (report.counts.tp, report.counts.fp, report.counts.fn) == (1, 1, 0)

    def test_threshold_one_equals_exact_scoring(self):
        pred = {"d": ["alpha", "beta"], "e": ["gamma"]}
        gold = {"d": ["beta", "delta"], "e": ["gamma"]}
        fuzzy = fuzzy_score(pred, gold, threshold=1.0)
        exact = score(
            {doc: set(v) for doc, v in pred.items()}, {doc: set(v) for doc, v in gold.items()}
        )
        assert (fuzzy.counts.tp, fuzzy.counts.fp, fuzzy.counts.fn) == (
            exact.counts.tp,
            exact.counts.fp,
            exact.counts.fn,
        )

    def test_levenshtein_basics(self):
        assert levenshtein("", "abc") == 3
        assert levenshtein("kitten", "sitting") == 3

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            fuzzy_score({}, {}, threshold=0.0)


class TestKappa:
    def test_identical_vectors(self):
        assert cohen_kappa(["y", "n", "y"], ["y", "n", "y"]) == 1.0

    def test_hand_confusion_matrix(self):
        a = ["y"] * 4 + ["y"] * 2 + ["n"] * 1 + ["n"] * 3
        b = ["y"] * 4 + ["n"] * 2 + ["y"] * 1 + ["n"] * 3
        assert abs(cohen_kappa(a, b) - 0.4) < 1e-9

    def test_independent_random_labels_near_zero(self):
        rng = random.Random(1234)
        n = 10_000
        a = [rng.choice("ab") for _ in range(n)]
        b = [rng.choice("ab") for _ in range(n)]
        assert abs(cohen_kappa(a, b)) < 0.05

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cohen_kappa(["y"], ["y", "n"])

    def test_constant_identical_sequences(self):
        assert cohen_kappa(["y", "y"], ["y", "y"]) == 1.0


class TestStratify:
    CORPUS = [
        Document("short", "one two three"),
        Document("long", " ".join(["word"] * 900)),
    ]

    def test_single_bin_matches_global(self):
        pred = {"short": {1, 2}}
        gold = {"short": {1}}
        report = stratify_by_length(pred, gold, [Document("short", "one two")], [0])
        assert report.strata is not None
        label, only = report.strata[0]
        assert only.counts.tp == report.counts.tp == 1

    def test_empty_bin_zeroes(self):
        report = stratify_by_length({"short": {1}}, {"short": {1}}, self.CORPUS)
        empty = [sub for _, sub in report.strata if sub.counts.tp + sub.counts.fp + sub.counts.fn == 0]
        assert empty and all(sub.f1 == 0.0 for sub in empty)

    def test_bins_partition_counts(self):
        pred = {"short": {1, 2}, "long": {3}}
        gold = {"short": {1}, "long": {3, 4}}
        report = stratify_by_length(pred, gold, self.CORPUS)
        summed = ConfusionCounts()
        for _, sub in report.strata:
            summed = summed + sub.counts
        assert (summed.tp, summed.fp, summed.fn) == (
            report.counts.tp,
            report.counts.fp,
            report.counts.fn,
        )

    def test_edges_must_increase(self):
        with pytest.raises(ValueError):
            stratify_by_length({}, {}, self.CORPUS, [0, 0, 10])

    def test_table_rendering(self):
        report = stratify_by_length({"short": {1}}, {"short": {1}}, self.CORPUS)
        table = format_report_table(report)
        assert "stratum" in table and "all" in table
        assert len(table.splitlines()) == 2 + len(report.strata)
