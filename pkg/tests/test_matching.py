import pytest

from ontomine.errors import OntomineError
from ontomine.extraction import EntityRecord, Task
from ontomine.matching import aggregate_document, match_entity
from ontomine.ontology import Code
from ontomine.verification import Route, VerifiedOutcome


def outcome_for(mention, final_term=None, task=Task.PHENOTYPE, doc_id="d", route=Route.DIRECT):
    record = EntityRecord(doc_id=doc_id, chunk_index=0, mention=mention, task=task)
    return VerifiedOutcome(
        entity=record, accepted=True, final_term=final_term or mention, route=route
    )


class TestMatchEntity:
    def test_seizure_maps_to_code(self, gateway, embedder, hpo_index):
        annotation = match_entity(outcome_for("seizure"), "ctx", hpo_index, gateway, embedder)
        assert annotation is not None
        assert str(annotation.code) == "HP:0001250"
        assert annotation.route == "direct"
        assert 0 < annotation.score_of_chosen_candidate <= 1

    def test_implied_term_used_for_matching(self, gateway, embedder, hpo_index):
        annotation = match_entity(
            outcome_for(
                "hemoglobin 6.2 g/dL",
                final_term="Decreased hemoglobin concentration",
                route=Route.LAB_IMPLIED,
            ),
            "ctx",
            hpo_index,
            gateway,
            embedder,
        )
        assert str(annotation.code) == "HP:0020062"
        assert annotation.mention == "hemoglobin 6.2 g/dL"

    def test_zero_overlap_is_unmatched(self, gateway, embedder, hpo_index, caplog):
        annotation = match_entity(outcome_for("zzzz"), "ctx", hpo_index, gateway, embedder)
        assert annotation is None

    def test_rejected_outcome_not_matchable(self, gateway, embedder, hpo_index):
        record = EntityRecord(doc_id="d", chunk_index=0, mention="x", task=Task.PHENOTYPE)
        rejected = VerifiedOutcome(record, accepted=False, final_term="x", route=Route.REJECTED)
        with pytest.raises(ValueError):
            match_entity(rejected, "ctx", hpo_index, gateway, embedder)

    def test_namespace_discipline(self, gateway, embedder, orpha_index):
        # a phenotype-task entity matched against a disease index is a wiring bug
        with pytest.raises(OntomineError):
            match_entity(outcome_for("sarcoidosis"), "ctx", orpha_index, gateway, embedder)

    def test_out_of_candidate_surfaces_as_unmatched(self, library, embedder, hpo_index):
        from ontomine.gateway import LlmGateway

        class WrongCodeBackend:
            def complete(self, template_id, bindings, decoding):
                return "HP:9999999"

        gateway = LlmGateway(library, WrongCodeBackend())
        annotation = match_entity(outcome_for("seizure"), "ctx", hpo_index, gateway, embedder)
        assert annotation is None


class TestAggregateDocument:
    def test_same_code_two_chunks(self, gateway, embedder, hpo_index):
        first = match_entity(outcome_for("seizure"), "ctx", hpo_index, gateway, embedder)
        second = match_entity(outcome_for("seizure"), "ctx2", hpo_index, gateway, embedder)
        result = aggregate_document([first, second])
        assert result.phenotype_codes == {Code.parse("HP:0001250")}
        assert len(result.annotations) == 2

    def test_empty_requires_doc_id(self):
        assert aggregate_document([], doc_id="d").phenotype_codes == set()
        with pytest.raises(ValueError):
            aggregate_document([])

    def test_three_distinct_codes(self, gateway, embedder, hpo_index):
        annotations = [
            match_entity(outcome_for(m), "ctx", hpo_index, gateway, embedder)
            for m in ("seizure", "fever", "anemia")
        ]
        result = aggregate_document(annotations)
        assert len(result.phenotype_codes) == 3

    def test_mixed_documents_rejected(self, gateway, embedder, hpo_index):
        a = match_entity(outcome_for("seizure", doc_id="d1"), "ctx", hpo_index, gateway, embedder)
        b = match_entity(outcome_for("fever", doc_id="d2"), "ctx", hpo_index, gateway, embedder)
        with pytest.raises(ValueError):
            aggregate_document([a, b])

    def test_codes_and_annotations_consistent(self, gateway, embedder, hpo_index):
        annotations = [
            match_entity(outcome_for(m), "ctx", hpo_index, gateway, embedder)
            for m in ("seizure", "seizure", "fever")
        ]
        result = aggregate_document(annotations)
        assert {a.code for a in result.annotations} == result.phenotype_codes
        assert all(a.code in result.phenotype_codes for a in result.annotations)
