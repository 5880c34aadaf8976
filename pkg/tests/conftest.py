import json
from pathlib import Path

import pytest

from ontomine.config import load_config
from ontomine.gateway import LlmGateway, PromptLibrary, ScriptedBackend, load_behavior
from ontomine.ontology import Namespace, load_ontology
from ontomine.pipeline import build_runtime
from ontomine.retrieval import HashingEmbedder, build_index, ontology_index_items

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def hpo_store():
    return load_ontology(DATA / "ontology_hpo.jsonl", Namespace.HPO)


@pytest.fixture(scope="session")
def orpha_store():
    return load_ontology(DATA / "ontology_orpha.jsonl", Namespace.ORPHA)


@pytest.fixture(scope="session")
def behavior():
    return load_behavior(DATA / "behavior.json")


@pytest.fixture(scope="session")
def library():
    return PromptLibrary()


@pytest.fixture(scope="session")
def gateway(library, behavior):
    return LlmGateway(library, ScriptedBackend(behavior))


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder(256)


@pytest.fixture(scope="session")
def hpo_index(hpo_store, embedder):
    return build_index(ontology_index_items(hpo_store), embedder)


@pytest.fixture(scope="session")
def orpha_index(orpha_store, embedder):
    return build_index(ontology_index_items(orpha_store), embedder)


@pytest.fixture(scope="session")
def phenotype_runtime():
    return build_runtime(load_config(DATA / "config.phenotype.json"))


@pytest.fixture(scope="session")
def disease_runtime():
    return build_runtime(load_config(DATA / "config.disease.json"))


class RecordingBackend:
    """Wraps a backend, recording template ids; optionally overrides responses."""

    def __init__(self, inner, overrides: dict[str, str] | None = None):
        self.inner = inner
        self.calls: list[str] = []
        self.overrides = overrides or {}

    def complete(self, template_id, bindings, decoding):
        self.calls.append(template_id)
        if template_id in self.overrides:
            value = self.overrides[template_id]
            if isinstance(value, Exception):
                raise value
            return value
        return self.inner.complete(template_id, bindings, decoding)


@pytest.fixture()
def recording_gateway(library, behavior):
    backend = RecordingBackend(ScriptedBackend(behavior))
    return LlmGateway(library, backend), backend


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path
