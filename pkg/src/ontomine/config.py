"""Run configuration: one JSON tree, with CLI flags overriding file values."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import OntomineError


class ConfigError(OntomineError):
    pass


@dataclass
class PathsConfig:
    ontology: str | None = None
    corpus: str | None = None
    index: str | None = None
    abbreviations: str | None = None
    lab_ranges: str | None = None
    prompts: str | None = None
    filters: str | None = None


@dataclass
class LlmConfig:
    backend: str = "scripted"  # "scripted" | "remote_chat"
    behavior: str | None = None
    endpoint: str | None = None
    model: str | None = None
    max_in_flight: int = 4
    retries: int = 3
    temperature: float = 0.0
    max_tokens: int = 256


@dataclass
class EmbeddingConfig:
    provider: str = "hashing"  # "hashing" | "remote"
    dimension: int = 256
    endpoint: str | None = None
    model: str | None = None
    retries: int = 3


@dataclass
class ChunkingSettings:
    mode: str = "sentence"
    min_size: int | None = None


@dataclass
class OutputConfig:
    annotations: str = "annotations.jsonl"
    flags: str = "flags.jsonl"
    queue: str = "review_queue.jsonl"
    decisions: str = "decisions.log.jsonl"


@dataclass
class RunConfig:
    task: str = "phenotype"
    paths: PathsConfig = field(default_factory=PathsConfig)
    retrieval_k: int = 5
    chunking: ChunkingSettings = field(default_factory=ChunkingSettings)
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    workers: int = 1
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        if self.task not in ("phenotype", "disease"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.retrieval_k < 1:
            raise ConfigError("retrieval.k must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.llm.backend not in ("scripted", "remote_chat"):
            raise ConfigError(f"unknown llm backend {self.llm.backend!r}")
        if self.llm.backend == "remote_chat" and not self.llm.endpoint:
            raise ConfigError("remote_chat backend requires llm.endpoint")
        if self.llm.backend == "scripted" and not self.llm.behavior:
            raise ConfigError("scripted backend requires llm.behavior")
        if self.embedding.provider not in ("hashing", "remote"):
            raise ConfigError(f"unknown embedding provider {self.embedding.provider!r}")
        if self.embedding.provider == "remote" and not self.embedding.endpoint:
            raise ConfigError("remote embedding provider requires embedding.endpoint")
        for name in ("ontology", "corpus", "abbreviations", "lab_ranges", "prompts", "filters"):
            raw = getattr(self.paths, name)
            if raw is not None and not self.resolve(raw).exists():
                raise ConfigError(f"paths.{name} does not exist: {self.resolve(raw)}")
        behavior = self.llm.behavior
        if behavior is not None and not self.resolve(behavior).exists():
            raise ConfigError(f"llm.behavior does not exist: {self.resolve(behavior)}")


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a config file and apply flat dotted-key overrides (e.g. "llm.retries")."""
    path = Path(path)
    try:
        tree = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    cfg = RunConfig(
        task=tree.get("task", "phenotype"),
        paths=PathsConfig(**tree.get("paths", {})),
        retrieval_k=int(tree.get("retrieval", {}).get("k", 5)),
        chunking=ChunkingSettings(**tree.get("chunking", {})),
        llm=LlmConfig(**tree.get("llm", {})),
        embedding=EmbeddingConfig(**tree.get("embedding", {})),
        workers=int(tree.get("workers", 1)),
        output=OutputConfig(**tree.get("output", {})),
        base_dir=path.parent,
    )
    cfg.validate()
    return cfg
