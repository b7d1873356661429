"""Run configuration: defaults, domain presets, precedence, backends.

Precedence is CLI flags > config file > domain preset > built-in
defaults. The resolved config is serialized into every stage's metadata
sidecar so a run is fully described by its artifacts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .clustering import SELECTION_EOM
from .embedding import (
    EmbeddingBackend,
    FileEmbeddingBackend,
    HTTPEmbeddingBackend,
    MockEmbeddingBackend,
)
from .errors import BackendConfigError
from .extraction import QABackend, HTTPQABackend, ReplayQABackend, default_questions
from .tagging import BaselineTagger, HTTPTaggerBackend, TaggerBackend

logger = logging.getLogger(__name__)

DISTANCE_BAND = (0.2, 0.5)

# Per-domain (min_cluster_size, distance_threshold, force_cluster_threshold).
PRESETS: dict[str, dict] = {
    "airline": {
        "min_cluster_size": 4,
        "distance_threshold": 0.29,
        "force_cluster_threshold": 0.3,
    },
    "media": {
        "min_cluster_size": 3,
        "distance_threshold": 0.42,
        "force_cluster_threshold": 0.2,
    },
    "insurance": {
        "min_cluster_size": 2,
        "distance_threshold": 0.5,
        "force_cluster_threshold": 0.2,
    },
    "finance": {
        "min_cluster_size": 2,
        "distance_threshold": 0.45,
        "force_cluster_threshold": 0.2,
    },
    "software": {
        "min_cluster_size": 2,
        "distance_threshold": 0.5,
        "force_cluster_threshold": 0.3,
    },
}


@dataclass
class RunConfig:
    question: str = ""
    top_k: int = 10
    min_cluster_size: int = 2
    min_samples: int | None = None
    selection: str = SELECTION_EOM
    distance_threshold: float = 0.4
    force_cluster_threshold: float = 0.3
    unlabeled_threshold: float = 0.4
    min_support: int = 10
    qa_backend: str = ""
    tagger_backend: str = "baseline://"
    embedding_backend: str = ""
    preset: str = ""
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.question:
            self.question = default_questions()[0]

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_config(
    cli_flags: dict | None = None,
    config_path: str | Path | None = None,
    preset: str | None = None,
) -> RunConfig:
    """Layer the four config sources in precedence order."""
    layered: dict = {}
    if preset:
        if preset not in PRESETS:
            raise BackendConfigError(
                f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}"
            )
        layered.update(PRESETS[preset])
        layered["preset"] = preset
    if config_path:
        file_cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = set(file_cfg) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise BackendConfigError(f"unknown config keys: {sorted(unknown)}")
        layered.update(file_cfg)
    for key, value in (cli_flags or {}).items():
        if value is not None:
            layered[key] = value
    cfg = RunConfig(**layered)
    if not (DISTANCE_BAND[0] <= cfg.distance_threshold <= DISTANCE_BAND[1]):
        logger.warning(
            "distance_threshold %.3f outside the usual %.1f-%.1f band",
            cfg.distance_threshold,
            *DISTANCE_BAND,
        )
    return cfg


def _mock_params(rest: str) -> dict:
    params: dict = {}
    if rest:
        for part in rest.split(","):
            key, _, value = part.partition("=")
            if key == "dim":
                params["dim"] = int(value)
            elif key == "spread":
                params["spread"] = float(value)
            else:
                raise BackendConfigError(f"unknown mock embedding option {key!r}")
    return params


def make_qa_backend(spec: str) -> QABackend:
    """QA backend from a spec string: replay://FILE or an http(s) URL.

    An empty spec falls back to the QA URL environment variable.
    """
    if spec.startswith("replay://"):
        return ReplayQABackend(spec[len("replay://") :])
    if spec.startswith(("http://", "https://")) or spec == "":
        try:
            return HTTPQABackend(spec or None)
        except ValueError as exc:
            raise BackendConfigError(str(exc)) from exc
    raise BackendConfigError(f"unrecognized QA backend spec {spec!r}")


def make_tagger_backend(spec: str) -> TaggerBackend:
    """Tagger backend: baseline:// (default) or an http(s) URL."""
    if spec in ("baseline://", "baseline"):
        return BaselineTagger()
    if spec.startswith(("http://", "https://")) or spec == "":
        try:
            return HTTPTaggerBackend(spec or None)
        except ValueError as exc:
            raise BackendConfigError(str(exc)) from exc
    raise BackendConfigError(f"unrecognized tagger backend spec {spec!r}")


def make_embedding_backend(spec: str) -> EmbeddingBackend:
    """Embedding backend: mock://[dim=D,spread=S], file://VECTORS, or http(s).

    The mock backend uses the synthetic corpus's intent-family keyword
    table, so spans generated by the synthetic module embed near their
    family anchor.
    """
    if spec.startswith("mock://"):
        from .synthetic import family_of

        params = _mock_params(spec[len("mock://") :])
        return MockEmbeddingBackend(family_of=family_of, **params)
    if spec.startswith("file://"):
        return FileEmbeddingBackend(spec[len("file://") :])
    if spec.startswith(("http://", "https://")) or spec == "":
        try:
            return HTTPEmbeddingBackend(spec or None)
        except ValueError as exc:
            raise BackendConfigError(str(exc)) from exc
    raise BackendConfigError(f"unrecognized embedding backend spec {spec!r}")
