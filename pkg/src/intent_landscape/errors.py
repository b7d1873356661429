"""Exception types shared across the pipeline."""

from __future__ import annotations


class CorpusError(ValueError):
    """Corpus-level ingestion failure (duplicate turns, broken turn order)."""


class RecordError(ValueError):
    """A single malformed input row; carries the 1-based row number."""

    def __init__(self, row: int, message: str) -> None:
        super().__init__(f"row {row}: {message}")
        self.row = row


class ExtractionError(RuntimeError):
    """QA backend transport failure; safe to retry."""


class DataIntegrityError(ValueError):
    """Backend-reported offsets disagree with the context text."""

    def __init__(self, dialogue_id: str, rank: int, message: str) -> None:
        super().__init__(f"dialogue {dialogue_id!r} rank {rank}: {message}")
        self.dialogue_id = dialogue_id
        self.rank = rank


class BackendConfigError(ValueError):
    """A backend produced structurally unusable output (e.g. mixed dimensions)."""


class MappingOpError(ValueError):
    """A mapping operation referenced a dead or unknown cluster id."""

    def __init__(self, position: int, message: str) -> None:
        super().__init__(f"op {position}: {message}")
        self.position = position


class UnmappedClusterError(ValueError):
    """Volume estimation hit live top clusters without an intent assignment."""

    def __init__(self, cluster_ids: list[int], message: str = "unmapped top clusters") -> None:
        super().__init__(f"{message}: {sorted(cluster_ids)}")
        self.cluster_ids = sorted(cluster_ids)


class ArtifactError(RuntimeError):
    """A staged artifact is missing or fails hash-chain verification."""

    def __init__(self, message: str, exit_code: int) -> None:
        super().__init__(message)
        self.exit_code = exit_code
