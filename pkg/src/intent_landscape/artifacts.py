"""Stage artifact plumbing: canonical JSON, hashing, atomic writes.

Every pipeline stage writes its outputs atomically and records a meta
sidecar (<stage>.meta.json) holding the stage config plus sha256 of
inputs and outputs. Downstream stages re-hash their inputs against the
upstream sidecar, so a tampered or stale artifact is always detected.
Artifacts never embed timestamps or absolute paths; two runs with the
same inputs are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path

from .errors import ArtifactError

logger = logging.getLogger(__name__)

EXIT_MISSING_ARTIFACT = 2
EXIT_HASH_MISMATCH = 3
EXIT_DANGLING_CLUSTER = 4


def canonical_json(obj) -> str:
    """Key-sorted, 2-space-indented JSON with a trailing newline.

    This exact form is shared with the review UI's exporter so that
    mapping.json round-trips byte-for-byte between the two codebases.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def meta_path(workdir: str | Path, stage: str) -> Path:
    return Path(workdir) / f"{stage}.meta.json"


def write_stage_meta(
    workdir: str | Path,
    stage: str,
    config: dict,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
) -> Path:
    """Record the stage run: config plus input/output content hashes.

    Files are keyed by name only, never by absolute path.
    """
    payload = {
        "stage": stage,
        "config": config,
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {name: sha256_file(p) for name, p in sorted(outputs.items())},
    }
    path = meta_path(workdir, stage)
    atomic_write_text(path, canonical_json(payload))
    return path


def read_stage_meta(workdir: str | Path, stage: str) -> dict:
    path = meta_path(workdir, stage)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}", exit_code=EXIT_MISSING_ARTIFACT)
    return json.loads(path.read_text(encoding="utf-8"))


def require_file(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}", exit_code=EXIT_MISSING_ARTIFACT)
    return path


def verify_chain(
    workdir: str | Path,
    upstream_stage: str,
    files: dict[str, Path],
    force: bool = False,
) -> None:
    """Check that input files still hash to what the upstream stage wrote.

    A mismatch means the file was edited or regenerated out of band; the
    run refuses to continue unless forced.
    """
    meta = read_stage_meta(workdir, upstream_stage)
    recorded = meta.get("outputs", {})
    for name, path in sorted(files.items()):
        require_file(path)
        if name not in recorded:
            raise ArtifactError(
                f"{upstream_stage} metadata does not cover {name}",
                exit_code=EXIT_HASH_MISMATCH,
            )
        actual = sha256_file(path)
        if actual != recorded[name]:
            message = (
                f"hash mismatch for {name}: {upstream_stage} wrote "
                f"{recorded[name][:12]}…, file is now {actual[:12]}…"
            )
            if force:
                logger.warning("%s (continuing under --force)", message)
            else:
                raise ArtifactError(message, exit_code=EXIT_HASH_MISMATCH)
