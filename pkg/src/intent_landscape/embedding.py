"""Span embeddings: backends, the cosine metric, and a 2D projection.

Embedding inference happens behind a backend interface. Three backends
ship in-tree: an HTTP client, a vector-file reader for precomputed
embeddings, and a deterministic mock (seeded hash onto the unit sphere)
for synthetic end-to-end runs. All vectors are unit-normalized at
ingestion so centroid cosine arithmetic stays stable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BackendConfigError, ExtractionError
from .validation import ValidatedSpan

logger = logging.getLogger(__name__)

EMBEDDING_URL_ENV = "INTENT_LANDSCAPE_EMBEDDING_URL"

VECTOR_FILE_MAGIC = b"ILEM"

SpanRef = tuple[str, int]


@dataclass(frozen=True)
class EmbeddedSpan:
    span_ref: SpanRef
    vector: np.ndarray
    norm_flag: bool = True

    def __post_init__(self) -> None:
        if self.norm_flag:
            norm = float(np.linalg.norm(self.vector))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"norm_flag set but ‖v‖ = {norm}")


@dataclass(frozen=True)
class Projection2D:
    span_ref: SpanRef
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"non-finite projection for {self.span_ref}")


class EmbeddingBackend(Protocol):
    def embed(self, refs: list[SpanRef], texts: list[str]) -> list[np.ndarray]:
        ...


class HTTPEmbeddingBackend:
    """Client for the embedding wire protocol: {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(
        self, url: str | None = None, timeout: float = 120.0, batch_size: int = 64
    ) -> None:
        self.url = url or os.environ.get(EMBEDDING_URL_ENV, "")
        if not self.url:
            raise ValueError(f"no embedding backend URL (flag or {EMBEDDING_URL_ENV})")
        self.timeout = timeout
        self.batch_size = batch_size
        self._session = requests.Session()

    def embed(self, refs: list[SpanRef], texts: list[str]) -> list[np.ndarray]:
        vectors: list[np.ndarray] = []
        for lo in range(0, len(texts), self.batch_size):
            batch = texts[lo : lo + self.batch_size]
            try:
                resp = self._session.post(
                    self.url, json={"texts": batch}, timeout=self.timeout
                )
                resp.raise_for_status()
                body = resp.json()
            except (requests.RequestException, ValueError) as exc:
                raise ExtractionError(f"embedding backend failure: {exc}") from exc
            rows = body["vectors"]
            if len(rows) != len(batch):
                raise ExtractionError(
                    f"embedding backend returned {len(rows)} vectors for {len(batch)} texts"
                )
            vectors.extend(np.asarray(r, dtype=np.float64) for r in rows)
        return vectors


class MockEmbeddingBackend:
    """Deterministic hash-to-sphere embeddings for synthetic corpora.

    Each text gets anchor(family) + spread * jitter(text), normalized.
    family_of maps a span text to a family key; texts of one family land
    close together, distinct families land far apart. Everything is
    seeded from sha256 digests, so repeated calls are bit-identical.
    """

    def __init__(self, dim: int = 16, family_of=None, spread: float = 0.05) -> None:
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.family_of = family_of or (lambda text: text)
        self.spread = spread

    def _unit_from_seed(self, seed: str) -> np.ndarray:
        digest = hashlib.sha256(seed.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed(self, refs: list[SpanRef], texts: list[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for text in texts:
            anchor = self._unit_from_seed(f"family::{self.family_of(text)}")
            jitter = self._unit_from_seed(f"text::{text}")
            v = anchor + self.spread * jitter
            out.append(v / np.linalg.norm(v))
        return out


class FileEmbeddingBackend:
    """Serve precomputed vectors from a vector file keyed by span_ref."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        refs, matrix = read_vector_file(self.path)
        self._by_ref = {ref: matrix[i] for i, ref in enumerate(refs)}

    def embed(self, refs: list[SpanRef], texts: list[str]) -> list[np.ndarray]:
        missing = [ref for ref in refs if ref not in self._by_ref]
        if missing:
            raise BackendConfigError(
                f"vector file {self.path} missing {len(missing)} span refs: "
                f"{missing[:5]}{'...' if len(missing) > 5 else ''}"
            )
        return [self._by_ref[ref] for ref in refs]


def embed_spans(
    spans: list[ValidatedSpan], backend: EmbeddingBackend
) -> list[EmbeddedSpan]:
    """One unit-normalized vector per span, input order preserved."""
    refs = [(s.candidate.dialogue_id, s.candidate.rank) for s in spans]
    texts = [s.candidate.text for s in spans]
    vectors = backend.embed(refs, texts)
    if len(vectors) != len(spans):
        raise BackendConfigError(
            f"backend returned {len(vectors)} vectors for {len(spans)} spans"
        )
    dims = {v.shape for v in vectors}
    if len(dims) > 1:
        raise BackendConfigError(f"inconsistent vector dimensions: {sorted(dims)}")
    out: list[EmbeddedSpan] = []
    for ref, v in zip(refs, vectors):
        arr = np.asarray(v, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0 or not np.isfinite(norm):
            raise BackendConfigError(f"degenerate vector for span {ref}")
        out.append(EmbeddedSpan(span_ref=ref, vector=arr / norm))
    return out


def cosine_distance(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """1 − cosine similarity, clamped into [0, 2]."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance undefined for zero vectors")
    d = 1.0 - float(np.dot(av, bv)) / (na * nb)
    return min(2.0, max(0.0, d))


def project_2d(vectors: Sequence[np.ndarray], refs: Sequence[SpanRef]) -> list[Projection2D]:
    """Deterministic PCA onto the top-2 principal components.

    Sign convention: within each component the loading with the largest
    magnitude is made positive. All-identical inputs produce all-zero
    coordinates with a warning.
    """
    if len(vectors) < 2:
        raise ValueError("projection needs at least 2 vectors")
    if len(vectors) != len(refs):
        raise ValueError("vectors and refs must align")
    matrix = np.asarray(vectors, dtype=np.float64)
    centered = matrix - matrix.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-12):
        logger.warning("projection input is rank-deficient (all points identical)")
        return [Projection2D(ref, 0.0, 0.0) for ref in refs]
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    if components.shape[0] < 2:
        components = np.vstack([components, np.zeros_like(components[0])])
    for i in range(2):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    coords = centered @ components.T
    return [
        Projection2D(ref, float(xy[0]), float(xy[1])) for ref, xy in zip(refs, coords)
    ]


def write_vector_file(
    path: str | Path, refs: Sequence[SpanRef], matrix: np.ndarray
) -> None:
    """Binary vector file plus a sidecar JSONL of span refs in row order."""
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
    if matrix.shape[0] != len(refs):
        raise ValueError(f"{len(refs)} refs for {matrix.shape[0]} rows")
    count, dim = matrix.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(VECTOR_FILE_MAGIC)
        fh.write(struct.pack("<II", count, dim))
        fh.write(matrix.tobytes(order="C"))
    sidecar = path.with_name(path.name + ".refs.jsonl")
    with sidecar.open("w", encoding="utf-8", newline="\n") as fh:
        for dialogue_id, rank in refs:
            fh.write(
                json.dumps(
                    {"dialogue_id": dialogue_id, "rank": rank}, ensure_ascii=False
                )
                + "\n"
            )


def read_vector_file(path: str | Path) -> tuple[list[SpanRef], np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != VECTOR_FILE_MAGIC:
        raise ValueError(f"{path} is not a vector file (bad magic {raw[:4]!r})")
    count, dim = struct.unpack("<II", raw[4:12])
    expected = 12 + count * dim * 4
    if len(raw) != expected:
        raise ValueError(f"{path} truncated: {len(raw)} bytes, expected {expected}")
    matrix = np.frombuffer(raw[12:], dtype="<f4").reshape(count, dim).astype(np.float64)
    sidecar = path.with_name(path.name + ".refs.jsonl")
    refs: list[SpanRef] = []
    with sidecar.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            refs.append((str(obj["dialogue_id"]), int(obj["rank"])))
    if len(refs) != count:
        raise ValueError(f"sidecar has {len(refs)} refs for {count} rows")
    return refs, matrix


def write_coordinates(path: str | Path, projections: Sequence[Projection2D]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in projections:
            fh.write(
                json.dumps(
                    {
                        "dialogue_id": p.span_ref[0],
                        "rank": p.span_ref[1],
                        "x": p.x,
                        "y": p.y,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_coordinates(path: str | Path) -> list[Projection2D]:
    out: list[Projection2D] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                Projection2D(
                    (str(obj["dialogue_id"]), int(obj["rank"])),
                    float(obj["x"]),
                    float(obj["y"]),
                )
            )
    return out
