"""Dialogue attachment, force assignment, intent mapping, and volumes.

A dialogue is represented by its best-ranked valid span. If that span
landed in a dense low-level cluster it is attached there (clustered);
otherwise the force-assignment pass may pull it to the nearest center
when the best (span, center) cosine distance is under the
force_cluster_threshold; whatever remains stays unassigned. The analyst
mapping names each top-level cluster (or marks it OTHER) and may merge
clusters; volumes are counted per mapped intent.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .artifacts import atomic_write_text, canonical_json
from .clustering import NOISE, LowLevelClustering
from .embedding import SpanRef, cosine_distance
from .errors import MappingOpError, UnmappedClusterError
from .validation import ValidatedSpan

logger = logging.getLogger(__name__)

OTHER = "OTHER"

SOURCE_CLUSTERED = "clustered"
SOURCE_FORCED = "forced"
SOURCE_UNASSIGNED = "unassigned"

FORCE_BAND = (0.2, 0.3)


@dataclass(frozen=True)
class ForceParams:
    force_cluster_threshold: float = 0.3

    def __post_init__(self) -> None:
        if not (0.0 < self.force_cluster_threshold < 2.0):
            raise ValueError("force_cluster_threshold must be in (0, 2)")
        if not (FORCE_BAND[0] <= self.force_cluster_threshold <= FORCE_BAND[1]):
            logger.warning(
                "force_cluster_threshold %.3f outside the usual %.1f-%.1f band",
                self.force_cluster_threshold,
                *FORCE_BAND,
            )


@dataclass(frozen=True)
class Assignment:
    low_cluster: int | None
    top_cluster: int | None
    source: str
    reason: str = ""


@dataclass(frozen=True)
class MappingEntry:
    intent: str
    representative_span: str


@dataclass
class IntentMapping:
    entries: dict[int, MappingEntry] = field(default_factory=dict)
    merge_log: list[dict] = field(default_factory=list)

    def copy(self) -> "IntentMapping":
        return IntentMapping(entries=dict(self.entries), merge_log=list(self.merge_log))


@dataclass
class LandscapeResult:
    assignments: dict[str, Assignment]
    volumes: dict[str, int]
    unassigned: int

    @property
    def source_counts(self) -> dict[str, int]:
        counts = {SOURCE_CLUSTERED: 0, SOURCE_FORCED: 0, SOURCE_UNASSIGNED: 0}
        for a in self.assignments.values():
            counts[a.source] += 1
        return counts


def representative_span(spans: list[ValidatedSpan]) -> ValidatedSpan | None:
    """The dialogue's representative: its lowest-rank valid span."""
    valid = [s for s in spans if s.valid]
    if not valid:
        return None
    return min(valid, key=lambda s: s.candidate.rank)


def attach_dialogues(
    valid_by_dialogue: dict[str, list[ValidatedSpan]],
    refs: Sequence[SpanRef],
    clustering: LowLevelClustering,
    top_of_low: dict[int, int],
) -> dict[str, Assignment]:
    """Attach each dialogue whose representative span is a cluster member."""
    index_of = {ref: i for i, ref in enumerate(refs)}
    assignments: dict[str, Assignment] = {}
    for dialogue_id, spans in valid_by_dialogue.items():
        rep = representative_span(spans)
        if rep is None:
            assignments[dialogue_id] = Assignment(
                None, None, SOURCE_UNASSIGNED, reason="no valid spans"
            )
            continue
        ref = (rep.candidate.dialogue_id, rep.candidate.rank)
        row = index_of.get(ref)
        if row is None:
            assignments[dialogue_id] = Assignment(
                None, None, SOURCE_UNASSIGNED, reason="representative not embedded"
            )
            continue
        label = clustering.labels[row]
        if label == NOISE:
            assignments[dialogue_id] = Assignment(
                None, None, SOURCE_UNASSIGNED, reason="representative is noise"
            )
        else:
            assignments[dialogue_id] = Assignment(
                label, top_of_low[label], SOURCE_CLUSTERED
            )
    return assignments


def force_assign(
    assignments: dict[str, Assignment],
    valid_by_dialogue: dict[str, list[ValidatedSpan]],
    vectors_by_ref: dict[SpanRef, np.ndarray],
    clustering: LowLevelClustering,
    top_of_low: dict[int, int],
    params: ForceParams,
) -> dict[str, Assignment]:
    """Pull unassigned dialogues toward the nearest low-level center.

    The decision statistic is the minimum cosine distance over every
    (valid span of the dialogue, center) pair; strictly below the
    threshold assigns to that center's cluster, argmin ties going to the
    smallest cluster id.
    """
    centers = [
        (cl.id, cl.center) for cl in clustering.clusters if cl.center is not None
    ]
    out = dict(assignments)
    for dialogue_id, a in assignments.items():
        if a.source != SOURCE_UNASSIGNED:
            continue
        best: tuple[float, int] | None = None
        for span in valid_by_dialogue.get(dialogue_id, []):
            if not span.valid:
                continue
            ref = (span.candidate.dialogue_id, span.candidate.rank)
            vec = vectors_by_ref.get(ref)
            if vec is None:
                continue
            for cid, center in centers:
                d = cosine_distance(vec, center)
                key = (d, cid)
                if best is None or key < best:
                    best = key
        if best is not None and best[0] < params.force_cluster_threshold:
            cid = best[1]
            out[dialogue_id] = Assignment(cid, top_of_low[cid], SOURCE_FORCED)
    return out


def top_representative_spans(
    top_of_low: dict[int, int],
    clustering: LowLevelClustering,
    texts: Sequence[str],
    vectors: Sequence[np.ndarray],
) -> dict[int, str]:
    """Human-readable label span per top cluster.

    The pick is the member span closest (cosine) to the unweighted mean
    of the top cluster's low-level centers; distance ties fall back to
    the lexicographically smallest text.
    """
    lows_of_top: dict[int, list[int]] = {}
    for low, top in top_of_low.items():
        lows_of_top.setdefault(top, []).append(low)
    center_of = {cl.id: cl.center for cl in clustering.clusters}
    members_of = {cl.id: cl.members for cl in clustering.clusters}
    reps: dict[int, str] = {}
    for top, lows in lows_of_top.items():
        mean = np.mean([center_of[low] for low in sorted(lows)], axis=0)
        best: tuple[float, str] | None = None
        for low in sorted(lows):
            for i in members_of[low]:
                key = (cosine_distance(vectors[i], mean), texts[i])
                if best is None or key < best:
                    best = key
        assert best is not None  # every top cluster has >= 1 member
        reps[top] = best[1]
    return reps


def build_initial_mapping(representatives: dict[int, str]) -> IntentMapping:
    """Fresh mapping: every top cluster starts as OTHER, empty op log."""
    entries = {
        top: MappingEntry(intent=OTHER, representative_span=rep)
        for top, rep in representatives.items()
    }
    return IntentMapping(entries=entries, merge_log=[])


def apply_mapping_ops(
    mapping: IntentMapping,
    ops: list[dict],
    assignments: dict[str, Assignment] | None = None,
) -> tuple[IntentMapping, dict[str, Assignment] | None]:
    """Apply analyst operations, appending them to the merge log.

    merge re-points all assignments of the absorbed cluster and deletes
    its entry; rename and set_other adjust intents. An op naming a
    deleted or unknown cluster id is rejected with its log position.
    """
    out = mapping.copy()
    new_assignments = dict(assignments) if assignments is not None else None
    for pos, op in enumerate(ops):
        kind = op.get("op")
        if kind == "merge":
            src, dst = int(op["from"]), int(op["into"])
            if src == dst:
                raise MappingOpError(pos, f"cannot merge cluster {src} into itself")
            for cid in (src, dst):
                if cid not in out.entries:
                    raise MappingOpError(pos, f"merge references unknown cluster {cid}")
            del out.entries[src]
            if new_assignments is not None:
                for did, a in new_assignments.items():
                    if a.top_cluster == src:
                        new_assignments[did] = replace(a, top_cluster=dst)
        elif kind == "rename":
            cid = int(op["id"])
            if cid not in out.entries:
                raise MappingOpError(pos, f"rename references unknown cluster {cid}")
            intent = str(op["intent"])
            if not intent:
                raise MappingOpError(pos, "rename needs a non-empty intent")
            out.entries[cid] = replace(out.entries[cid], intent=intent)
        elif kind == "set_other":
            cid = int(op["id"])
            if cid not in out.entries:
                raise MappingOpError(pos, f"set_other references unknown cluster {cid}")
            out.entries[cid] = replace(out.entries[cid], intent=OTHER)
        else:
            raise MappingOpError(pos, f"unknown op {kind!r}")
        out.merge_log.append(dict(op))
    return out, new_assignments


def estimate_volumes(
    assignments: dict[str, Assignment], mapping: IntentMapping
) -> tuple[dict[str, int], int]:
    """Dialogue counts per mapped intent; OTHER aggregated.

    Returns (volumes, unassigned_count). Every live top cluster (one
    carrying at least one assignment) must be mapped.
    """
    live = sorted(
        {
            a.top_cluster
            for a in assignments.values()
            if a.source != SOURCE_UNASSIGNED and a.top_cluster is not None
        }
    )
    unmapped = [cid for cid in live if cid not in mapping.entries]
    if unmapped:
        raise UnmappedClusterError(unmapped)
    volumes: dict[str, int] = {}
    for entry in mapping.entries.values():
        volumes.setdefault(entry.intent, 0)
    unassigned = 0
    for a in assignments.values():
        if a.source == SOURCE_UNASSIGNED:
            unassigned += 1
            continue
        intent = mapping.entries[a.top_cluster].intent  # type: ignore[index]
        volumes[intent] = volumes.get(intent, 0) + 1
    return volumes, unassigned


def scheme_recall(mapping: IntentMapping, scheme: set[str]) -> float:
    """Fraction of scheme intents covered by at least one mapped cluster."""
    if not scheme:
        raise ValueError("scheme must be non-empty")
    mapped = {e.intent for e in mapping.entries.values() if e.intent != OTHER}
    return len(scheme & mapped) / len(scheme)


def mapping_to_payload(mapping: IntentMapping) -> dict:
    return {
        "entries": {
            str(cid): {
                "intent": entry.intent,
                "representative_span": entry.representative_span,
            }
            for cid, entry in mapping.entries.items()
        },
        "merge_log": [dict(op) for op in mapping.merge_log],
    }


def mapping_from_payload(obj: dict) -> IntentMapping:
    entries = {
        int(cid): MappingEntry(
            intent=str(e["intent"]),
            representative_span=str(e["representative_span"]),
        )
        for cid, e in obj.get("entries", {}).items()
    }
    return IntentMapping(
        entries=entries, merge_log=[dict(op) for op in obj.get("merge_log", [])]
    )


def write_mapping(path: str | Path, mapping: IntentMapping) -> None:
    """mapping.json in the canonical byte-stable form (shared with the UI)."""
    atomic_write_text(Path(path), canonical_json(mapping_to_payload(mapping)))


def read_mapping(path: str | Path) -> IntentMapping:
    return mapping_from_payload(json.loads(Path(path).read_text(encoding="utf-8")))


def write_landscape(path: str | Path, result: LandscapeResult) -> None:
    payload = {
        "assignments": {
            did: {
                "low_cluster": a.low_cluster,
                "top_cluster": a.top_cluster,
                "source": a.source,
                "reason": a.reason,
            }
            for did, a in result.assignments.items()
        },
        "volumes": result.volumes,
        "unassigned": result.unassigned,
        "source_counts": result.source_counts,
    }
    atomic_write_text(Path(path), canonical_json(payload))


def read_landscape(path: str | Path) -> LandscapeResult:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    assignments = {
        did: Assignment(
            low_cluster=a["low_cluster"],
            top_cluster=a["top_cluster"],
            source=str(a["source"]),
            reason=str(a.get("reason", "")),
        )
        for did, a in obj["assignments"].items()
    }
    return LandscapeResult(
        assignments=assignments,
        volumes={str(k): int(v) for k, v in obj["volumes"].items()},
        unassigned=int(obj["unassigned"]),
    )
