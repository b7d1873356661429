"""Zero-shot evaluation of the recovered clusters against gold intents.

Each valid span is classified to the most cosine-similar low-level
center; below the abstention threshold the span stays UNLABELED. The
analyst mapping turns predicted clusters into intent names, which are
scored one-vs-rest against turn-level gold labels. Abstentions hurt the
gold intent's recall but are never counted toward any intent's
precision denominator.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .artifacts import atomic_write_text, canonical_json
from .errors import RecordError, UnmappedClusterError
from .landscape import IntentMapping
from .validation import ValidatedSpan

UNLABELED = "UNLABELED"

DISCARDED_MARKERS = frozenset(
    {
        "openinggreeting",
        "closinggreeting",
        "confirmation",
        "rejection",
        "contentonly",
        "thankyou",
        "outofdomain",
    }
)

GOLD_KEYS = ("conversationId", "turnNumber", "intent")


@dataclass(frozen=True)
class GoldLabel:
    dialogue_id: str
    turn_index: int
    intent: str


@dataclass(frozen=True)
class EvalParams:
    unlabeled_threshold: float = 0.4
    min_support: int = 10

    def __post_init__(self) -> None:
        if not (0.0 < self.unlabeled_threshold < 1.0):
            raise ValueError("unlabeled_threshold must be in (0, 1)")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")


@dataclass(frozen=True)
class IntentRow:
    intent: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvaluationReport:
    rows: list[IntentRow]
    unlabeled_count: int
    confusion: dict[str, dict[str, int]]
    excluded: dict[str, int]


def parse_gold(source: BinaryIO, format: str) -> list[GoldLabel]:
    """Parse gold labels from JSONL or CSV, dropping conversational markers."""
    text = io.TextIOWrapper(source, encoding="utf-8")
    out: list[GoldLabel] = []
    if format == "jsonl":
        for row_no, line in enumerate(text, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(row_no, f"bad JSON: {exc}") from exc
            out.extend(_gold_from_record(obj, row_no))
    elif format == "csv":
        reader = csv.DictReader(text)
        for row_no, obj in enumerate(reader, start=2):
            out.extend(_gold_from_record(obj, row_no))
    else:
        raise ValueError(f"unknown gold format {format!r}")
    return out


def _gold_from_record(obj: dict, row_no: int) -> list[GoldLabel]:
    for key in GOLD_KEYS:
        if key not in obj or obj[key] in (None, ""):
            raise RecordError(row_no, f"missing {key}")
    try:
        turn = int(obj["turnNumber"])
    except (TypeError, ValueError) as exc:
        raise RecordError(row_no, f"bad turnNumber {obj['turnNumber']!r}") from exc
    intent = str(obj["intent"]).strip()
    if intent in DISCARDED_MARKERS:
        return []
    return [GoldLabel(str(obj["conversationId"]), turn, intent)]


def load_gold(path: str | Path) -> list[GoldLabel]:
    path = Path(path)
    format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    with path.open("rb") as fh:
        return parse_gold(fh, format)


def zero_shot_classify(
    span_vector: np.ndarray,
    centers: Sequence[tuple[int, np.ndarray]],
    params: EvalParams,
) -> int | None:
    """Most-similar center's cluster id, or None when below threshold.

    Similarities are computed against the raw (not renormalized) mean
    centers; argmax ties go to the smallest cluster id.
    """
    if not centers:
        raise ValueError("centers must be non-empty")
    s = np.asarray(span_vector, dtype=np.float64)
    ns = float(np.linalg.norm(s))
    if ns == 0.0:
        raise ValueError("cannot classify a zero vector")
    best: tuple[float, int] | None = None
    for cid, center in centers:
        c = np.asarray(center, dtype=np.float64)
        nc = float(np.linalg.norm(c))
        if nc == 0.0:
            raise ValueError(f"center {cid} is a zero vector")
        sim = float(np.dot(s, c)) / (ns * nc)
        # Maximize similarity; on exact ties prefer the smaller id.
        if best is None or sim > best[0] or (sim == best[0] and cid < best[1]):
            best = (sim, cid)
    assert best is not None
    if best[0] < params.unlabeled_threshold:
        return None
    return best[1]


def align_gold(
    valid_by_dialogue: dict[str, list[ValidatedSpan]], gold: list[GoldLabel]
) -> tuple[list[tuple[ValidatedSpan, str]], dict[str, int]]:
    """Join each valid span to the gold intent of its source turn.

    Spans from unannotated dialogues or unlabeled turns (which includes
    turns whose only label was a discarded marker) are excluded; the
    exclusion tallies come back alongside the pairs.
    """
    label_of: dict[tuple[str, int], str] = {}
    dialogues_in_gold = set()
    for g in gold:
        label_of[(g.dialogue_id, g.turn_index)] = g.intent
        dialogues_in_gold.add(g.dialogue_id)
    pairs: list[tuple[ValidatedSpan, str]] = []
    excluded = {"unannotated_dialogue": 0, "unlabeled_turn": 0}
    for dialogue_id, spans in valid_by_dialogue.items():
        for span in spans:
            if not span.valid or span.source_turn is None:
                continue
            if dialogue_id not in dialogues_in_gold:
                excluded["unannotated_dialogue"] += 1
                continue
            intent = label_of.get((dialogue_id, span.source_turn))
            if intent is None:
                excluded["unlabeled_turn"] += 1
                continue
            pairs.append((span, intent))
    return pairs, excluded


def classification_report(
    pairs: Sequence[tuple[ValidatedSpan, str]],
    predictions: Sequence[int | None],
    mapping: IntentMapping,
    top_of_low: dict[int, int],
    params: EvalParams,
    excluded: dict[str, int] | None = None,
) -> EvaluationReport:
    """One-vs-rest P/R/F1 per gold intent over span-level predictions.

    predictions[i] is the low-level cluster for pairs[i] (None for
    UNLABELED). Reported rows are the gold intents with support strictly
    above min_support.
    """
    if len(pairs) != len(predictions):
        raise ValueError(f"{len(pairs)} pairs with {len(predictions)} predictions")
    unmapped = sorted(
        {
            top_of_low[p]
            for p in predictions
            if p is not None and top_of_low[p] not in mapping.entries
        }
    )
    if unmapped:
        raise UnmappedClusterError(unmapped)

    predicted_intents: list[str] = []
    unlabeled_count = 0
    for p in predictions:
        if p is None:
            predicted_intents.append(UNLABELED)
            unlabeled_count += 1
        else:
            predicted_intents.append(mapping.entries[top_of_low[p]].intent)

    confusion: dict[str, dict[str, int]] = {}
    for (_span, gold_intent), pred in zip(pairs, predicted_intents):
        row = confusion.setdefault(gold_intent, {})
        row[pred] = row.get(pred, 0) + 1

    gold_intents = sorted({gold for _s, gold in pairs})
    rows: list[IntentRow] = []
    for intent in gold_intents:
        tp = fp = fn = 0
        for (_span, gold_intent), pred in zip(pairs, predicted_intents):
            if gold_intent == intent and pred == intent:
                tp += 1
            elif gold_intent == intent:
                fn += 1
            elif pred == intent:
                fp += 1
        support = tp + fn
        if support <= params.min_support:
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / support if support else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        rows.append(IntentRow(intent, precision, recall, f1, support))
    return EvaluationReport(
        rows=rows,
        unlabeled_count=unlabeled_count,
        confusion=confusion,
        excluded=dict(excluded or {}),
    )


def write_report(path: str | Path, report: EvaluationReport, meta: dict) -> None:
    payload = {
        "rows": [
            {
                "intent": r.intent,
                "precision": r.precision,
                "recall": r.recall,
                "f1": r.f1,
                "support": r.support,
            }
            for r in report.rows
        ],
        "unlabeled_count": report.unlabeled_count,
        "confusion": report.confusion,
        "excluded": report.excluded,
        "meta": meta,
    }
    atomic_write_text(Path(path), canonical_json(payload))


def read_report(path: str | Path) -> tuple[EvaluationReport, dict]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    report = EvaluationReport(
        rows=[
            IntentRow(
                intent=str(r["intent"]),
                precision=float(r["precision"]),
                recall=float(r["recall"]),
                f1=float(r["f1"]),
                support=int(r["support"]),
            )
            for r in obj["rows"]
        ],
        unlabeled_count=int(obj["unlabeled_count"]),
        confusion={
            g: {p: int(c) for p, c in row.items()}
            for g, row in obj["confusion"].items()
        },
        excluded={k: int(v) for k, v in obj.get("excluded", {}).items()},
    )
    return report, obj.get("meta", {})
