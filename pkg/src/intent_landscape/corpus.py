"""Dialogue ingestion and QA-context rendering.

A dialogue is an ordered list of two-channel utterances. For question
answering it is rendered into a single context string, one line per turn,
each prefixed with its channel name ("customer: " / "agent: "). The
rendered document keeps character-exact segments so spans reported by a
QA backend can be attributed to the turn and channel they came from.
"""

from __future__ import annotations

import csv
import io
import json
import re
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable

from .errors import CorpusError, RecordError

CUSTOMER = "customer"
AGENT = "agent"
CHANNELS = (CUSTOMER, AGENT)

# Turn delimiter inside a rendered context; utterances must never contain it.
_NEWLINE_RE = re.compile(r"[\r\n]+")

JSONL_KEYS = ("conversationId", "turnNumber", "channel", "utterance")


@dataclass(frozen=True)
class Utterance:
    dialogue_id: str
    turn_index: int
    channel: str
    text: str

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.turn_index < 0:
            raise ValueError(f"negative turn index {self.turn_index}")
        if not self.text.strip():
            raise ValueError("empty utterance text")
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("utterance text contains a newline")


@dataclass(frozen=True)
class Dialogue:
    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self) -> None:
        turns = [u.turn_index for u in self.utterances]
        if turns != list(range(len(turns))):
            raise CorpusError(
                f"dialogue {self.id!r}: turn indices not contiguous from 0: {turns}"
            )
        if not any(u.channel == CUSTOMER for u in self.utterances):
            raise CorpusError(f"dialogue {self.id!r} has no customer utterance")


@dataclass(frozen=True)
class Segment:
    """Half-open character range [start, end) of one rendered piece."""

    start: int
    end: int
    turn_index: int
    channel: str
    kind: str  # "prefix" | "utterance" | "newline"


@dataclass(frozen=True)
class ContextDocument:
    dialogue_id: str
    text: str
    segments: tuple[Segment, ...]

    def utterance_segment(self, turn_index: int) -> Segment:
        for seg in self.segments:
            if seg.kind == "utterance" and seg.turn_index == turn_index:
                return seg
        raise KeyError(turn_index)


def normalize_utterance_text(raw: str) -> str:
    """Replace intra-utterance newlines with single spaces and trim."""
    return _NEWLINE_RE.sub(" ", raw).strip()


def _build_dialogues(rows: Iterable[tuple[int, str, int, str, str]]) -> list[Dialogue]:
    """Group validated rows into dialogues, preserving first-seen id order."""
    by_id: dict[str, dict[int, Utterance]] = {}
    for row_no, dialogue_id, turn, channel, text in rows:
        turns = by_id.setdefault(dialogue_id, {})
        if turn in turns:
            raise CorpusError(
                f"duplicate turn {turn} in dialogue {dialogue_id!r} (row {row_no})"
            )
        turns[turn] = Utterance(dialogue_id, turn, channel, text)
    dialogues = []
    for dialogue_id, turns in by_id.items():
        utts = tuple(turns[t] for t in sorted(turns))
        dialogues.append(Dialogue(dialogue_id, utts))
    return dialogues


def _validate_row(row_no: int, dialogue_id, turn, channel, text) -> tuple:
    if dialogue_id is None or str(dialogue_id) == "":
        raise RecordError(row_no, "missing conversationId")
    try:
        turn_i = int(turn)
    except (TypeError, ValueError):
        raise RecordError(row_no, f"turnNumber {turn!r} is not an integer") from None
    if turn_i < 0:
        raise RecordError(row_no, f"negative turnNumber {turn_i}")
    if channel not in CHANNELS:
        raise RecordError(row_no, f"unknown channel {channel!r}")
    normalized = normalize_utterance_text(str(text or ""))
    if not normalized:
        raise RecordError(row_no, "empty utterance")
    return row_no, str(dialogue_id), turn_i, channel, normalized


def _iter_jsonl_rows(stream: io.TextIOBase):
    for row_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(row_no, f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise RecordError(row_no, "row is not a JSON object")
        yield _validate_row(
            row_no,
            obj.get("conversationId"),
            obj.get("turnNumber"),
            obj.get("channel"),
            obj.get("utterance"),
        )


def _iter_csv_rows(stream: io.TextIOBase):
    reader = csv.DictReader(stream)
    missing = set(JSONL_KEYS) - set(reader.fieldnames or [])
    if missing:
        raise CorpusError(f"CSV header missing columns: {sorted(missing)}")
    for row_no, row in enumerate(reader, start=2):  # row 1 is the header
        yield _validate_row(
            row_no,
            row.get("conversationId"),
            row.get("turnNumber"),
            row.get("channel"),
            row.get("utterance"),
        )


def parse_corpus(source: BinaryIO, format: str) -> list[Dialogue]:
    """Parse a JSONL or CSV corpus stream into dialogues.

    Rows must carry conversationId, turnNumber, channel and utterance.
    Malformed rows raise RecordError with the offending row number;
    duplicate (dialogue, turn) pairs raise CorpusError.
    """
    text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    if format == "jsonl":
        rows = _iter_jsonl_rows(text)
    elif format == "csv":
        rows = _iter_csv_rows(text)
    else:
        raise ValueError(f"unknown corpus format {format!r}")
    return _build_dialogues(rows)


def load_corpus(path: str | Path) -> list[Dialogue]:
    """Parse a corpus file, inferring the format from the file suffix."""
    path = Path(path)
    format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    with path.open("rb") as fh:
        return parse_corpus(fh, format)


def write_dialogues(path: str | Path, dialogues: Iterable[Dialogue]) -> None:
    """Write normalized dialogues as ingestion-compatible JSONL."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for d in dialogues:
            for u in d.utterances:
                fh.write(
                    json.dumps(
                        {
                            "conversationId": u.dialogue_id,
                            "turnNumber": u.turn_index,
                            "channel": u.channel,
                            "utterance": u.text,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


def render_context(dialogue: Dialogue) -> ContextDocument:
    """Render a dialogue into its QA context string.

    Each turn contributes exactly "<channel>: <utterance>\\n"; the returned
    segments tile the text with one prefix, one utterance and one newline
    segment per turn.
    """
    parts: list[str] = []
    segments: list[Segment] = []
    pos = 0
    for u in dialogue.utterances:
        prefix = f"{u.channel}: "
        segments.append(Segment(pos, pos + len(prefix), u.turn_index, u.channel, "prefix"))
        pos += len(prefix)
        segments.append(Segment(pos, pos + len(u.text), u.turn_index, u.channel, "utterance"))
        pos += len(u.text)
        segments.append(Segment(pos, pos + 1, u.turn_index, u.channel, "newline"))
        pos += 1
        parts.append(prefix + u.text + "\n")
    return ContextDocument(dialogue.id, "".join(parts), tuple(segments))


def char_offset_to_turn(ctx: ContextDocument, offset: int) -> int | None:
    """Return the turn whose utterance segment contains offset, else None.

    Prefix and newline positions are not part of any utterance and map to
    None. Binary search over segment starts.
    """
    if offset < 0 or offset >= len(ctx.text):
        raise IndexError(f"offset {offset} outside [0, {len(ctx.text)})")
    starts = [seg.start for seg in ctx.segments]
    idx = bisect_right(starts, offset) - 1
    seg = ctx.segments[idx]
    if seg.kind == "utterance":
        return seg.turn_index
    return None
