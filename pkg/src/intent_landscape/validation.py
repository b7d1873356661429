"""Sequential span validation and the dialogue-survival funnel.

Four gates run in a fixed order: drop dialogues with any impossible
candidate, require an action and an object (POS), require sentence-like
shape (length bounds, no channel artefacts), require the span to sit
inside a single customer utterance. The funnel report counts, after
each gate, how many dialogues still have at least one live candidate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .corpus import CUSTOMER, ContextDocument
from .errors import ExtractionError
from .extraction import CandidateSpan
from .tagging import TAG_NOUN, TAG_PROPN, TAG_VERB, TaggedToken, TaggerBackend

logger = logging.getLogger(__name__)

CHANNEL_ARTEFACTS = ("customer: ", "agent: ", "\n")
MIN_TOKENS = 2
MAX_TOKENS = 12


@dataclass(frozen=True)
class ValidatedSpan:
    candidate: CandidateSpan
    pos_ok: bool
    sentence_ok: bool
    channel_ok: bool
    source_turn: int | None

    @property
    def valid(self) -> bool:
        return self.pos_ok and self.sentence_ok and self.channel_ok


@dataclass(frozen=True)
class FunnelReport:
    initial_dialogues: int
    after_impossible: int
    after_pos: int
    after_sentence: int
    after_channel: int

    def __post_init__(self) -> None:
        counts = (
            self.initial_dialogues,
            self.after_impossible,
            self.after_pos,
            self.after_sentence,
            self.after_channel,
        )
        for earlier, later in zip(counts, counts[1:]):
            if later > earlier:
                raise ValueError(f"funnel counts must be non-increasing, got {counts}")

    @property
    def percentages(self) -> tuple[float, float, float, float]:
        if self.initial_dialogues == 0:
            return (0.0, 0.0, 0.0, 0.0)
        return tuple(  # type: ignore[return-value]
            100.0 * count / self.initial_dialogues
            for count in (
                self.after_impossible,
                self.after_pos,
                self.after_sentence,
                self.after_channel,
            )
        )


def filter_impossible(dialogue_candidates: list[CandidateSpan]) -> tuple[bool, str]:
    """Dialogue-level keep/drop: drop if ANY candidate is the impossible marker.

    Returns (keep, reason); reason is "" when kept.
    """
    if not dialogue_candidates:
        return False, "no candidates"
    if any(c.impossible for c in dialogue_candidates):
        return False, "impossible candidate"
    return True, ""


def validate_pos(tokens: list[TaggedToken]) -> bool:
    """Action-object test: at least one VERB and one NOUN or PROPN."""
    has_verb = any(t.tag == TAG_VERB for t in tokens)
    has_object = any(t.tag in (TAG_NOUN, TAG_PROPN) for t in tokens)
    return has_verb and has_object


def validate_sentence(text: str) -> bool:
    """Shape test: no channel artefacts, 2..12 whitespace tokens."""
    for artefact in CHANNEL_ARTEFACTS:
        if artefact in text:
            return False
    n = len(text.split())
    return MIN_TOKENS <= n <= MAX_TOKENS


def validate_channel(
    span: CandidateSpan, ctx: ContextDocument
) -> tuple[bool, int | None]:
    """Channel test: span lies entirely inside one customer utterance.

    Returns (ok, source_turn). A span that straddles segment boundaries
    fails (cross-turn); a span inside an agent utterance fails with its
    turn index still reported for diagnostics.
    """
    for seg in ctx.segments:
        if seg.kind != "utterance":
            continue
        if seg.start <= span.char_start and span.char_end <= seg.end:
            if seg.channel == CUSTOMER:
                return True, seg.turn_index
            return False, seg.turn_index
    return False, None


def run_funnel(
    corpus_candidates: dict[str, list[CandidateSpan]],
    ctxs: dict[str, ContextDocument],
    tagger: TaggerBackend,
) -> tuple[FunnelReport, dict[str, list[ValidatedSpan]]]:
    """Apply the four validations in order and count surviving dialogues.

    A dialogue survives stage k iff at least one of its candidates passes
    every stage up to and including k. Valid spans (all gates passed) are
    returned for dialogues that survive the whole funnel, rank order
    preserved.
    """
    initial = len(corpus_candidates)
    kept_ids: list[str] = []
    for dialogue_id, candidates in corpus_candidates.items():
        keep, reason = filter_impossible(candidates)
        if keep:
            kept_ids.append(dialogue_id)
        else:
            logger.debug("dropped %s at impossible stage: %s", dialogue_id, reason)
    after_impossible = len(kept_ids)

    # Tag every surviving candidate in one batch; a backend failure fails
    # the POS gate for the affected spans but never kills the run.
    flat: list[tuple[str, CandidateSpan]] = [
        (did, c) for did in kept_ids for c in corpus_candidates[did]
    ]
    texts = [c.text for _, c in flat]
    try:
        tag_lists = tagger.tag_many(texts) if texts else []
        if len(tag_lists) != len(texts):
            raise ExtractionError(
                f"tagger returned {len(tag_lists)} results for {len(texts)} spans"
            )
    except ExtractionError as exc:
        logger.warning("tagger failure, POS gate fails for this batch: %s", exc)
        tag_lists = [[] for _ in texts]

    validated: dict[str, list[ValidatedSpan]] = {did: [] for did in kept_ids}
    for (dialogue_id, candidate), tokens in zip(flat, tag_lists):
        pos_ok = bool(tokens) and validate_pos(tokens)
        sentence_ok = validate_sentence(candidate.text)
        channel_ok, source_turn = validate_channel(candidate, ctxs[dialogue_id])
        validated[dialogue_id].append(
            ValidatedSpan(candidate, pos_ok, sentence_ok, channel_ok, source_turn)
        )

    def survivors(*flags: str) -> int:
        count = 0
        for spans in validated.values():
            if any(all(getattr(s, f) for f in flags) for s in spans):
                count += 1
        return count

    after_pos = survivors("pos_ok")
    after_sentence = survivors("pos_ok", "sentence_ok")
    after_channel = survivors("pos_ok", "sentence_ok", "channel_ok")

    valid_by_dialogue = {
        did: [s for s in spans if s.valid]
        for did, spans in validated.items()
        if any(s.valid for s in spans)
    }
    report = FunnelReport(
        initial_dialogues=initial,
        after_impossible=after_impossible,
        after_pos=after_pos,
        after_sentence=after_sentence,
        after_channel=after_channel,
    )
    return report, valid_by_dialogue


def write_valid_spans(
    path: str | Path, valid_by_dialogue: dict[str, list[ValidatedSpan]]
) -> None:
    """Write fully valid spans as JSONL, one span per line."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for dialogue_id in valid_by_dialogue:
            for s in valid_by_dialogue[dialogue_id]:
                c = s.candidate
                fh.write(
                    json.dumps(
                        {
                            "dialogue_id": c.dialogue_id,
                            "rank": c.rank,
                            "text": c.text,
                            "score": c.score,
                            "char_start": c.char_start,
                            "char_end": c.char_end,
                            "source_turn": s.source_turn,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


def read_valid_spans(path: str | Path) -> dict[str, list[ValidatedSpan]]:
    by_dialogue: dict[str, list[ValidatedSpan]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            candidate = CandidateSpan(
                dialogue_id=str(obj["dialogue_id"]),
                rank=int(obj["rank"]),
                text=str(obj["text"]),
                score=float(obj["score"]),
                char_start=int(obj["char_start"]),
                char_end=int(obj["char_end"]),
                impossible=False,
            )
            span = ValidatedSpan(
                candidate,
                pos_ok=True,
                sentence_ok=True,
                channel_ok=True,
                source_turn=int(obj["source_turn"]),
            )
            by_dialogue.setdefault(candidate.dialogue_id, []).append(span)
    for spans in by_dialogue.values():
        spans.sort(key=lambda s: s.candidate.rank)
    return by_dialogue


def write_funnel_report(path: str | Path, report: FunnelReport, meta: dict) -> None:
    """Write the funnel report JSON with its run metadata block."""
    pct = report.percentages
    payload = {
        "initial_dialogues": report.initial_dialogues,
        "after_impossible": report.after_impossible,
        "after_pos": report.after_pos,
        "after_sentence": report.after_sentence,
        "after_channel": report.after_channel,
        "percentages": {
            "after_impossible": pct[0],
            "after_pos": pct[1],
            "after_sentence": pct[2],
            "after_channel": pct[3],
        },
        "meta": meta,
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def read_funnel_report(path: str | Path) -> tuple[FunnelReport, dict]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    report = FunnelReport(
        initial_dialogues=int(obj["initial_dialogues"]),
        after_impossible=int(obj["after_impossible"]),
        after_pos=int(obj["after_pos"]),
        after_sentence=int(obj["after_sentence"]),
        after_channel=int(obj["after_channel"]),
    )
    return report, obj.get("meta", {})
