"""Deterministic synthetic corpus for end-to-end pipeline runs.

Five intents, a fixed template cycle per intent, and a replay candidates
file with hand-positioned offsets. Spans carry an intent keyword that
the mock embedding backend maps to a family anchor, so the pipeline
recovers the five intents exactly and reproducibly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .clustering import LowLevelClustering
from .corpus import AGENT, CUSTOMER, Dialogue, Utterance, render_context, write_dialogues
from .extraction import CandidateSpan, write_candidates
from .landscape import IntentMapping

AGENT_GREETING = "hello how may i help you today"
AGENT_REPLY = "sure i can help with that"
AGENT_REPLY_SPAN = "i can help with that"
CUSTOMER_THANKS = "thank you so much"
CUSTOMER_THANKS_SPAN = "thank you"

# keyword -> intent; family_of scans these in order.
FAMILY_KEYWORDS: tuple[tuple[str, str], ...] = (
    ("flight", "bookflight"),
    ("boarding", "getboardingpass"),
    ("balance", "checkbalance"),
    ("lost", "reportlostcard"),
    ("address", "updateaddress"),
)

TEMPLATES: dict[str, tuple[str, ...]] = {
    "bookflight": (
        "i want to book a flight to boston",
        "i need to book a flight for tomorrow",
        "can i book a flight to denver please",
        "i would like to book a new flight",
        "help me book a direct flight",
    ),
    "getboardingpass": (
        "i want to get my boarding pass",
        "can you send me my boarding pass",
        "i need my boarding pass printed",
        "please send my boarding pass again",
        "i want to print my boarding pass",
    ),
    "checkbalance": (
        "i want to check my account balance",
        "can you check my balance please",
        "i need to know my balance",
        "check the balance on my card",
        "i want to see my balance",
    ),
    "reportlostcard": (
        "i want to report my lost card",
        "i need to report a lost card",
        "my card got lost please report it",
        "i lost my credit card help me",
        "report my lost card right away",
    ),
    "updateaddress": (
        "i want to update my address",
        "i need to change my address",
        "please update my mailing address",
        "can you update my home address",
        "i moved and need to update my address",
    ),
}

INTENTS: tuple[str, ...] = tuple(intent for _kw, intent in FAMILY_KEYWORDS)


def family_of(text: str) -> str:
    """Map a span text to its intent family; unknown texts are their own family."""
    for keyword, intent in FAMILY_KEYWORDS:
        if keyword in text:
            return intent
    return text


def build_dialogue(dialogue_id: str, intent_utterance: str) -> Dialogue:
    return Dialogue(
        id=dialogue_id,
        utterances=(
            Utterance(dialogue_id, 0, AGENT, AGENT_GREETING),
            Utterance(dialogue_id, 1, CUSTOMER, intent_utterance),
            Utterance(dialogue_id, 2, AGENT, AGENT_REPLY),
            Utterance(dialogue_id, 3, CUSTOMER, CUSTOMER_THANKS),
        ),
    )


def build_candidates(dialogue: Dialogue) -> list[CandidateSpan]:
    """Three ranked candidates: the intent span plus two decoys.

    The decoys fail validation (agent channel / no action-object), so
    every dialogue survives the funnel through its rank-0 span.
    """
    ctx = render_context(dialogue)

    def span_at(turn: int, text: str, rank: int, score: float) -> CandidateSpan:
        seg = ctx.utterance_segment(turn)
        offset = ctx.text.index(text, seg.start, seg.end)
        return CandidateSpan(
            dialogue_id=dialogue.id,
            rank=rank,
            text=text,
            score=score,
            char_start=offset,
            char_end=offset + len(text),
            impossible=False,
        )

    intent_text = dialogue.utterances[1].text
    return [
        span_at(1, intent_text, 0, 0.9),
        span_at(2, AGENT_REPLY_SPAN, 1, 0.4),
        span_at(3, CUSTOMER_THANKS_SPAN, 2, 0.2),
    ]


def generate_corpus(
    out_dir: str | Path, dialogues_per_intent: int = 40
) -> dict[str, Path]:
    """Write dialogues.jsonl, candidates.jsonl, gold.jsonl, scheme.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dialogues: list[Dialogue] = []
    total = dialogues_per_intent * len(INTENTS)
    for i in range(total):
        intent = INTENTS[i % len(INTENTS)]
        templates = TEMPLATES[intent]
        text = templates[(i // len(INTENTS)) % len(templates)]
        dialogues.append(build_dialogue(f"syn-{i:04d}", text))

    paths = {
        "dialogues": out_dir / "corpus.jsonl",
        "candidates": out_dir / "candidates.jsonl",
        "gold": out_dir / "gold.jsonl",
        "scheme": out_dir / "scheme.json",
    }
    write_dialogues(paths["dialogues"], dialogues)
    write_candidates(
        paths["candidates"], {d.id: build_candidates(d) for d in dialogues}
    )
    with paths["gold"].open("w", encoding="utf-8", newline="\n") as fh:
        for i, dialogue in enumerate(dialogues):
            intent = INTENTS[i % len(INTENTS)]
            for turn, label in ((0, "openinggreeting"), (1, intent), (3, "thankyou")):
                fh.write(
                    json.dumps(
                        {
                            "conversationId": dialogue.id,
                            "turnNumber": turn,
                            "intent": label,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    paths["scheme"].write_text(
        json.dumps({"intents": sorted(INTENTS)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return paths


def auto_mapping_ops(
    mapping: IntentMapping,
    top_of_low: dict[int, int],
    clustering: LowLevelClustering,
    texts: list[str],
) -> list[dict]:
    """Mapping ops a perfect analyst would issue on the synthetic corpus.

    Each top cluster is renamed to the majority intent family of its
    member spans; top clusters sharing a family are merged into the
    smallest id.
    """
    members_of_top: dict[int, list[int]] = {}
    for cl in clustering.clusters:
        top = top_of_low[cl.id]
        members_of_top.setdefault(top, []).extend(cl.members)
    majority: dict[int, str] = {}
    for top in sorted(mapping.entries):
        counts: dict[str, int] = {}
        for i in members_of_top.get(top, []):
            fam = family_of(texts[i])
            counts[fam] = counts.get(fam, 0) + 1
        if not counts:
            continue
        majority[top] = min(counts, key=lambda fam: (-counts[fam], fam))
    tops_by_intent: dict[str, list[int]] = {}
    for top in sorted(majority):
        tops_by_intent.setdefault(majority[top], []).append(top)
    ops: list[dict] = []
    for intent in sorted(tops_by_intent):
        first, *rest = tops_by_intent[intent]
        ops.append({"op": "rename", "id": first, "intent": intent})
        for other in rest:
            ops.append({"op": "merge", "from": other, "into": first})
    return ops
