"""Shared builders for the test suite.

Everything here is deterministic given the caller's Random instance so
that property-style tests can shrink and replay.
"""

from __future__ import annotations

import random

import numpy as np
from hypothesis import settings

from intent_landscape.corpus import AGENT, CUSTOMER, Dialogue, Utterance
from intent_landscape.extraction import CandidateSpan

# The sandbox runs cold; generous deadlines keep hypothesis from flaking
# on the first (slow) example.
settings.register_profile("suite", deadline=None, derandomize=True)
settings.load_profile("suite")

WORD_POOL = (
    "i", "want", "need", "to", "check", "my", "seat", "flight", "ticket",
    "book", "a", "new", "cable", "service", "please", "help", "balance",
    "account", "card", "hello", "thanks", "you", "the", "is", "can",
    "change", "address", "phone", "bill", "status",
)


def make_dialogue(dialogue_id: str, turns: list[tuple[str, str]]) -> Dialogue:
    """Build a dialogue from (channel, text) pairs, turn indices 0..n-1."""
    utts = tuple(
        Utterance(dialogue_id, i, channel, text)
        for i, (channel, text) in enumerate(turns)
    )
    return Dialogue(dialogue_id, utts)


def random_dialogue(rng: random.Random, dialogue_id: str) -> Dialogue:
    turns: list[tuple[str, str]] = []
    n_turns = rng.randint(1, 6)
    for i in range(n_turns):
        channel = CUSTOMER if i == 0 else rng.choice((CUSTOMER, AGENT))
        n_words = rng.randint(1, 8)
        text = " ".join(rng.choice(WORD_POOL) for _ in range(n_words))
        turns.append((channel, text))
    return make_dialogue(dialogue_id, turns)


def random_corpus(rng: random.Random, n_dialogues: int) -> list[Dialogue]:
    return [random_dialogue(rng, f"d{i:04d}") for i in range(n_dialogues)]


def random_candidates(rng: random.Random, dialogue: Dialogue) -> list[CandidateSpan]:
    """Candidates slicing real context ranges, with occasional impossibles.

    Offsets always slice back to the text (the extract-stage invariant);
    validity under the funnel gates is left to chance.
    """
    from intent_landscape.corpus import render_context

    ctx = render_context(dialogue)
    spans: list[CandidateSpan] = []
    n = rng.randint(0, 6)
    score = 1.0
    for rank in range(n):
        score = max(0.0, score - rng.random() * 0.2)
        if rng.random() < 0.1:
            spans.append(CandidateSpan(dialogue.id, rank, "", score, 0, 0, True))
            continue
        start = rng.randrange(0, len(ctx.text))
        end = rng.randrange(start + 1, min(len(ctx.text), start + 60) + 1)
        text = ctx.text[start:end]
        if text == "":
            spans.append(CandidateSpan(dialogue.id, rank, "", score, 0, 0, True))
        else:
            spans.append(CandidateSpan(dialogue.id, rank, text, score, start, end, False))
    return spans


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n random unit vectors, dimension dim."""
    v = rng.normal(size=(n, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return v / norms
