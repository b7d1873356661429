"""Top-K intent-span candidate extraction through a QA backend.

The engine never runs model inference in-process. Candidates come either
from an HTTP extractive-QA service or from a replay file recorded on a
previous run, which is the primary mode for tests and re-runs. Offsets
are mandatory and are verified against the rendered context; a candidate
whose offsets do not slice back to its text is a data-integrity failure,
never silently repaired.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .corpus import ContextDocument
from .errors import DataIntegrityError, ExtractionError

QA_URL_ENV = "INTENT_LANDSCAPE_QA_URL"

# Prompt questions, verbatim (the first keeps its original spelling).
QUESTION_MAIN_REASON = "What is the main reason of the call mentionned by the customer?"
QUESTION_AGENT_HELP = "What can the agent help the customer with?"
QUESTION_FIRST_INTENT = "What is the customer's first intent?"
QUESTION_MAIN_REASON_RESPELLED = (
    "What is the main reason of the call mentioned by the customer?"
)


def default_questions() -> list[str]:
    """The three stock prompt questions, in preference order."""
    return [QUESTION_MAIN_REASON, QUESTION_AGENT_HELP, QUESTION_FIRST_INTENT]


@dataclass(frozen=True)
class ExtractionConfig:
    question: str
    top_k: int = 10
    handle_impossible: bool = True

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be non-empty")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class CandidateSpan:
    dialogue_id: str
    rank: int
    text: str
    score: float
    char_start: int
    char_end: int
    impossible: bool


@dataclass(frozen=True)
class QAAnswer:
    """One raw backend answer; the impossible answer is text="" start=end=0."""

    text: str
    score: float
    start: int
    end: int


class QABackend(Protocol):
    def answers(self, ctx: ContextDocument, cfg: ExtractionConfig) -> list[QAAnswer]:
        ...


class HTTPQABackend:
    """Client for the QA wire protocol (JSON over HTTP POST)."""

    def __init__(self, url: str | None = None, timeout: float = 60.0) -> None:
        self.url = url or os.environ.get(QA_URL_ENV, "")
        if not self.url:
            raise ValueError(f"no QA backend URL (flag or {QA_URL_ENV})")
        self.timeout = timeout
        self._session = requests.Session()

    def answers(self, ctx: ContextDocument, cfg: ExtractionConfig) -> list[QAAnswer]:
        payload = {
            "question": cfg.question,
            "context": ctx.text,
            "top_k": cfg.top_k,
            "handle_impossible_answer": cfg.handle_impossible,
        }
        try:
            resp = self._session.post(self.url, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ExtractionError(f"QA backend failure for {ctx.dialogue_id!r}: {exc}") from exc
        answers = []
        for item in body:
            if "start" not in item or "end" not in item:
                raise DataIntegrityError(
                    ctx.dialogue_id, len(answers), "backend answer lacks offsets"
                )
            answers.append(
                QAAnswer(
                    text=str(item["answer"]),
                    score=float(item["score"]),
                    start=int(item["start"]),
                    end=int(item["end"]),
                )
            )
        return answers


class ReplayQABackend:
    """Re-emit candidates recorded in a JSONL candidates file."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._by_dialogue = read_candidates(self.path)

    def answers(self, ctx: ContextDocument, cfg: ExtractionConfig) -> list[QAAnswer]:
        spans = self._by_dialogue.get(ctx.dialogue_id)
        if spans is None:
            raise ExtractionError(
                f"replay file {self.path} has no candidates for {ctx.dialogue_id!r}"
            )
        return [
            QAAnswer(text=s.text, score=s.score, start=s.char_start, end=s.char_end)
            for s in spans
        ]


def extract_candidates(
    ctx: ContextDocument, cfg: ExtractionConfig, backend: QABackend
) -> list[CandidateSpan]:
    """Rank-ordered candidates for one dialogue, offset-verified.

    Scores are clamped to [0, 1]; ordering is by clamped score descending
    with backend order preserved among ties, truncated to top_k.
    """
    answers = backend.answers(ctx, cfg)
    clamped = [
        QAAnswer(a.text, min(1.0, max(0.0, a.score)), a.start, a.end) for a in answers
    ]
    ranked = sorted(clamped, key=lambda a: -a.score)[: cfg.top_k]
    spans: list[CandidateSpan] = []
    for rank, a in enumerate(ranked):
        impossible = a.text == ""
        if impossible:
            spans.append(CandidateSpan(ctx.dialogue_id, rank, "", a.score, 0, 0, True))
            continue
        if not (0 <= a.start <= a.end <= len(ctx.text)):
            raise DataIntegrityError(
                ctx.dialogue_id, rank, f"offsets ({a.start}, {a.end}) out of bounds"
            )
        if ctx.text[a.start : a.end] != a.text:
            raise DataIntegrityError(
                ctx.dialogue_id,
                rank,
                f"context slice {ctx.text[a.start:a.end]!r} != answer {a.text!r}",
            )
        spans.append(
            CandidateSpan(ctx.dialogue_id, rank, a.text, a.score, a.start, a.end, False)
        )
    return spans


def extract_corpus(
    ctxs: list[ContextDocument],
    cfg: ExtractionConfig,
    backend: QABackend,
    max_parallel: int = 4,
) -> dict[str, list[CandidateSpan]]:
    """Extract candidates for many dialogues with bounded parallelism.

    Results are merged in the input dialogue order regardless of request
    completion order.
    """
    if max_parallel <= 1 or len(ctxs) <= 1:
        return {ctx.dialogue_id: extract_candidates(ctx, cfg, backend) for ctx in ctxs}
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        results = list(pool.map(lambda c: extract_candidates(c, cfg, backend), ctxs))
    return {ctx.dialogue_id: spans for ctx, spans in zip(ctxs, results)}


def write_candidates(path: str | Path, spans_by_dialogue: dict[str, list[CandidateSpan]]) -> None:
    """Write a replay candidates file (JSONL, one candidate per line)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for dialogue_id in spans_by_dialogue:
            for s in spans_by_dialogue[dialogue_id]:
                fh.write(
                    json.dumps(
                        {
                            "dialogue_id": s.dialogue_id,
                            "rank": s.rank,
                            "text": s.text,
                            "score": s.score,
                            "start": s.char_start,
                            "end": s.char_end,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


def read_candidates(path: str | Path) -> dict[str, list[CandidateSpan]]:
    """Read a replay candidates file back into rank-sorted spans."""
    by_dialogue: dict[str, list[CandidateSpan]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            text = str(obj["text"])
            span = CandidateSpan(
                dialogue_id=str(obj["dialogue_id"]),
                rank=int(obj["rank"]),
                text=text,
                score=float(obj["score"]),
                char_start=int(obj["start"]),
                char_end=int(obj["end"]),
                impossible=text == "",
            )
            by_dialogue.setdefault(span.dialogue_id, []).append(span)
    for spans in by_dialogue.values():
        spans.sort(key=lambda s: s.rank)
    return by_dialogue


def candidate_file_spans(
    spans_by_dialogue: dict[str, list[CandidateSpan]]
) -> Iterable[CandidateSpan]:
    for spans in spans_by_dialogue.values():
        yield from spans
