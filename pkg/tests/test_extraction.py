"""Candidate extraction: ranking, offsets, replay round trip."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from conftest import make_dialogue
from intent_landscape.corpus import AGENT, CUSTOMER, render_context
from intent_landscape.errors import DataIntegrityError, ExtractionError
from intent_landscape.extraction import (
    CandidateSpan,
    ExtractionConfig,
    HTTPQABackend,
    QAAnswer,
    QUESTION_AGENT_HELP,
    QUESTION_FIRST_INTENT,
    QUESTION_MAIN_REASON,
    QUESTION_MAIN_REASON_RESPELLED,
    ReplayQABackend,
    default_questions,
    extract_candidates,
    extract_corpus,
    read_candidates,
    write_candidates,
)


class FixedBackend:
    def __init__(self, answers):
        self._answers = answers
        self.calls = []

    def answers(self, ctx, cfg):
        self.calls.append(ctx.dialogue_id)
        return list(self._answers.get(ctx.dialogue_id, self._answers.get(None, [])))


@pytest.fixture
def ctx():
    d = make_dialogue(
        "d1", [(CUSTOMER, "i want to book a flight"), (AGENT, "sure i can help")]
    )
    return render_context(d)


def answer_at(ctx, text, score):
    start = ctx.text.index(text)
    return QAAnswer(text=text, score=score, start=start, end=start + len(text))


class TestQuestions:
    def test_primary_question_keeps_original_spelling(self):
        assert (
            QUESTION_MAIN_REASON
            == "What is the main reason of the call mentionned by the customer?"
        )

    def test_alternate_questions(self):
        assert QUESTION_AGENT_HELP == "What can the agent help the customer with?"
        assert QUESTION_FIRST_INTENT == "What is the customer's first intent?"
        assert (
            QUESTION_MAIN_REASON_RESPELLED
            == "What is the main reason of the call mentioned by the customer?"
        )

    def test_default_question_order(self):
        assert default_questions() == [
            QUESTION_MAIN_REASON,
            QUESTION_AGENT_HELP,
            QUESTION_FIRST_INTENT,
        ]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExtractionConfig(question="")
        with pytest.raises(ValueError):
            ExtractionConfig(question="q", top_k=0)
        assert ExtractionConfig(question="q").top_k == 10
        assert ExtractionConfig(question="q").handle_impossible is True


class TestExtractCandidates:
    def test_orders_by_clamped_score_with_stable_ties(self, ctx):
        backend = FixedBackend(
            {
                None: [
                    answer_at(ctx, "book a flight", 0.5),
                    answer_at(ctx, "i want", 0.9),
                    answer_at(ctx, "a flight", 0.5),
                    answer_at(ctx, "flight", 1.5),  # clamps to 1.0
                ]
            }
        )
        spans = extract_candidates(ctx, ExtractionConfig(question="q"), backend)
        assert [s.text for s in spans] == ["flight", "i want", "book a flight", "a flight"]
        assert [s.rank for s in spans] == [0, 1, 2, 3]
        assert spans[0].score == 1.0

    def test_truncates_to_top_k(self, ctx):
        backend = FixedBackend(
            {None: [answer_at(ctx, "flight", 1.0 - 0.01 * i) for i in range(8)]}
        )
        spans = extract_candidates(ctx, ExtractionConfig(question="q", top_k=3), backend)
        assert len(spans) == 3

    def test_impossible_answer_is_empty_span_at_zero(self, ctx):
        backend = FixedBackend(
            {None: [QAAnswer("", 0.8, 0, 0), answer_at(ctx, "flight", 0.4)]}
        )
        spans = extract_candidates(ctx, ExtractionConfig(question="q"), backend)
        assert spans[0].impossible is True
        assert (spans[0].text, spans[0].char_start, spans[0].char_end) == ("", 0, 0)
        assert spans[1].impossible is False

    def test_offset_text_mismatch_is_fatal(self, ctx):
        backend = FixedBackend({None: [QAAnswer("flight", 0.9, 0, 6)]})
        with pytest.raises(DataIntegrityError) as err:
            extract_candidates(ctx, ExtractionConfig(question="q"), backend)
        assert err.value.dialogue_id == "d1"
        assert err.value.rank == 0

    def test_out_of_bounds_offsets_are_fatal(self, ctx):
        backend = FixedBackend({None: [QAAnswer("flight", 0.9, 5, 10**6)]})
        with pytest.raises(DataIntegrityError):
            extract_candidates(ctx, ExtractionConfig(question="q"), backend)

    def test_corpus_results_follow_input_order(self):
        ctxs = [
            render_context(make_dialogue(f"d{i}", [(CUSTOMER, f"need seat {i} now")]))
            for i in range(6)
        ]
        backend = FixedBackend(
            {c.dialogue_id: [answer_at(c, "seat", 0.7)] for c in ctxs}
        )
        out = extract_corpus(ctxs, ExtractionConfig(question="q"), backend, max_parallel=3)
        assert list(out) == [c.dialogue_id for c in ctxs]
        for c in ctxs:
            assert out[c.dialogue_id][0].dialogue_id == c.dialogue_id


class TestReplay:
    def test_write_read_identity(self, tmp_path, ctx):
        spans = {
            "d1": [
                CandidateSpan("d1", 0, "i want to book a flight", 0.9, 10, 33, False),
                CandidateSpan("d1", 1, "", 0.2, 0, 0, True),
            ],
            "d2": [CandidateSpan("d2", 0, "check my seat", 0.8, 10, 23, False)],
        }
        path = tmp_path / "candidates.jsonl"
        write_candidates(path, spans)
        assert read_candidates(path) == spans

    def test_replay_backend_reproduces_extraction(self, tmp_path, ctx):
        backend = FixedBackend(
            {None: [answer_at(ctx, "i want to book a flight", 0.9),
                    answer_at(ctx, "flight", 0.3)]}
        )
        cfg = ExtractionConfig(question="q")
        first = {"d1": extract_candidates(ctx, cfg, backend)}
        path = tmp_path / "candidates.jsonl"
        write_candidates(path, first)
        replayed = {"d1": extract_candidates(ctx, cfg, ReplayQABackend(path))}
        assert replayed == first

    def test_replay_missing_dialogue_is_extraction_error(self, tmp_path, ctx):
        path = tmp_path / "candidates.jsonl"
        write_candidates(path, {"other": [CandidateSpan("other", 0, "x y", 0.5, 0, 3, False)]})
        with pytest.raises(ExtractionError):
            extract_candidates(ctx, ExtractionConfig(question="q"), ReplayQABackend(path))

    def test_read_sorts_by_rank(self, tmp_path):
        path = tmp_path / "candidates.jsonl"
        lines = [
            {"dialogue_id": "d", "rank": 1, "text": "b c", "score": 0.4, "start": 0, "end": 3},
            {"dialogue_id": "d", "rank": 0, "text": "a b", "score": 0.9, "start": 0, "end": 3},
        ]
        path.write_text("".join(json.dumps(o) + "\n" for o in lines))
        spans = read_candidates(path)["d"]
        assert [s.rank for s in spans] == [0, 1]


class _QAHandler(BaseHTTPRequestHandler):
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _QAHandler.seen.append(body)
        answers = [
            {"answer": "i want to book a flight", "score": 0.9, "start": 10, "end": 33}
        ]
        data = json.dumps(answers).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def test_http_backend_wire_protocol(ctx):
    server = HTTPServer(("127.0.0.1", 0), _QAHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_port}/qa"
        cfg = ExtractionConfig(question=QUESTION_MAIN_REASON, top_k=5)
        spans = extract_candidates(ctx, cfg, HTTPQABackend(url))
        assert spans[0].text == "i want to book a flight"
        sent = _QAHandler.seen[-1]
        assert sent["question"] == QUESTION_MAIN_REASON
        assert sent["context"] == ctx.text
        assert sent["top_k"] == 5
        assert sent["handle_impossible_answer"] is True
    finally:
        server.shutdown()


def test_http_backend_requires_url(monkeypatch):
    monkeypatch.delenv("INTENT_LANDSCAPE_QA_URL", raising=False)
    with pytest.raises(ValueError):
        HTTPQABackend()
