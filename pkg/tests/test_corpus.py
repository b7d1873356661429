"""Corpus parsing, context rendering, and offset attribution."""

import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_dialogue, random_corpus
from intent_landscape.corpus import (
    AGENT,
    CUSTOMER,
    Dialogue,
    Utterance,
    char_offset_to_turn,
    load_corpus,
    normalize_utterance_text,
    parse_corpus,
    render_context,
    write_dialogues,
)
from intent_landscape.errors import CorpusError, RecordError


def jsonl_stream(*lines: str) -> io.BytesIO:
    return io.BytesIO(("\n".join(lines) + "\n").encode("utf-8"))


class TestParsing:
    def test_jsonl_rows_group_into_dialogues(self):
        dialogues = parse_corpus(
            jsonl_stream(
                '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "hello"}',
                '{"conversationId": "c1", "turnNumber": 1, "channel": "agent", "utterance": "hi there"}',
                '{"conversationId": "c2", "turnNumber": 0, "channel": "customer", "utterance": "i need help"}',
            ),
            format="jsonl",
        )
        assert [d.id for d in dialogues] == ["c1", "c2"]
        assert [u.text for u in dialogues[0].utterances] == ["hello", "hi there"]
        assert dialogues[0].utterances[1].channel == AGENT

    def test_rows_reordered_by_turn_number(self):
        dialogues = parse_corpus(
            jsonl_stream(
                '{"conversationId": "c1", "turnNumber": 1, "channel": "agent", "utterance": "hi"}',
                '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "hello"}',
            ),
            format="jsonl",
        )
        assert [u.turn_index for u in dialogues[0].utterances] == [0, 1]
        assert dialogues[0].utterances[0].channel == CUSTOMER

    def test_unknown_channel_reports_row_number(self):
        with pytest.raises(RecordError) as err:
            parse_corpus(
                jsonl_stream(
                    '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "hello"}',
                    '{"conversationId": "c1", "turnNumber": 1, "channel": "bot", "utterance": "hi"}',
                ),
                format="jsonl",
            )
        assert err.value.row == 2
        assert "bot" in str(err.value)

    def test_bad_json_line_reports_row_number(self):
        with pytest.raises(RecordError) as err:
            parse_corpus(jsonl_stream("{not json"), format="jsonl")
        assert err.value.row == 1

    def test_non_integer_turn_rejected(self):
        with pytest.raises(RecordError):
            parse_corpus(
                jsonl_stream(
                    '{"conversationId": "c1", "turnNumber": "x", "channel": "customer", "utterance": "hello"}'
                ),
                format="jsonl",
            )

    def test_missing_conversation_id_rejected(self):
        with pytest.raises(RecordError):
            parse_corpus(
                jsonl_stream('{"turnNumber": 0, "channel": "customer", "utterance": "hello"}'),
                format="jsonl",
            )

    def test_empty_utterance_rejected(self):
        with pytest.raises(RecordError):
            parse_corpus(
                jsonl_stream(
                    '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "  "}'
                ),
                format="jsonl",
            )

    def test_duplicate_turn_is_corpus_error(self):
        with pytest.raises(CorpusError) as err:
            parse_corpus(
                jsonl_stream(
                    '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "a b"}',
                    '{"conversationId": "c1", "turnNumber": 0, "channel": "agent", "utterance": "c d"}',
                ),
                format="jsonl",
            )
        assert "duplicate turn" in str(err.value)

    def test_gap_in_turns_is_corpus_error(self):
        with pytest.raises(CorpusError):
            parse_corpus(
                jsonl_stream(
                    '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "a b"}',
                    '{"conversationId": "c1", "turnNumber": 2, "channel": "agent", "utterance": "c d"}',
                ),
                format="jsonl",
            )

    def test_intra_utterance_newlines_become_spaces(self):
        dialogues = parse_corpus(
            jsonl_stream(
                '{"conversationId": "c1", "turnNumber": 0, "channel": "customer", "utterance": "a\\nb\\r\\nc"}'
            ),
            format="jsonl",
        )
        assert dialogues[0].utterances[0].text == "a b c"

    def test_csv_rows_count_from_two(self):
        csv_bytes = io.BytesIO(
            b"conversationId,turnNumber,channel,utterance\n"
            b"c1,0,customer,hello agent\n"
            b"c1,1,robot,hi\n"
        )
        with pytest.raises(RecordError) as err:
            parse_corpus(csv_bytes, format="csv")
        assert err.value.row == 3  # header is row 1

    def test_csv_missing_column_rejected(self):
        csv_bytes = io.BytesIO(b"conversationId,turnNumber,channel\nc1,0,customer\n")
        with pytest.raises(CorpusError):
            parse_corpus(csv_bytes, format="csv")

    def test_csv_parses_clean_file(self):
        csv_bytes = io.BytesIO(
            b"conversationId,turnNumber,channel,utterance\n"
            b"c1,0,customer,i want to book a flight\n"
            b"c1,1,agent,sure\n"
            b"c2,0,customer,check my balance\n"
        )
        dialogues = parse_corpus(csv_bytes, format="csv")
        assert [d.id for d in dialogues] == ["c1", "c2"]
        assert dialogues[1].utterances[0].text == "check my balance"

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            parse_corpus(io.BytesIO(b""), format="xml")


class TestInvariants:
    def test_dialogue_requires_customer_turn(self):
        with pytest.raises(CorpusError):
            Dialogue("d", (Utterance("d", 0, AGENT, "hello there"),))

    def test_utterance_rejects_newline(self):
        with pytest.raises(ValueError):
            Utterance("d", 0, CUSTOMER, "a\nb")

    def test_utterance_rejects_unknown_channel(self):
        with pytest.raises(ValueError):
            Utterance("d", 0, "bot", "hello")

    def test_normalize_collapses_newline_runs(self):
        assert normalize_utterance_text(" a\n\nb\r\nc ") == "a b c"


class TestRenderContext:
    def test_single_turn_layout(self):
        d = make_dialogue("d", [(CUSTOMER, "hi")])
        ctx = render_context(d)
        assert ctx.text == "customer: hi\n"
        kinds = [(s.start, s.end, s.kind) for s in ctx.segments]
        assert kinds == [(0, 10, "prefix"), (10, 12, "utterance"), (12, 13, "newline")]

    def test_two_turn_text(self):
        d = make_dialogue("d", [(CUSTOMER, "hello"), (AGENT, "Hello there!")])
        ctx = render_context(d)
        assert ctx.text == "customer: hello\nagent: Hello there!\n"

    def test_segments_tile_the_text(self):
        d = make_dialogue(
            "d", [(CUSTOMER, "i want to book"), (AGENT, "sure"), (CUSTOMER, "thanks")]
        )
        ctx = render_context(d)
        pos = 0
        for seg in ctx.segments:
            assert seg.start == pos
            pos = seg.end
        assert pos == len(ctx.text)

    def test_utterance_segments_slice_back_to_texts(self):
        d = make_dialogue("d", [(CUSTOMER, "check my seat"), (AGENT, "one moment")])
        ctx = render_context(d)
        for u in d.utterances:
            seg = ctx.utterance_segment(u.turn_index)
            assert ctx.text[seg.start : seg.end] == u.text
            assert seg.channel == u.channel

    def test_offset_maps_to_utterance_turn(self):
        d = make_dialogue("d", [(CUSTOMER, "hi"), (AGENT, "hello")])
        ctx = render_context(d)
        assert char_offset_to_turn(ctx, 10) == 0  # inside "hi"
        assert char_offset_to_turn(ctx, 0) is None  # prefix
        assert char_offset_to_turn(ctx, 12) is None  # newline

    def test_offset_out_of_range(self):
        ctx = render_context(make_dialogue("d", [(CUSTOMER, "hi")]))
        with pytest.raises(IndexError):
            char_offset_to_turn(ctx, -1)
        with pytest.raises(IndexError):
            char_offset_to_turn(ctx, len(ctx.text))


def test_write_then_load_round_trip(tmp_path):
    rng = random.Random(7)
    dialogues = random_corpus(rng, 20)
    path = tmp_path / "corpus.jsonl"
    write_dialogues(path, dialogues)
    assert load_corpus(path) == dialogues


@settings(max_examples=100)
@given(st.integers(min_value=0, max_value=10**9))
def test_random_dialogue_segment_reconstruction(seed):
    """Any dialogue's rendered segments recover its utterances exactly."""
    rng = random.Random(seed)
    d = random_corpus(rng, 1)[0]
    ctx = render_context(d)
    assert "".join(ctx.text[s.start : s.end] for s in ctx.segments) == ctx.text
    for u in d.utterances:
        seg = ctx.utterance_segment(u.turn_index)
        assert ctx.text[seg.start : seg.end] == u.text
        for off in range(seg.start, seg.end):
            assert char_offset_to_turn(ctx, off) == u.turn_index
