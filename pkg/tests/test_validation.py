"""The four validation gates and the dialogue-survival funnel."""

import random

import pytest

from conftest import make_dialogue, random_candidates, random_corpus
from intent_landscape.corpus import AGENT, CUSTOMER, render_context
from intent_landscape.errors import ExtractionError
from intent_landscape.extraction import CandidateSpan
from intent_landscape.tagging import BaselineTagger
from intent_landscape.validation import (
    FunnelReport,
    MAX_TOKENS,
    MIN_TOKENS,
    ValidatedSpan,
    filter_impossible,
    read_funnel_report,
    read_valid_spans,
    run_funnel,
    validate_channel,
    validate_pos,
    validate_sentence,
    write_funnel_report,
    write_valid_spans,
)

TAGGER = BaselineTagger()


def pos_ok(text: str) -> bool:
    return validate_pos(TAGGER.tag_one(text))


def span_in(ctx, text, rank=0, score=0.9):
    start = ctx.text.index(text)
    return CandidateSpan(ctx.dialogue_id, rank, text, score, start, start + len(text), False)


class TestPosGate:
    def test_verb_plus_noun_passes(self):
        assert pos_ok("i want black smartphone")

    def test_politeness_fails(self):
        assert not pos_ok("thank you")

    def test_greeting_fails(self):
        assert not pos_ok("hello")

    def test_verb_without_object_fails(self):
        assert not pos_ok("running")

    def test_auxiliaries_do_not_count_as_verbs(self):
        assert not pos_ok("you can do it")

    def test_proper_noun_satisfies_object(self):
        assert pos_ok("book Delta")

    def test_noun_without_verb_fails(self):
        assert not pos_ok("my account balance")


class TestSentenceGate:
    def test_plain_intent_passes(self):
        assert validate_sentence("i want to purchase new cable service")

    def test_single_token_fails(self):
        assert not validate_sentence("hello")

    def test_channel_prefix_fails(self):
        assert not validate_sentence("agent: sure i can help")
        assert not validate_sentence("customer: hi there")

    def test_embedded_newline_fails(self):
        assert not validate_sentence("i want\nto book")

    def test_token_bounds_are_inclusive(self):
        assert validate_sentence(" ".join(["word"] * MIN_TOKENS))
        assert validate_sentence(" ".join(["word"] * MAX_TOKENS))
        assert not validate_sentence(" ".join(["word"] * (MAX_TOKENS + 1)))
        assert not validate_sentence("word")


class TestChannelGate:
    @pytest.fixture
    def ctx(self):
        return render_context(
            make_dialogue(
                "d",
                [(CUSTOMER, "i want to book a flight"), (AGENT, "sure i can help")],
            )
        )

    def test_customer_span_passes_with_turn(self, ctx):
        ok, turn = validate_channel(span_in(ctx, "book a flight"), ctx)
        assert (ok, turn) == (True, 0)

    def test_whole_utterance_span_passes(self, ctx):
        ok, turn = validate_channel(span_in(ctx, "i want to book a flight"), ctx)
        assert (ok, turn) == (True, 0)

    def test_agent_span_fails_but_reports_turn(self, ctx):
        ok, turn = validate_channel(span_in(ctx, "i can help"), ctx)
        assert (ok, turn) == (False, 1)

    def test_span_crossing_turns_fails_without_turn(self, ctx):
        text = "flight\nagent"
        ok, turn = validate_channel(span_in(ctx, text), ctx)
        assert (ok, turn) == (False, None)

    def test_span_including_prefix_fails(self, ctx):
        ok, turn = validate_channel(span_in(ctx, "customer: i want"), ctx)
        assert (ok, turn) == (False, None)


class TestImpossibleGate:
    def test_clean_candidates_kept(self):
        spans = [CandidateSpan("d", 0, "a b", 0.9, 0, 3, False)]
        assert filter_impossible(spans) == (True, "")

    def test_any_impossible_drops_dialogue(self):
        spans = [
            CandidateSpan("d", 0, "a b", 0.9, 0, 3, False),
            CandidateSpan("d", 1, "", 0.1, 0, 0, True),
        ]
        keep, reason = filter_impossible(spans)
        assert keep is False
        assert reason == "impossible candidate"

    def test_empty_candidate_list_drops_dialogue(self):
        keep, reason = filter_impossible([])
        assert keep is False
        assert reason == "no candidates"


@pytest.fixture
def funnel_fixture():
    """Four dialogues engineered to fall out one per stage.

    a-imp has an impossible candidate; b-pos only has non-actionable
    spans; c-chan's good span sits in the agent channel; d-clean is
    fully valid. Expected survival: 4, 3, 2, 2, 1.
    """
    d_imp = make_dialogue("a-imp", [(CUSTOMER, "i want to check my balance")])
    d_pos = make_dialogue(
        "b-pos", [(CUSTOMER, "hello"), (AGENT, "thank you for calling us")]
    )
    d_chan = make_dialogue(
        "c-chan", [(CUSTOMER, "hi"), (AGENT, "you can check the server status now")]
    )
    d_clean = make_dialogue(
        "d-clean",
        [(CUSTOMER, "i want to purchase new cable service"), (AGENT, "sure")],
    )
    ctxs = {
        d.id: render_context(d) for d in (d_imp, d_pos, d_chan, d_clean)
    }
    candidates = {
        "a-imp": [
            span_in(ctxs["a-imp"], "check my balance", rank=0),
            CandidateSpan("a-imp", 1, "", 0.2, 0, 0, True),
        ],
        "b-pos": [
            span_in(ctxs["b-pos"], "hello", rank=0),
            span_in(ctxs["b-pos"], "thank you", rank=1, score=0.5),
        ],
        "c-chan": [span_in(ctxs["c-chan"], "check the server status", rank=0)],
        "d-clean": [span_in(ctxs["d-clean"], "i want to purchase new cable service")],
    }
    return candidates, ctxs


class TestFunnel:
    def test_hand_fixture_counts(self, funnel_fixture):
        candidates, ctxs = funnel_fixture
        report, valid = run_funnel(candidates, ctxs, TAGGER)
        assert report.initial_dialogues == 4
        assert report.after_impossible == 3
        assert report.after_pos == 2
        assert report.after_sentence == 2
        assert report.after_channel == 1
        assert report.percentages == (75.0, 50.0, 50.0, 25.0)
        assert list(valid) == ["d-clean"]
        only = valid["d-clean"][0]
        assert only.valid and only.source_turn == 0

    def test_all_valid_corpus_scores_100(self):
        d = make_dialogue("d", [(CUSTOMER, "i need to change my seat")])
        ctx = render_context(d)
        report, _ = run_funnel(
            {"d": [span_in(ctx, "change my seat")]}, {"d": ctx}, TAGGER
        )
        assert report.percentages == (100.0, 100.0, 100.0, 100.0)

    def test_tagger_failure_fails_pos_gate_only(self, funnel_fixture):
        class FailingTagger:
            def tag_many(self, texts):
                raise ExtractionError("backend down")

        candidates, ctxs = funnel_fixture
        report, valid = run_funnel(candidates, ctxs, FailingTagger())
        assert report.after_impossible == 3
        assert report.after_pos == 0
        assert valid == {}

    def test_tagger_count_mismatch_treated_as_failure(self, funnel_fixture):
        class ShortTagger:
            def tag_many(self, texts):
                return [[] for _ in texts[:-1]]

        candidates, ctxs = funnel_fixture
        report, _ = run_funnel(candidates, ctxs, ShortTagger())
        assert report.after_pos == 0

    def test_counts_non_increasing_on_random_corpora(self):
        for seed in range(10):
            rng = random.Random(seed)
            dialogues = random_corpus(rng, 12)
            ctxs = {d.id: render_context(d) for d in dialogues}
            candidates = {d.id: random_candidates(rng, d) for d in dialogues}
            report, _ = run_funnel(candidates, ctxs, TAGGER)
            counts = (
                report.initial_dialogues,
                report.after_impossible,
                report.after_pos,
                report.after_sentence,
                report.after_channel,
            )
            assert all(a >= b for a, b in zip(counts, counts[1:]))
            assert all(0.0 <= p <= 100.0 for p in report.percentages)


class TestFunnelReport:
    def test_increasing_counts_rejected(self):
        with pytest.raises(ValueError):
            FunnelReport(4, 3, 4, 2, 1)

    def test_zero_initial_has_zero_percentages(self):
        assert FunnelReport(0, 0, 0, 0, 0).percentages == (0.0, 0.0, 0.0, 0.0)


class TestRoundTrips:
    def test_valid_spans_round_trip(self, tmp_path, funnel_fixture):
        candidates, ctxs = funnel_fixture
        _, valid = run_funnel(candidates, ctxs, TAGGER)
        path = tmp_path / "valid_spans.jsonl"
        write_valid_spans(path, valid)
        loaded = read_valid_spans(path)
        assert list(loaded) == list(valid)
        for did in valid:
            originals = [(s.candidate, s.source_turn) for s in valid[did]]
            reloaded = [(s.candidate, s.source_turn) for s in loaded[did]]
            assert reloaded == originals
            assert all(s.valid for s in loaded[did])

    def test_funnel_report_round_trip(self, tmp_path):
        report = FunnelReport(4, 3, 2, 2, 1)
        meta = {"question": "q", "domain": "airline"}
        path = tmp_path / "funnel.json"
        write_funnel_report(path, report, meta)
        loaded, loaded_meta = read_funnel_report(path)
        assert loaded == report
        assert loaded_meta == meta
