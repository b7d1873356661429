"""Part-of-speech tagging backends for span validation.

The POS gate only needs a coarse decision: does the span contain at
least one verb and at least one noun-like token? The baseline tagger
covers that with closed-class lexicons and suffix heuristics, so the
pipeline runs deterministic and offline. An HTTP backend can swap in a
real tagger; both speak the same tiny token/tag structure.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Protocol

import requests

from .errors import ExtractionError

TAGGER_URL_ENV = "INTENT_LANDSCAPE_TAGGER_URL"

# Coarse tagset; only VERB / NOUN / PROPN matter downstream, AUX exists
# so that "is" or "can" never satisfies the verb requirement.
TAG_VERB = "VERB"
TAG_NOUN = "NOUN"
TAG_PROPN = "PROPN"
TAG_AUX = "AUX"
TAG_PRON = "PRON"
TAG_OTHER = "OTHER"


@dataclass(frozen=True)
class TaggedToken:
    surface: str
    tag: str


class TaggerBackend(Protocol):
    def tag_many(self, texts: list[str]) -> list[list[TaggedToken]]:
        ...


_PRONOUNS = {
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself",
    "he", "him", "his", "she", "her", "hers", "it", "its", "we", "us",
    "our", "ours", "they", "them", "their", "theirs", "this", "that",
    "these", "those", "who", "whom", "what", "which", "something",
    "anything", "nothing", "everything", "someone", "anyone",
}

_AUXILIARIES = {
    "am", "is", "are", "was", "were", "be", "been", "being",
    "do", "does", "did", "have", "has", "had",
    "can", "could", "will", "would", "shall", "should", "may", "might",
    "must", "wont", "cant", "dont", "didnt", "doesnt", "isnt", "arent",
    "wasnt", "werent", "couldnt", "wouldnt", "shouldnt",
}

_CLOSED_CLASS = {
    # greetings / politeness / fillers
    "hello", "hi", "hey", "thank", "thanks", "please", "welcome", "okay",
    "ok", "yes", "no", "yeah", "sure", "sorry", "bye", "goodbye",
    # determiners, conjunctions, prepositions, particles
    "the", "a", "an", "to", "of", "in", "on", "at", "for", "with",
    "from", "by", "about", "as", "into", "onto", "over", "under",
    "and", "or", "but", "if", "so", "not", "nor", "than", "then",
    "there", "here", "how", "when", "where", "why", "up", "down", "out",
    "off", "again", "also", "just", "very", "too", "some", "any", "all",
    "each", "more", "most", "other", "new", "like",
    # common adverbs/adjectives around intents
    "today", "now", "currently", "recently", "really", "still",
}

_VERB_LEXICON = {
    "want", "need", "purchase", "book", "check", "change", "send", "buy",
    "get", "know", "transfer", "cancel", "order", "report", "view",
    "update", "fix", "pay", "sign", "start", "stop", "open", "close",
    "upgrade", "downgrade", "renew", "return", "track", "find", "see",
    "make", "take", "use", "help", "call", "ask", "tell", "give",
    "add", "remove", "reset", "activate", "deactivate", "file", "claim",
    "schedule", "reserve", "redeem", "apply", "move", "switch", "learn",
    "speak", "talk", "print", "download", "install", "login",
}

_NOUN_LEXICON = {
    "service", "cable", "flight", "ticket", "seat", "pass", "card",
    "account", "balance", "phone", "claim", "bill", "bills", "internet",
    "plan", "software", "server", "expense", "address", "money", "order",
    "boarding", "baggage", "luggage", "reservation", "subscription",
    "channel", "package", "data", "usage", "payment", "statement",
    "transaction", "loan", "policy", "coverage", "deductible", "premium",
    "agent", "customer", "information", "info", "question", "problem",
    "issue", "status", "promotion", "update", "report", "smartphone",
    "laptop", "device", "connection", "wifi", "router", "modem", "tv",
    "insurance", "refund", "charge", "fee", "rate", "credit", "debit",
    "number", "name", "email", "date", "time", "price", "cost",
}

_VERB_SUFFIXES = ("ing", "ed")
_NOUN_SUFFIXES = ("tion", "ment", "ness", "ity", "ance", "ence", "ship")


def _strip_token(token: str) -> str:
    return token.strip(".,!?;:'\"()[]{}")


class BaselineTagger:
    """Deterministic lexicon-and-suffix tagger, no external calls."""

    def tag_one(self, text: str) -> list[TaggedToken]:
        tagged: list[TaggedToken] = []
        for raw in text.split():
            word = _strip_token(raw)
            if not word:
                tagged.append(TaggedToken(raw, TAG_OTHER))
                continue
            lower = word.lower()
            if lower in _PRONOUNS:
                tag = TAG_PRON
            elif lower in _AUXILIARIES:
                tag = TAG_AUX
            elif lower in _CLOSED_CLASS:
                tag = TAG_OTHER
            elif lower in _VERB_LEXICON:
                tag = TAG_VERB
            elif lower in _NOUN_LEXICON:
                tag = TAG_NOUN
            elif word[0].isupper():
                tag = TAG_PROPN
            elif lower.endswith(_VERB_SUFFIXES):
                tag = TAG_VERB
            elif lower.endswith(_NOUN_SUFFIXES):
                tag = TAG_NOUN
            else:
                tag = TAG_NOUN
            tagged.append(TaggedToken(word, tag))
        return tagged

    def tag_many(self, texts: list[str]) -> list[list[TaggedToken]]:
        return [self.tag_one(t) for t in texts]


class HTTPTaggerBackend:
    """Client for the tagger wire protocol: {"texts": [...]} -> {"tags": [[...]]}."""

    def __init__(self, url: str | None = None, timeout: float = 60.0) -> None:
        self.url = url or os.environ.get(TAGGER_URL_ENV, "")
        if not self.url:
            raise ValueError(f"no tagger backend URL (flag or {TAGGER_URL_ENV})")
        self.timeout = timeout
        self._session = requests.Session()

    def tag_many(self, texts: list[str]) -> list[list[TaggedToken]]:
        try:
            resp = self._session.post(
                self.url, json={"texts": texts}, timeout=self.timeout
            )
            resp.raise_for_status()
            body = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ExtractionError(f"tagger backend failure: {exc}") from exc
        tags = body["tags"]
        if len(tags) != len(texts):
            raise ExtractionError(
                f"tagger returned {len(tags)} tag lists for {len(texts)} texts"
            )
        return [
            [TaggedToken(str(t["token"]), str(t["tag"])) for t in token_list]
            for token_list in tags
        ]
