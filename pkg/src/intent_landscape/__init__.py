"""Unsupervised intent-landscape mining for two-channel customer-service dialogues.

The pipeline mines intent-like spans from dialogues with an extractive
question-answering backend, validates them linguistically, embeds and
clusters them (density clusters below, an average-link taxonomy above),
and estimates per-intent volumes against an analyst-curated mapping.
"""

__version__ = "0.1.0"
