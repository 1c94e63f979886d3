"""Text normalization and word-level tokenization shared by the decoder and metrics.

Tokens are lowercase words (\\w+ runs) and single punctuation characters.
The normalized form of a text is its tokens joined by single spaces, so
detokenize(tokenize(t)) == normalize(t) by construction.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_PUNCT_RE = re.compile(r"[^\w\s]")
_WS_RE = re.compile(r"\s+")


def tokenize(text: str) -> list[str]:
    """Split lowercased text on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


def normalize(text: str) -> str:
    """Canonical form: lowercase, trimmed, single spaces, punctuation set off."""
    return detokenize(tokenize(text))


def normalize_for_matching(text: str) -> str:
    """Label-matching form: lowercase, punctuation stripped, whitespace collapsed."""
    stripped = _PUNCT_RE.sub(" ", text.lower())
    return _WS_RE.sub(" ", stripped).strip()
