"""Shared text utilities: tokenization and tf-idf cosine over token bags.

Two tokenizers live here on purpose.  ``tokenize`` is the raw form used by
the question encoder (hashing wants surface fidelity).  ``content_tokens``
additionally strips plural ``-s`` so that relation name tokens and question
words line up ("languages" ~ "language"); it feeds the lexical similarity
used by the reuse generator and the surface alignment backend.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable

_WORD_RE = re.compile(r"\[blank\]|[a-z0-9]+(?:\.[a-z0-9_\-]+)*", re.IGNORECASE)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; dotted ids like m.0p12 stay single tokens."""
    return [m.group().lower() for m in _WORD_RE.finditer(text)]


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group().lower(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def _strip_plural(token: str) -> str:
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def content_tokens(words: Iterable[str]) -> list[str]:
    return [_strip_plural(w) for w in words]


def question_content_tokens(text: str) -> list[str]:
    return content_tokens(tokenize(text))


class TfIdf:
    """Tf-idf weighting fitted on a collection of token bags.

    Uses smoothed idf = ln((1 + N) / (1 + df)) + 1; unseen tokens get the
    df=0 weight, so query-side tokens outside the fitted vocabulary still
    contribute.  Cosine similarity of two empty bags is 0.
    """

    def __init__(self, documents: Iterable[Iterable[str]]):
        docs = [tuple(d) for d in documents]
        self.n_docs = len(docs)
        df: Counter = Counter()
        for d in docs:
            df.update(set(d))
        self._df = dict(df)

    def idf(self, token: str) -> float:
        df = self._df.get(token, 0)
        return math.log((1 + self.n_docs) / (1 + df)) + 1.0

    def vector(self, tokens: Iterable[str]) -> dict[str, float]:
        counts = Counter(tokens)
        return {t: c * self.idf(t) for t, c in counts.items()}

    def cosine(self, tokens_a: Iterable[str], tokens_b: Iterable[str]) -> float:
        va, vb = self.vector(tokens_a), self.vector(tokens_b)
        if not va or not vb:
            return 0.0
        dot = sum(w * vb[t] for t, w in va.items() if t in vb)
        na = math.sqrt(sum(w * w for w in va.values()))
        nb = math.sqrt(sum(w * w for w in vb.values()))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return dot / (na * nb)
