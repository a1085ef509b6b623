"""Alias-table entity linking.

A deliberately simple mention detector: case-insensitive longest-match scan
against a fixed alias table, anchored on word boundaries.  Overlapping
candidates are resolved by (longer span, earlier start, lexicographically
smaller entity id); the same id rule breaks ties between entities sharing an
ambiguous alias.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .kb import EntityId


@dataclass(frozen=True)
class Mention:
    start: int
    end: int  # exclusive
    surface: str
    entity: EntityId

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def to_json(self) -> dict:
        return {"span": [self.start, self.end], "surface": self.surface, "entity": self.entity.name}

    @staticmethod
    def from_json(obj: dict) -> "Mention":
        start, end = obj["span"]
        return Mention(start, end, obj.get("surface", ""), EntityId(obj["entity"]))


class AliasTable:
    """alias (lowercased) -> sorted entity ids; smallest id wins lookups."""

    def __init__(self, pairs: Iterable[tuple[EntityId, str]]):
        table: dict[str, set[EntityId]] = {}
        for entity, alias in pairs:
            alias_norm = " ".join(alias.lower().split())
            if not alias_norm:
                raise ValueError(f"empty alias for entity {entity}")
            table.setdefault(alias_norm, set()).add(entity)
        self._table: dict[str, tuple[EntityId, ...]] = {
            a: tuple(sorted(es)) for a, es in table.items()
        }
        self.max_words = max((a.count(" ") + 1 for a in self._table), default=0)

    def __len__(self) -> int:
        return len(self._table)

    def candidates(self, surface: str) -> tuple[EntityId, ...]:
        return self._table.get(" ".join(surface.lower().split()), ())

    def resolve(self, surface: str) -> Optional[EntityId]:
        cands = self.candidates(surface)
        return cands[0] if cands else None

    def is_ambiguous(self, surface: str) -> bool:
        return len(self.candidates(surface)) > 1

    def aliases(self) -> Iterable[str]:
        return self._table.keys()


def load_aliases(path: str) -> AliasTable:
    """Load an ``entity_id\\talias`` file (one pair per line, # comments)."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip() or stripped.lstrip().startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != 2 or not fields[0].strip() or not fields[1].strip():
                raise ValueError(f"alias file line {lineno}: expected entity_id\\talias")
            pairs.append((EntityId(fields[0].strip()), fields[1].strip()))
    return AliasTable(pairs)


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _word_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    i = 0
    n = len(text)
    while i < n:
        if _is_word_char(text[i]):
            j = i
            while j < n and _is_word_char(text[j]):
                j += 1
            spans.append((i, j))
            i = j
        else:
            i += 1
    return spans


def link(question: str, aliases: AliasTable) -> list[Mention]:
    """Detect alias mentions in ``question``; non-overlapping, deterministic."""
    words = _word_spans(question)
    candidates: list[Mention] = []
    for wi, (start, _) in enumerate(words):
        limit = min(len(words), wi + max(aliases.max_words, 1))
        for wj in range(limit - 1, wi - 1, -1):
            end = words[wj][1]
            surface = question[start:end]
            entity = aliases.resolve(surface)
            if entity is not None:
                candidates.append(Mention(start, end, surface, entity))
    candidates.sort(key=lambda m: (-(m.end - m.start), m.start, m.entity.name))
    chosen: list[Mention] = []
    for cand in candidates:
        if all(cand.end <= m.start or cand.start >= m.end for m in chosen):
            chosen.append(cand)
    chosen.sort(key=lambda m: m.start)
    return chosen


def linking_scores(
    predicted: Iterable[Mention], gold: Iterable[Mention]
) -> tuple[float, float, float]:
    """Span+entity exact-match precision/recall/F1 for one question."""
    pred = {(m.start, m.end, m.entity) for m in predicted}
    gold_set = {(m.start, m.end, m.entity) for m in gold}
    if not pred and not gold_set:
        return (1.0, 1.0, 1.0)
    if not pred or not gold_set:
        return (0.0, 0.0, 0.0)
    hit = len(pred & gold_set)
    p = hit / len(pred)
    r = hit / len(gold_set)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return (p, r, f1)
