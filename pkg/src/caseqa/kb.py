"""Immutable in-memory knowledge base over (entity, relation, entity-or-literal) triples.

Entities are named with dotted ids such as ``m.0p12``; relations are dotted
paths such as ``location.country.languages_spoken``.  Objects may be entities
or typed literals (plain strings, ISO dates, or numbers).  The KB is loaded
once and never mutated; every index is built eagerly in a canonical sorted
order, so two KBs built from the same triple set are identical regardless of
input line order.
"""
from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

LITERAL_KINDS = ("plain", "date", "number")

_DIRECTIONS = ("out", "in", "both")


class KBError(ValueError):
    """Raised for malformed KB input."""


@functools.lru_cache(maxsize=None)
def _name_tokens(name: str) -> tuple[str, ...]:
    parts = []
    for chunk in name.replace("_", ".").split("."):
        chunk = chunk.strip().lower()
        if chunk:
            parts.append(chunk)
    return tuple(parts)


@dataclass(frozen=True, order=True)
class EntityId:
    """Interned entity symbol; equal names always compare equal."""

    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise KBError("entity name must be nonempty")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class RelationId:
    """Interned relation symbol with its lowercase name tokens."""

    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise KBError("relation name must be nonempty")
        if not _name_tokens(self.name):
            raise KBError(f"relation name has no tokens: {self.name!r}")

    @property
    def tokens(self) -> tuple[str, ...]:
        return _name_tokens(self.name)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Literal:
    """Typed literal value; ``value`` keeps the exact surface string."""

    kind: str
    value: str

    def __post_init__(self) -> None:
        if self.kind not in LITERAL_KINDS:
            raise KBError(f"unknown literal kind: {self.kind!r}")

    def __str__(self) -> str:
        return self.value


KBTerm = Union[EntityId, Literal]


def term_sort_key(term: KBTerm) -> tuple[str, str, str]:
    if isinstance(term, EntityId):
        return ("entity", term.name, "")
    return ("literal:" + term.kind, term.value, "")


@dataclass(frozen=True)
class Triple:
    subject: EntityId
    relation: RelationId
    object: KBTerm

    def sort_key(self) -> tuple:
        return (self.subject.name, self.relation.name, term_sort_key(self.object))


class KnowledgeBase:
    """Triple store with forward, inverse, and by-relation indexes.

    The triple set is deduplicated and sorted at construction time, which
    makes every downstream iteration order (and therefore every consumer of
    the KB) a pure function of the triple *set*.
    """

    def __init__(self, triples: Iterable[Triple]):
        tri = sorted(set(triples), key=Triple.sort_key)
        self.triples: tuple[Triple, ...] = tuple(tri)
        self._edge_set = frozenset((t.subject, t.relation, t.object) for t in tri)

        out: dict[EntityId, list[tuple[RelationId, KBTerm]]] = {}
        inn: dict[EntityId, list[tuple[RelationId, EntityId]]] = {}
        byrel: dict[RelationId, list[tuple[EntityId, KBTerm]]] = {}
        entities: set[EntityId] = set()
        relations: set[RelationId] = set()
        for t in tri:
            entities.add(t.subject)
            relations.add(t.relation)
            out.setdefault(t.subject, []).append((t.relation, t.object))
            byrel.setdefault(t.relation, []).append((t.subject, t.object))
            if isinstance(t.object, EntityId):
                entities.add(t.object)
                inn.setdefault(t.object, []).append((t.relation, t.subject))
        self._out = {e: tuple(v) for e, v in out.items()}
        self._in = {e: tuple(v) for e, v in inn.items()}
        self._by_relation = {r: tuple(v) for r, v in byrel.items()}
        self.entity_vocab: frozenset[EntityId] = frozenset(entities)
        self.relation_vocab: frozenset[RelationId] = frozenset(relations)

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, edge: tuple[EntityId, RelationId, KBTerm]) -> bool:
        return edge in self._edge_set

    def out_edges(self, entity: EntityId) -> tuple[tuple[RelationId, KBTerm], ...]:
        return self._out.get(entity, ())

    def in_edges(self, entity: EntityId) -> tuple[tuple[RelationId, EntityId], ...]:
        return self._in.get(entity, ())

    def relation_pairs(self, relation: RelationId) -> tuple[tuple[EntityId, KBTerm], ...]:
        return self._by_relation.get(relation, ())

    def neighborhood(
        self, entity: EntityId, direction: str = "both"
    ) -> list[tuple[RelationId, KBTerm]]:
        """Edges incident on ``entity``, sorted by (relation name, neighbor).

        Unknown entities yield an empty list rather than an error so that
        downstream linker mistakes degrade gracefully.
        """
        if direction not in _DIRECTIONS:
            raise KBError(f"direction must be one of {_DIRECTIONS}, got {direction!r}")
        edges: list[tuple[RelationId, KBTerm]] = []
        if direction in ("out", "both"):
            edges.extend(self._out.get(entity, ()))
        if direction in ("in", "both"):
            edges.extend(self._in.get(entity, ()))
        edges.sort(key=lambda e: (e[0].name, term_sort_key(e[1])))
        return edges

    def has_edge(self, subject: EntityId, relation: RelationId, direction: str = "out") -> bool:
        """True if any edge with ``relation`` leaves (or enters) ``subject``."""
        if direction not in ("out", "in"):
            raise KBError(f"direction must be 'out' or 'in', got {direction!r}")
        edges = self._out.get(subject, ()) if direction == "out" else self._in.get(subject, ())
        return any(r == relation for r, _ in edges)

    def objects_of(self, subject: EntityId, relation: RelationId) -> Iterator[KBTerm]:
        for r, o in self._out.get(subject, ()):
            if r == relation:
                yield o

    def subjects_of(self, obj: EntityId, relation: RelationId) -> Iterator[EntityId]:
        for r, s in self._in.get(obj, ()):
            if r == relation:
                yield s

    def content_hash(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        for t in self.triples:
            kind = t.object.kind if isinstance(t.object, Literal) else "entity"
            h.update(f"{t.subject}\t{t.relation}\t{kind}\t{t.object}\n".encode())
        return h.hexdigest()


def parse_kb_line(line: str, lineno: int) -> Optional[Triple]:
    """Parse one tab-separated KB line; returns None for blanks/comments."""
    stripped = line.strip("\n")
    if not stripped.strip() or stripped.lstrip().startswith("#"):
        return None
    fields = stripped.split("\t")
    if len(fields) not in (3, 4):
        raise KBError(f"line {lineno}: expected 3 or 4 tab-separated fields, got {len(fields)}")
    subj, rel, obj = fields[0].strip(), fields[1].strip(), fields[2].strip()
    if not subj or not rel or not obj:
        raise KBError(f"line {lineno}: empty field")
    try:
        subject = EntityId(subj)
        relation = RelationId(rel)
        if len(fields) == 4:
            kind = fields[3].strip()
            if kind not in LITERAL_KINDS:
                raise KBError(f"line {lineno}: unknown literal type {kind!r}")
            object_term: KBTerm = Literal(kind, obj)
        else:
            object_term = EntityId(obj)
    except KBError as exc:
        raise KBError(f"line {lineno}: {exc}") from None
    return Triple(subject, relation, object_term)


def load_kb(path: str) -> KnowledgeBase:
    """Load a KB from a ``subject\\trelation\\tobject[\\tliteral_type]`` file."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            t = parse_kb_line(line, lineno)
            if t is not None:
                triples.append(t)
    return KnowledgeBase(triples)


def dump_kb(kb: KnowledgeBase, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in kb.triples:
            if isinstance(t.object, Literal):
                fh.write(f"{t.subject}\t{t.relation}\t{t.object.value}\t{t.object.kind}\n")
            else:
                fh.write(f"{t.subject}\t{t.relation}\t{t.object.name}\n")
