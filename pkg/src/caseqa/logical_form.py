"""Logical forms: a small SPARQL subset with parser, printer, and executor.

Supported shape::

    SELECT DISTINCT ?x WHERE { <term> <relation> <term> . ... }
    [ORDER BY [DESC(]?v[)] LIMIT n]

Terms are entities (``ns:m.xxx`` or ``m.xxx``), variables (``?x``), or
literals (quoted strings, optionally ``^^xsd:datetime``-tagged, and bare
numbers).  FILTER clauses are accepted and discarded.  Execution is a
conjunctive join with set semantics over the select variable; ORDER BY sorts
the full satisfying assignments by the sort variable before projection, with
a deterministic tie-break on the canonical assignment representation so that
execution is a pure function of (logical form, KB).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .kb import EntityId, KnowledgeBase, Literal, RelationId, term_sort_key

__all__ = [
    "Variable",
    "TriplePattern",
    "OrderLimit",
    "LogicalForm",
    "LFSyntaxError",
    "ExecutionError",
    "parse",
    "format_lf",
    "execute",
    "find_assignments",
    "relations_of",
    "entities_of",
    "Skeleton",
    "SkeletonPattern",
    "Anchor",
    "skeleton_of",
    "instantiate_skeleton",
    "pattern_depths",
]


class LFSyntaxError(ValueError):
    """Parse failure with a character position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class ExecutionError(ValueError):
    """Raised when a well-formed query cannot be evaluated (e.g. unorderable sort keys)."""


@dataclass(frozen=True, order=True)
class Variable:
    name: str  # includes the leading '?'

    def __post_init__(self) -> None:
        if not self.name.startswith("?") or len(self.name) < 2:
            raise ValueError(f"variable name must start with '?': {self.name!r}")

    def __str__(self) -> str:
        return self.name


Term = Union[EntityId, Variable, Literal]


@dataclass(frozen=True)
class TriplePattern:
    subject: Union[EntityId, Variable]
    relation: RelationId
    object: Term

    def terms(self) -> tuple[Term, Term]:
        return (self.subject, self.object)


@dataclass(frozen=True)
class OrderLimit:
    sort_var: Variable
    direction: str  # "asc" | "desc"
    limit: int

    def __post_init__(self) -> None:
        if self.direction not in ("asc", "desc"):
            raise ValueError(f"direction must be 'asc' or 'desc': {self.direction!r}")
        if self.limit < 1:
            raise ValueError("limit must be a positive integer")


@dataclass(frozen=True)
class LogicalForm:
    select_var: Variable
    patterns: tuple[TriplePattern, ...]
    order_limit: Optional[OrderLimit] = None

    def __post_init__(self) -> None:
        if not self.patterns:
            raise ValueError("logical form must have at least one pattern")
        vars_present = self.variables()
        if self.select_var not in vars_present:
            raise ValueError(f"select variable {self.select_var} does not occur in any pattern")
        if self.order_limit is not None and self.order_limit.sort_var not in vars_present:
            raise ValueError(f"sort variable {self.order_limit.sort_var} does not occur in any pattern")

    def variables(self) -> set[Variable]:
        out = set()
        for p in self.patterns:
            for t in p.terms():
                if isinstance(t, Variable):
                    out.add(t)
        return out


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"[^"]*"(?:\^\^[A-Za-z_:.]+)?)
  | (?P<lbrace>\{) | (?P<rbrace>\}) | (?P<lparen>\() | (?P<rparen>\))
  | (?P<var>\?[A-Za-z0-9_]+)
  | (?P<number>-?[0-9]+(?:\.[0-9]+)?(?![A-Za-z0-9_.]))
  | (?P<dot>\.(?![A-Za-z0-9_]))
  | (?P<word>[A-Za-z_][A-Za-z0-9_:.\-]*)
  | (?P<op>[!<>=&|,;*+/-]+)
    """,
    re.VERBOSE,
)

_ENTITY_RE = re.compile(r"^m\.[A-Za-z0-9_\-]+$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LFSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def _peek(self) -> Optional[_Token]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _next(self, expect: Optional[str] = None) -> _Token:
        tok = self._peek()
        if tok is None:
            raise LFSyntaxError(f"unexpected end of input (expected {expect})", len(self.text))
        if expect is not None and tok.kind != expect:
            raise LFSyntaxError(f"expected {expect}, got {tok.text!r}", tok.pos)
        self.i += 1
        return tok

    def _keyword(self, word: str) -> None:
        tok = self._next("word")
        if tok.text.upper() != word:
            raise LFSyntaxError(f"expected keyword {word}, got {tok.text!r}", tok.pos)

    def _at_keyword(self, word: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.kind == "word" and tok.text.upper() == word

    def parse(self) -> LogicalForm:
        self._keyword("SELECT")
        self._keyword("DISTINCT")
        select_var = Variable(self._next("var").text)
        self._keyword("WHERE")
        self._next("lbrace")
        patterns = []
        while True:
            tok = self._peek()
            if tok is None:
                raise LFSyntaxError("unterminated pattern block", len(self.text))
            if tok.kind == "rbrace":
                self._next()
                break
            if tok.kind == "word" and tok.text.upper() == "FILTER":
                self._skip_filter()
                continue
            patterns.append(self._pattern())
        if not patterns:
            raise LFSyntaxError("empty pattern block", len(self.text))
        order_limit = self._order_limit()
        tok = self._peek()
        if tok is not None:
            raise LFSyntaxError(f"trailing input {tok.text!r}", tok.pos)
        try:
            return LogicalForm(select_var, tuple(patterns), order_limit)
        except ValueError as exc:
            raise LFSyntaxError(str(exc), len(self.text)) from None

    def _skip_filter(self) -> None:
        self._next("word")  # FILTER
        tok = self._next("lparen")
        depth = 1
        while depth:
            tok = self._peek()
            if tok is None:
                raise LFSyntaxError("unterminated FILTER", len(self.text))
            self.i += 1
            if tok.kind == "lparen":
                depth += 1
            elif tok.kind == "rparen":
                depth -= 1
        tok = self._peek()
        if tok is not None and tok.kind == "dot":
            self._next()

    def _pattern(self) -> TriplePattern:
        subject = self._term(position="subject")
        relation = self._relation()
        obj = self._term(position="object")
        tok = self._peek()
        if tok is not None and tok.kind == "dot":
            self._next()
        return TriplePattern(subject, relation, obj)

    def _strip_ns(self, text: str) -> str:
        return text[3:] if text.startswith("ns:") else text

    def _term(self, position: str) -> Term:
        tok = self._peek()
        if tok is None:
            raise LFSyntaxError(f"expected {position} term", len(self.text))
        if tok.kind == "var":
            self._next()
            return Variable(tok.text)
        if tok.kind == "string":
            if position == "subject":
                raise LFSyntaxError("literal not allowed in subject position", tok.pos)
            self._next()
            return _parse_string_literal(tok)
        if tok.kind == "number":
            if position == "subject":
                raise LFSyntaxError("literal not allowed in subject position", tok.pos)
            self._next()
            return Literal("number", tok.text)
        if tok.kind == "word":
            name = self._strip_ns(tok.text)
            if _ENTITY_RE.match(name):
                self._next()
                return EntityId(name)
            raise LFSyntaxError(f"expected entity, variable, or literal, got {tok.text!r}", tok.pos)
        raise LFSyntaxError(f"expected {position} term, got {tok.text!r}", tok.pos)

    def _relation(self) -> RelationId:
        tok = self._peek()
        if tok is None:
            raise LFSyntaxError("expected relation", len(self.text))
        if tok.kind == "var":
            raise LFSyntaxError("relation variables are not supported", tok.pos)
        if tok.kind != "word":
            raise LFSyntaxError(f"expected relation name, got {tok.text!r}", tok.pos)
        name = self._strip_ns(tok.text)
        if _ENTITY_RE.match(name) or "." not in name:
            raise LFSyntaxError(f"expected dotted relation name, got {tok.text!r}", tok.pos)
        self._next()
        return RelationId(name)

    def _order_limit(self) -> Optional[OrderLimit]:
        if not self._at_keyword("ORDER"):
            return None
        self._keyword("ORDER")
        self._keyword("BY")
        tok = self._peek()
        if tok is None:
            raise LFSyntaxError("expected sort expression", len(self.text))
        direction = "asc"
        if tok.kind == "word":
            head = tok.text.upper()
            if head == "DESC":
                direction = "desc"
            elif tok.text.lower() not in ("xsd:datetime", "xsd:date"):
                raise LFSyntaxError(f"unsupported sort function {tok.text!r}", tok.pos)
            self._next()
            self._next("lparen")
            var = Variable(self._next("var").text)
            self._next("rparen")
        elif tok.kind == "var":
            var = Variable(self._next("var").text)
        else:
            raise LFSyntaxError(f"expected sort variable, got {tok.text!r}", tok.pos)
        self._keyword("LIMIT")
        tok = self._next("number")
        if "." in tok.text or tok.text.startswith("-"):
            raise LFSyntaxError("LIMIT must be a positive integer", tok.pos)
        return OrderLimit(var, direction, int(tok.text))


def _parse_string_literal(tok: _Token) -> Literal:
    text = tok.text
    tag = None
    if "^^" in text:
        text, tag = text.split("^^", 1)
    value = text[1:-1]
    if tag is not None:
        tag = tag.lower()
        if tag in ("xsd:datetime", "xsd:date"):
            return Literal("date", value)
        raise LFSyntaxError(f"unsupported literal type {tag!r}", tok.pos)
    if _DATE_RE.match(value):
        return Literal("date", value)
    return Literal("plain", value)


def parse(text: str) -> LogicalForm:
    """Parse a query string into a LogicalForm; raises LFSyntaxError with position."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

def _format_term(term: Term) -> str:
    if isinstance(term, Variable):
        return term.name
    if isinstance(term, EntityId):
        return f"ns:{term.name}"
    if term.kind == "number":
        return term.value
    if term.kind == "date":
        return f'"{term.value}"^^xsd:datetime'
    return f'"{term.value}"'


def format_lf(lf: LogicalForm) -> str:
    """Canonical single-line text form; ``parse(format_lf(lf)) == lf``."""
    parts = [f"SELECT DISTINCT {lf.select_var.name} WHERE {{"]
    for p in lf.patterns:
        parts.append(f"{_format_term(p.subject)} ns:{p.relation.name} {_format_term(p.object)} .")
    parts.append("}")
    text = " ".join(parts)
    if lf.order_limit is not None:
        ol = lf.order_limit
        sort = ol.sort_var.name if ol.direction == "asc" else f"DESC({ol.sort_var.name})"
        text += f" ORDER BY {sort} LIMIT {ol.limit}"
    return text


# ---------------------------------------------------------------------------
# execution

Binding = dict[Variable, Union[EntityId, Literal]]


def _bound(term: Term, binding: Binding) -> Optional[Union[EntityId, Literal]]:
    if isinstance(term, Variable):
        return binding.get(term)
    return term


def _pattern_bound_count(p: TriplePattern, binding: Binding) -> int:
    return sum(1 for t in p.terms() if _bound(t, binding) is not None)


def _match_pattern(
    p: TriplePattern, binding: Binding, kb: KnowledgeBase
) -> Iterable[Binding]:
    """Yield extensions of ``binding`` that satisfy pattern ``p``."""
    subj = _bound(p.subject, binding)
    obj = _bound(p.object, binding)
    if subj is not None and isinstance(subj, Literal):
        return  # literals never have outgoing edges
    if subj is not None and obj is not None:
        if (subj, p.relation, obj) in kb:
            yield binding
        return
    if subj is not None:
        for o in kb.objects_of(subj, p.relation):
            if isinstance(p.object, Variable):
                new = dict(binding)
                new[p.object] = o
                yield new
        return
    if obj is not None and isinstance(obj, EntityId):
        for s in kb.subjects_of(obj, p.relation):
            new = dict(binding)
            new[p.subject] = s  # type: ignore[index]
            yield new
        return
    if obj is not None:  # literal object, unbound subject: scan the relation
        for s, o in kb.relation_pairs(p.relation):
            if o == obj:
                new = dict(binding)
                new[p.subject] = s  # type: ignore[index]
                yield new
        return
    # both ends unbound
    for s, o in kb.relation_pairs(p.relation):
        new = dict(binding)
        if isinstance(p.subject, Variable):
            if p.subject == p.object:
                if s != o:
                    continue
                new[p.subject] = s
                yield new
                continue
            new[p.subject] = s
        if isinstance(p.object, Variable):
            new[p.object] = o
        yield new


def find_assignments(
    patterns: tuple[TriplePattern, ...],
    kb: KnowledgeBase,
    initial: Optional[Binding] = None,
) -> list[Binding]:
    """All variable bindings satisfying every pattern (backtracking join).

    Patterns are joined most-constrained-first: at each step the remaining
    pattern with the most bound terms is expanded, ties by original order.
    """
    results: list[Binding] = []

    def rec(remaining: list[TriplePattern], binding: Binding) -> None:
        if not remaining:
            results.append(binding)
            return
        best = max(range(len(remaining)), key=lambda i: (_pattern_bound_count(remaining[i], binding), -i))
        pattern = remaining[best]
        rest = remaining[:best] + remaining[best + 1 :]
        for new in _match_pattern(pattern, binding, kb):
            rec(rest, dict(new))

    rec(list(patterns), dict(initial or {}))
    return results


def _binding_repr(binding: Binding) -> str:
    items = sorted((v.name, str(t)) for v, t in binding.items())
    return "|".join(f"{k}={v}" for k, v in items)


_KIND_RANK = {"number": 0, "date": 1, "plain": 2, "entity": 3}


def _sort_key(value: Union[EntityId, Literal]):
    if isinstance(value, EntityId):
        return ("entity", value.name)
    if value.kind == "number":
        return ("number", float(value.value))
    return (value.kind, value.value)


def execute(lf: LogicalForm, kb: KnowledgeBase) -> frozenset[Union[EntityId, Literal]]:
    """Evaluate ``lf`` against ``kb``; returns the set of select-var bindings.

    Unknown relations/entities simply fail to match (empty result).  Raises
    ExecutionError("unorderable") when an ORDER BY sort variable binds values
    of mixed kinds.
    """
    assignments = find_assignments(lf.patterns, kb)
    if lf.order_limit is not None and assignments:
        ol = lf.order_limit
        kinds = set()
        for a in assignments:
            v = a[ol.sort_var]
            kinds.add("entity" if isinstance(v, EntityId) else v.kind)
        if len(kinds) > 1:
            raise ExecutionError(f"unorderable: sort variable {ol.sort_var} binds mixed kinds {sorted(kinds)}")
        assignments.sort(key=_binding_repr)
        assignments.sort(key=lambda a: _sort_key(a[ol.sort_var]), reverse=(ol.direction == "desc"))
        assignments = assignments[: ol.limit]
    return frozenset(a[lf.select_var] for a in assignments)


def relations_of(lf: LogicalForm) -> frozenset[RelationId]:
    return frozenset(p.relation for p in lf.patterns)


def entities_of(lf: LogicalForm) -> list[EntityId]:
    """Entities in pattern order of first appearance."""
    seen: list[EntityId] = []
    for p in lf.patterns:
        for t in p.terms():
            if isinstance(t, EntityId) and t not in seen:
                seen.append(t)
    return seen


# ---------------------------------------------------------------------------
# skeletons

@dataclass(frozen=True, order=True)
class Anchor:
    """Placeholder for the i-th distinct entity of a logical form."""

    index: int

    def __str__(self) -> str:
        return f"@{self.index}"


SkelTerm = Union[Anchor, Variable, Literal]


@dataclass(frozen=True)
class SkeletonPattern:
    subject: Union[Anchor, Variable]
    object: SkelTerm


@dataclass(frozen=True)
class Skeleton:
    """Structure of a logical form: relations and entities abstracted away.

    Pattern i's relation becomes slot i; entities become anchors indexed by
    first appearance; variables are renamed canonically (?v0, ?v1, ...).
    Literals and the ORDER BY/LIMIT clause are part of the structure.
    """

    select_var: Variable
    patterns: tuple[SkeletonPattern, ...]
    order_limit: Optional[tuple[Variable, str, int]] = None

    @property
    def slot_count(self) -> int:
        return len(self.patterns)

    @property
    def anchor_count(self) -> int:
        n = 0
        for p in self.patterns:
            for t in (p.subject, p.object):
                if isinstance(t, Anchor):
                    n = max(n, t.index + 1)
        return n


def skeleton_of(lf: LogicalForm) -> Skeleton:
    var_map: dict[Variable, Variable] = {}
    anchor_map: dict[EntityId, Anchor] = {}

    def canon(term: Term) -> SkelTerm:
        if isinstance(term, Variable):
            if term not in var_map:
                var_map[term] = Variable(f"?v{len(var_map)}")
            return var_map[term]
        if isinstance(term, EntityId):
            if term not in anchor_map:
                anchor_map[term] = Anchor(len(anchor_map))
            return anchor_map[term]
        return term

    patterns = tuple(
        SkeletonPattern(canon(p.subject), canon(p.object))  # type: ignore[arg-type]
        for p in lf.patterns
    )
    order = None
    if lf.order_limit is not None:
        ol = lf.order_limit
        order = (var_map[ol.sort_var], ol.direction, ol.limit)
    return Skeleton(var_map[lf.select_var], patterns, order)


def instantiate_skeleton(
    skeleton: Skeleton,
    relations: list[RelationId],
    anchors: list[EntityId],
) -> LogicalForm:
    """Rebuild a logical form from a skeleton, one relation per slot."""
    if len(relations) != skeleton.slot_count:
        raise ValueError(f"need {skeleton.slot_count} relations, got {len(relations)}")
    if len(anchors) < skeleton.anchor_count:
        raise ValueError(f"need {skeleton.anchor_count} anchors, got {len(anchors)}")

    def concrete(term: SkelTerm) -> Term:
        if isinstance(term, Anchor):
            return anchors[term.index]
        return term

    patterns = tuple(
        TriplePattern(concrete(p.subject), relations[i], concrete(p.object))  # type: ignore[arg-type]
        for i, p in enumerate(skeleton.patterns)
    )
    order = None
    if skeleton.order_limit is not None:
        var, direction, limit = skeleton.order_limit
        order = OrderLimit(var, direction, limit)
    return LogicalForm(skeleton.select_var, patterns, order)


def pattern_depths(patterns: tuple, entity_test=None) -> list[int]:
    """Distance of each pattern from the nearest entity-containing pattern.

    Works on both TriplePattern and SkeletonPattern sequences: a pattern
    containing an entity (or Anchor) has depth 0; others are reached through
    shared variables, one step per pattern.  Patterns unreachable from any
    entity get depth 0 as a neutral fallback.
    """

    def is_grounded_term(t) -> bool:
        return isinstance(t, (EntityId, Anchor))

    def pattern_vars(p) -> set[Variable]:
        return {t for t in (p.subject, p.object) if isinstance(t, Variable)}

    n = len(patterns)
    depths = [None] * n  # type: list
    frontier_vars: set[Variable] = set()
    for i, p in enumerate(patterns):
        if is_grounded_term(p.subject) or is_grounded_term(p.object):
            depths[i] = 0
            frontier_vars |= pattern_vars(p)
    level = 0
    while any(d is None for d in depths):
        level += 1
        newly = [i for i, d in enumerate(depths) if d is None and pattern_vars(patterns[i]) & frontier_vars]
        if not newly:
            for i, d in enumerate(depths):
                if d is None:
                    depths[i] = 0
            break
        for i in newly:
            depths[i] = level
            frontier_vars |= pattern_vars(patterns[i])
    return depths  # type: ignore[return-value]
