"""KB embeddings and repair of non-executing logical forms.

Training embeds entities and relations so that head + relation lands near
tail; relations that share edge distributions end up close in cosine, which
is what lets alignment trade a predicted relation for the near-duplicate the
KB actually uses.  Alignment walks the patterns grounded-first, keeps partial
variable bindings, and beam-searches joint relation substitutions drawn from
edges incident to the bound endpoints; structure is never changed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from hashlib import blake2b
from typing import Optional, Sequence

import numpy as np

from .kb import EntityId, KnowledgeBase, Literal, RelationId, Triple
from .logical_form import (
    ExecutionError,
    LogicalForm,
    TriplePattern,
    Variable,
    execute,
    find_assignments,
    format_lf,
)
from .textsim import TfIdf
from . import kernels

__all__ = [
    "TranseConfig",
    "EmbeddingTable",
    "train_transe",
    "transe_loss_and_grad",
    "SurfaceSimilarity",
    "TranseSimilarity",
    "relation_similarity",
    "Substitution",
    "AlignmentResult",
    "align",
]

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TranseConfig:
    dim: int = 50
    margin: float = 1.0
    lr: float = 0.05
    epochs: int = 150
    seed: int = 0


class EmbeddingTable:
    """Entity and relation vectors with O(1) lookup by name."""

    def __init__(
        self,
        entity_names: Sequence[str],
        relation_names: Sequence[str],
        entity_vecs: np.ndarray,
        relation_vecs: np.ndarray,
        config: TranseConfig,
    ):
        self.entity_names = tuple(entity_names)
        self.relation_names = tuple(relation_names)
        self.entity_vecs = np.ascontiguousarray(entity_vecs, dtype=np.float64)
        self.relation_vecs = np.ascontiguousarray(relation_vecs, dtype=np.float64)
        self.config = config
        self._entity_index = {n: i for i, n in enumerate(self.entity_names)}
        self._relation_index = {n: i for i, n in enumerate(self.relation_names)}
        if self.entity_vecs.shape != (len(self.entity_names), config.dim):
            raise ValueError("entity vector block has the wrong shape")
        if self.relation_vecs.shape != (len(self.relation_names), config.dim):
            raise ValueError("relation vector block has the wrong shape")

    @property
    def dim(self) -> int:
        return self.config.dim

    def has_relation(self, relation: RelationId) -> bool:
        return relation.name in self._relation_index

    def relation_vector(self, relation: RelationId) -> np.ndarray:
        return self.relation_vecs[self._relation_index[relation.name]]

    def entity_vector(self, entity: EntityId) -> np.ndarray:
        return self.entity_vecs[self._entity_index[entity.name]]

    def relation_cosine(self, r1: RelationId, r2: RelationId) -> float:
        a = self.relation_vector(r1)
        b = self.relation_vector(r2)
        na = float(np.linalg.norm(a))
        nb = float(np.linalg.norm(b))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(a @ b) / (na * nb)

    def version(self) -> str:
        h = blake2b(digest_size=12)
        h.update(
            json.dumps(
                {
                    "format": _FORMAT_VERSION,
                    "dim": self.config.dim,
                    "margin": self.config.margin,
                    "seed": self.config.seed,
                    "n_entities": len(self.entity_names),
                    "n_relations": len(self.relation_names),
                },
                sort_keys=True,
            ).encode()
        )
        h.update(self.entity_vecs.tobytes())
        h.update(self.relation_vecs.tobytes())
        return h.hexdigest()

    def save(self, path: str) -> None:
        meta = {
            "format_version": _FORMAT_VERSION,
            "dim": self.config.dim,
            "margin": self.config.margin,
            "lr": self.config.lr,
            "epochs": self.config.epochs,
            "seed": self.config.seed,
            "entity_names": list(self.entity_names),
            "relation_names": list(self.relation_names),
        }
        meta_bytes = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        np.savez(path, meta=meta_bytes, entities=self.entity_vecs, relations=self.relation_vecs)

    @staticmethod
    def load(path: str) -> "EmbeddingTable":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"].tobytes()).decode())
            if meta.get("format_version") != _FORMAT_VERSION:
                raise ValueError(f"unsupported embedding format {meta.get('format_version')!r}")
            config = TranseConfig(
                dim=meta["dim"], margin=meta["margin"], lr=meta["lr"],
                epochs=meta["epochs"], seed=meta["seed"],
            )
            return EmbeddingTable(
                meta["entity_names"], meta["relation_names"],
                data["entities"], data["relations"], config,
            )


def _training_triples(kb: KnowledgeBase) -> list[Triple]:
    # translation over raw literal values is meaningless, so only
    # entity-object edges are embedded
    return [t for t in kb.triples if isinstance(t.object, EntityId)]


def train_transe(
    kb: KnowledgeBase, config: TranseConfig = TranseConfig()
) -> tuple[EmbeddingTable, list[float]]:
    """Margin-based translation embedding; returns the table and the loss curve.

    One uniformly drawn corruption (head or tail by coin flip) per positive per
    epoch; entity rows are re-normalized after every active update.  All random
    draws happen here, outside the kernel, so the compiled and pure-Python
    backends produce identical results.
    """
    triples = _training_triples(kb)
    if not triples:
        raise ValueError("knowledge base has no entity-object triples to train on")
    entity_names = sorted({t.subject.name for t in triples} | {t.object.name for t in triples})
    relation_names = sorted({t.relation.name for t in triples})
    ent_index = {n: i for i, n in enumerate(entity_names)}
    rel_index = {n: i for i, n in enumerate(relation_names)}

    heads = np.array([ent_index[t.subject.name] for t in triples], dtype=np.int64)
    rels = np.array([rel_index[t.relation.name] for t in triples], dtype=np.int64)
    tails = np.array([ent_index[t.object.name] for t in triples], dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    bound = 6.0 / np.sqrt(config.dim)
    ent = rng.uniform(-bound, bound, (len(entity_names), config.dim))
    rel = rng.uniform(-bound, bound, (len(relation_names), config.dim))
    rel /= np.maximum(np.linalg.norm(rel, axis=1, keepdims=True), 1e-12)
    ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)

    n = len(triples)
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n).astype(np.int64)
        corrupt_entity = rng.integers(0, len(entity_names), n).astype(np.int64)
        corrupt_head = rng.integers(0, 2, n).astype(np.int64)
        loss = kernels.transe_epoch(
            ent, rel, heads, rels, tails, corrupt_entity, corrupt_head, order,
            config.lr, config.margin,
        )
        losses.append(float(loss))
    table = EmbeddingTable(entity_names, relation_names, ent, rel, config)
    return table, losses


def transe_loss_and_grad(
    entity_vecs: np.ndarray,
    relation_vecs: np.ndarray,
    heads: np.ndarray,
    rels: np.ndarray,
    tails: np.ndarray,
    corrupt_entity: np.ndarray,
    corrupt_head: np.ndarray,
    margin: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch hinge loss and its analytic gradient (no updates, no projection)."""
    grad_ent = np.zeros_like(entity_vecs)
    grad_rel = np.zeros_like(relation_vecs)
    total = 0.0
    for i in range(len(heads)):
        h, r, t = heads[i], rels[i], tails[i]
        if corrupt_head[i]:
            h2, t2 = corrupt_entity[i], t
        else:
            h2, t2 = h, corrupt_entity[i]
        pos = entity_vecs[h] + relation_vecs[r] - entity_vecs[t]
        neg = entity_vecs[h2] + relation_vecs[r] - entity_vecs[t2]
        d_pos = float(np.linalg.norm(pos))
        d_neg = float(np.linalg.norm(neg))
        hinge = margin + d_pos - d_neg
        if hinge <= 0.0:
            continue
        total += hinge
        gp = pos / d_pos if d_pos > 1e-12 else np.zeros_like(pos)
        gn = neg / d_neg if d_neg > 1e-12 else np.zeros_like(neg)
        grad_ent[h] += gp
        grad_ent[t] -= gp
        grad_rel[r] += gp - gn
        grad_ent[h2] -= gn
        grad_ent[t2] += gn
    return total, grad_ent, grad_rel


# ---------------------------------------------------------------------------
# relation similarity backends

class SurfaceSimilarity:
    """tf-idf cosine over relation name tokens (split on '.' and '_')."""

    def __init__(self, relations: Sequence[RelationId]):
        self._relations = tuple(sorted(set(relations), key=lambda r: r.name))
        self._tfidf = TfIdf([list(r.tokens) for r in self._relations])
        self._vectors = {r: self._tfidf.vector(list(r.tokens)) for r in self._relations}

    def _vector(self, relation: RelationId):
        v = self._vectors.get(relation)
        if v is None:
            v = self._tfidf.vector(list(relation.tokens))
        return v

    def sim(self, r1: RelationId, r2: RelationId) -> float:
        if r1 == r2:
            return 1.0
        return self._tfidf.cosine(self._vector(r1), self._vector(r2))


class TranseSimilarity:
    """Cosine of trained relation vectors, surface fallback for untrained ones."""

    def __init__(self, table: EmbeddingTable, fallback: SurfaceSimilarity):
        self.table = table
        self.fallback = fallback

    def sim(self, r1: RelationId, r2: RelationId) -> float:
        if r1 == r2:
            return 1.0
        if self.table.has_relation(r1) and self.table.has_relation(r2):
            return self.table.relation_cosine(r1, r2)
        return self.fallback.sim(r1, r2)


def relation_similarity(r1: RelationId, r2: RelationId, backend) -> float:
    return backend.sim(r1, r2)


# ---------------------------------------------------------------------------
# alignment

@dataclass(frozen=True)
class Substitution:
    slot: int
    original: RelationId
    replacement: RelationId
    similarity: float

    @property
    def is_identity(self) -> bool:
        return self.original == self.replacement

    def to_json(self) -> dict:
        return {
            "slot": self.slot,
            "original": self.original.name,
            "replacement": self.replacement.name,
            "similarity": round(self.similarity, 6),
        }


@dataclass(frozen=True)
class AlignmentResult:
    lf: LogicalForm
    substitutions: tuple[Substitution, ...]
    executed: bool
    answers: frozenset
    unaligned_slots: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "lf": format_lf(self.lf),
            "substitutions": [s.to_json() for s in self.substitutions],
            "executed": self.executed,
            "unaligned_slots": list(self.unaligned_slots),
        }


def _try_execute(lf: LogicalForm, kb: KnowledgeBase) -> frozenset:
    try:
        return execute(lf, kb)
    except ExecutionError:
        return frozenset()


def _alignment_order(patterns: Sequence[TriplePattern]) -> tuple[list[int], list[int]]:
    """Grounded-first processing order; second list = never-groundable slots."""
    remaining = list(range(len(patterns)))
    bound_vars: set[Variable] = set()
    order: list[int] = []

    def groundable(p: TriplePattern) -> bool:
        s_ok = isinstance(p.subject, EntityId) or p.subject in bound_vars
        o_ok = not isinstance(p.object, Variable) or p.object in bound_vars
        return s_ok or o_ok

    while remaining:
        pick = next((i for i in remaining if groundable(patterns[i])), None)
        if pick is None:
            break
        order.append(pick)
        remaining.remove(pick)
        p = patterns[pick]
        if isinstance(p.subject, Variable):
            bound_vars.add(p.subject)
        if isinstance(p.object, Variable):
            bound_vars.add(p.object)
    return order, remaining


def _candidate_relations(
    pattern: TriplePattern,
    assignments: list[dict],
    kb: KnowledgeBase,
) -> list[RelationId]:
    """Distinct relations on KB edges incident to the pattern's bound endpoints."""
    def value_of(term, assignment):
        if isinstance(term, Variable):
            return assignment.get(term)
        return term

    found: set[RelationId] = set()
    base = assignments if assignments else [{}]
    for a in base:
        s = value_of(pattern.subject, a)
        o = value_of(pattern.object, a)
        if s is not None and o is not None:
            for r, obj in kb.out_edges(s):
                if obj == o:
                    found.add(r)
        elif s is not None:
            found.update(r for r, _ in kb.out_edges(s))
        elif o is not None:
            if isinstance(o, EntityId):
                found.update(r for r, _ in kb.in_edges(o))
            else:
                found.update(t.relation for t in kb.triples if t.object == o)
    return sorted(found, key=lambda r: r.name)


def align(
    lf: LogicalForm,
    kb: KnowledgeBase,
    backend,
    beam: int = 5,
) -> AlignmentResult:
    """Repair relations that have no satisfying KB edge under current bindings.

    Patterns are processed grounded-first; a pattern whose relation already has
    a satisfying edge aligns with itself at similarity 1, otherwise candidate
    replacements come from edges incident to the bound endpoints and a beam of
    width ``beam`` explores joint substitutions.  The best-scoring state whose
    full form executes nonempty wins; if none does, the original form is
    returned with ``executed=False``.  Structure is always preserved.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    patterns = lf.patterns
    order, unalignable = _alignment_order(patterns)

    # beam states: (score, substitutions dict slot -> Substitution, concrete prefix patterns)
    states: list[tuple[float, dict[int, Substitution], tuple[TriplePattern, ...]]] = [
        (0.0, {}, ())
    ]
    for slot in order:
        pattern = patterns[slot]
        grown: list[tuple[float, dict[int, Substitution], tuple[TriplePattern, ...]]] = []
        for score, subs, prefix in states:
            prefix_assignments = find_assignments(prefix, kb) if prefix else [{}]
            satisfiable = bool(find_assignments(prefix + (pattern,), kb))
            if satisfiable:
                sub = Substitution(slot, pattern.relation, pattern.relation, 1.0)
                grown.append((score + 1.0, {**subs, slot: sub}, prefix + (pattern,)))
                continue
            for candidate in _candidate_relations(pattern, prefix_assignments, kb):
                if candidate == pattern.relation:
                    continue
                replaced = TriplePattern(pattern.subject, candidate, pattern.object)
                if not find_assignments(prefix + (replaced,), kb):
                    continue
                sim = backend.sim(pattern.relation, candidate)
                sub = Substitution(slot, pattern.relation, candidate, sim)
                grown.append((score + sim, {**subs, slot: sub}, prefix + (replaced,)))
        if not grown:
            # nothing incident fits anywhere; alignment fails outright
            direct = _try_execute(lf, kb)
            return AlignmentResult(lf, (), bool(direct), direct, tuple(unalignable))
        grown.sort(key=lambda st: (-st[0], _state_key(st[1], patterns)))
        states = grown[:beam]

    ranked = sorted(states, key=lambda st: (-st[0], _state_key(st[1], patterns)))
    for score, subs, _prefix in ranked:
        revised_patterns = tuple(
            TriplePattern(p.subject, subs[i].replacement if i in subs else p.relation, p.object)
            for i, p in enumerate(patterns)
        )
        revised = LogicalForm(lf.select_var, revised_patterns, lf.order_limit)
        answers = _try_execute(revised, kb)
        if answers:
            ordered_subs = tuple(subs[i] for i in sorted(subs))
            return AlignmentResult(revised, ordered_subs, True, answers, tuple(unalignable))

    direct = _try_execute(lf, kb)
    return AlignmentResult(lf, (), bool(direct), direct, tuple(unalignable))


def _state_key(subs: dict[int, Substitution], patterns) -> str:
    parts = []
    for i in range(len(patterns)):
        parts.append(subs[i].replacement.name if i in subs else patterns[i].relation.name)
    return "|".join(parts)
