"""Compose candidate logical forms for a query from retrieved cases.

The generator is a scored compositional search, not a learned decoder: the
structural hypothesis space is the set of skeletons of the retrieved case
forms, and the relation vocabulary is the union of relations those cases use
(optionally widened to the whole KB vocabulary at a penalty).  Slot scores are
additive and independent, so a beam of width B over slots returns exactly the
global top B for each skeleton.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .kb import EntityId, RelationId
from .linker import Mention
from .logical_form import (
    LogicalForm,
    Skeleton,
    format_lf,
    instantiate_skeleton,
    pattern_depths,
    skeleton_of,
)
from .memory import Case
from .textsim import TfIdf, question_content_tokens

__all__ = [
    "GeneratorConfig",
    "SlotSupport",
    "Candidate",
    "NoCasesToReuse",
    "serialize_input",
    "generate",
]

GLOBAL_VOCAB_SOURCE = "global-vocab"


class NoCasesToReuse(ValueError):
    pass


def _tuned_weights() -> dict:
    from .tuning import tuned_profile

    return tuned_profile()["reuse"]


@dataclass(frozen=True)
class GeneratorConfig:
    beam: int = 5
    # mixing weights come from the tuned profile, not literals here
    alpha: float = field(default_factory=lambda: _tuned_weights()["alpha"])
    beta: float = field(default_factory=lambda: _tuned_weights()["beta"])
    gamma_oov: float = field(default_factory=lambda: _tuned_weights()["gamma_oov"])
    use_global_vocab: bool = False
    skeleton_temperature: float = 0.1

    def __post_init__(self) -> None:
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.gamma_oov > 0:
            raise ValueError("gamma_oov must be <= 0")
        if self.skeleton_temperature <= 0:
            raise ValueError("skeleton_temperature must be > 0")


@dataclass(frozen=True)
class SlotSupport:
    relation: RelationId
    source: str  # contributing case id, or "global-vocab"
    lexical: float
    case_support: float
    score: float

    def to_json(self) -> dict:
        return {
            "relation": self.relation.name,
            "source": self.source,
            "lexical": round(self.lexical, 6),
            "case_support": round(self.case_support, 6),
            "score": round(self.score, 6),
        }


@dataclass(frozen=True)
class Candidate:
    lf: LogicalForm
    score: float
    skeleton_score: float
    skeleton_sources: tuple[str, ...]
    support: tuple[SlotSupport, ...]

    def to_json(self) -> dict:
        return {
            "lf": format_lf(self.lf),
            "score": round(self.score, 6),
            "skeleton_score": round(self.skeleton_score, 6),
            "skeleton_sources": list(self.skeleton_sources),
            "support": [s.to_json() for s in self.support],
        }


def _augment(question: str, mentions: Sequence[Mention]) -> str:
    """Insert each mention's entity id right after its surface form."""
    out = []
    pos = 0
    for m in sorted(mentions, key=lambda m: m.start):
        out.append(question[pos : m.end])
        out.append(f" {m.entity.name}")
        pos = m.end
    out.append(question[pos:])
    return "".join(out)


def serialize_input(question: str, mentions: Sequence[Mention], cases: Sequence[Case]) -> str:
    segments = [_augment(question, mentions)]
    for case in cases:
        segments.append(_augment(case.question, case.mentions))
        segments.append(format_lf(case.lf))
    return " [SEP] ".join(segments)


def _query_anchors(mentions: Sequence[Mention]):
    anchors = []
    for m in sorted(mentions, key=lambda m: m.start):
        if m.entity not in anchors:
            anchors.append(m.entity)
    return anchors


def generate(
    question: str,
    mentions: Sequence[Mention],
    cases: Sequence[tuple[Case, float]],
    config: GeneratorConfig = GeneratorConfig(),
    global_vocab: Sequence[RelationId] = (),
) -> list[Candidate]:
    """Beam of at most ``config.beam`` candidates, best first.

    Skeletons come from the case forms and are scored by the softmax-normalized
    retrieval similarity of their supporting cases; each slot is filled with a
    relation scored by lexical match against the question plus depth-matched
    case support.  Candidates never copy case entities: anchors bind to the
    query's own mentions in order of first appearance, and candidates binding
    more of the question's entities rank ahead of those binding fewer.
    """
    anchors = _query_anchors(mentions)

    # softmax over case similarities; sharper for small temperature
    weights: list[float] = []
    if cases:
        t = config.skeleton_temperature
        mx = max(sim for _, sim in cases)
        exps = [math.exp((sim - mx) / t) for _, sim in cases]
        z = sum(exps)
        weights = [e / z for e in exps]

    # group cases by skeleton
    skeleton_cases: dict[Skeleton, list[int]] = {}
    for i, (case, _) in enumerate(cases):
        skeleton_cases.setdefault(skeleton_of(case.lf), []).append(i)

    # relation pool with depth-matched support: rel -> depth -> summed raw
    # similarity.  Raw sums let several mid-rank cases that agree on a
    # relation outvote one sharp near-duplicate, so fresh cases can win a
    # slot without retraining.
    support_at: dict[RelationId, dict[int, float]] = {}
    best_source: dict[RelationId, tuple[float, str]] = {}
    for case, sim in cases:
        depths = pattern_depths(case.lf.patterns)
        seen_here: set[tuple[RelationId, int]] = set()
        for pattern, depth in zip(case.lf.patterns, depths):
            rel = pattern.relation
            if (rel, depth) not in seen_here:
                seen_here.add((rel, depth))
                support_at.setdefault(rel, {})
                support_at[rel][depth] = support_at[rel].get(depth, 0.0) + sim
            prev = best_source.get(rel)
            if prev is None or sim > prev[0] or (sim == prev[0] and case.id < prev[1]):
                best_source[rel] = (sim, case.id)

    pool = sorted(support_at, key=lambda r: r.name)
    oov: list[RelationId] = []
    if config.use_global_vocab:
        oov = sorted((r for r in global_vocab if r not in support_at), key=lambda r: r.name)

    usable = [
        (skel, idxs)
        for skel, idxs in skeleton_cases.items()
        if skel.anchor_count <= len(anchors)
    ]
    if not usable:
        # structure only ever comes from cases, so a wider relation vocabulary
        # cannot rescue an empty or all-skipped skeleton set
        raise NoCasesToReuse("no cases to reuse")

    # lexical similarity between relation names and the question
    question_doc = question_content_tokens(question)
    docs = [list(r.tokens) for r in pool + oov] + [question_doc]
    tfidf = TfIdf(docs)
    qvec = tfidf.vector(question_doc)
    lexical = {r: tfidf.cosine(tfidf.vector(list(r.tokens)), qvec) for r in pool + oov}

    def slot_options(depth: int) -> list[SlotSupport]:
        options = []
        for rel in pool:
            lex = lexical[rel]
            sup = support_at[rel].get(depth, 0.0)
            score = config.alpha * lex + config.beta * sup
            options.append(SlotSupport(rel, best_source[rel][1], lex, sup, score))
        for rel in oov:
            lex = lexical[rel]
            score = config.alpha * lex + config.gamma_oov
            options.append(SlotSupport(rel, GLOBAL_VOCAB_SOURCE, lex, 0.0, score))
        options.sort(key=lambda s: (-s.score, s.relation.name))
        return options

    candidates: dict[str, Candidate] = {}
    for skeleton, case_idxs in sorted(
        usable, key=lambda si: -sum(weights[i] for i in si[1])
    ):
        skel_score = sum(weights[i] for i in case_idxs)
        sources = tuple(
            cases[i][0].id for i in sorted(case_idxs, key=lambda i: (-cases[i][1], cases[i][0].id))
        )
        depths = pattern_depths(skeleton.patterns)
        # beam over slots; scores are additive so width B is exact
        beams: list[tuple[float, tuple[SlotSupport, ...]]] = [(0.0, ())]
        for depth in depths:
            options = slot_options(depth)[: config.beam]
            grown = [
                (score + opt.score, chosen + (opt,))
                for score, chosen in beams
                for opt in options
            ]
            grown.sort(key=lambda b: (-b[0], tuple(s.relation.name for s in b[1])))
            beams = grown[: config.beam]
        for slot_score, chosen in beams:
            lf = instantiate_skeleton(
                skeleton, [s.relation for s in chosen], anchors[: skeleton.anchor_count]
            )
            printed = format_lf(lf)
            total = skel_score + slot_score
            prev = candidates.get(printed)
            if prev is None or total > prev.score:
                candidates[printed] = Candidate(lf, total, skel_score, sources, chosen)

    def bound_anchors(c: Candidate) -> int:
        return len(
            {t for p in c.lf.patterns for t in (p.subject, p.object) if isinstance(t, EntityId)}
        )

    # a form that drops one of the question's entities is structurally wrong
    # however well its slots score, so coverage outranks score
    ranked = sorted(candidates.values(), key=lambda c: (-bound_anchors(c), -c.score, format_lf(c.lf)))
    return ranked[: config.beam]
