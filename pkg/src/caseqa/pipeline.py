"""End-to-end answering: link, retrieve, compose, revise, execute, score."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .kb import KnowledgeBase
from .linker import AliasTable, Mention, link
from .logical_form import ExecutionError, LogicalForm, execute, format_lf, relations_of, skeleton_of
from .memory import Case, CaseMemory
from .retriever import Encoder, retrieve
from .reuse import Candidate, GeneratorConfig, NoCasesToReuse, generate, serialize_input
from .revise import AlignmentResult, EmbeddingTable, SurfaceSimilarity, TranseSimilarity, align
from .worldgen import DatasetExample, answers_to_json

__all__ = [
    "PipelineComponents",
    "PipelineFlags",
    "PipelineResult",
    "ExampleScore",
    "Metrics",
    "answer",
    "evaluate",
    "answer_set_scores",
    "prediction_log_line",
    "recall_at_k",
    "gold_exact_match",
]

REVISE_MODES = ("off", "surface", "transe")


@dataclass
class PipelineComponents:
    kb: KnowledgeBase
    aliases: AliasTable
    encoder: Encoder
    memory: CaseMemory
    transe: Optional[EmbeddingTable] = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self) -> None:
        self._surface = SurfaceSimilarity(self.kb.relation_vocab)
        self._transe_sim = None

    def similarity_backend(self, mode: str):
        if mode == "surface":
            return self._surface
        if mode == "transe":
            if self.transe is None:
                raise ValueError("revise mode 'transe' needs trained embeddings")
            if self._transe_sim is None:
                self._transe_sim = TranseSimilarity(self.transe, self._surface)
            return self._transe_sim
        raise ValueError(f"unknown revise mode {mode!r}")


@dataclass(frozen=True)
class PipelineFlags:
    k: int = 20
    revise: str = "transe"  # off | surface | transe
    revise_beam: int = 5

    def __post_init__(self) -> None:
        if self.revise not in REVISE_MODES:
            raise ValueError(f"revise must be one of {REVISE_MODES}")
        if self.k < 0:
            raise ValueError("k must be >= 0")


@dataclass
class PipelineResult:
    question: str
    mentions: tuple[Mention, ...]
    retrieved: tuple[tuple[str, float], ...]  # (case id, similarity)
    serialized_input: str
    candidates: tuple[Candidate, ...]
    chosen: Optional[int]
    revision: Optional[AlignmentResult]
    answers: frozenset
    error: Optional[str] = None
    skeleton_preserved: Optional[bool] = None
    timings: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        """Canonical, timing-free view; equal pipelines give equal lines."""
        return {
            "question": self.question,
            "mentions": [m.to_json() for m in self.mentions],
            "retrieved": [[cid, round(sim, 6)] for cid, sim in self.retrieved],
            "serialized_input": self.serialized_input,
            "candidates": [c.to_json() for c in self.candidates],
            "chosen": self.chosen,
            "revision": self.revision.to_json() if self.revision is not None else None,
            "answers": answers_to_json(self.answers),
            "error": self.error,
            "skeleton_preserved": self.skeleton_preserved,
        }


def _try_execute(lf: LogicalForm, kb: KnowledgeBase) -> frozenset:
    try:
        return execute(lf, kb)
    except ExecutionError:
        return frozenset()


def answer(
    question: str, components: PipelineComponents, flags: PipelineFlags = PipelineFlags()
) -> PipelineResult:
    """Answer one question; deterministic for equal components and flags.

    Candidates are tried in beam order; the first whose direct or revised form
    executes nonempty is chosen.  If none does, the top candidate's direct
    result (possibly empty) stands.
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    mentions = link(question, components.aliases)
    timings["link"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    retrieved = retrieve(
        components.encoder, components.memory, question, mentions, k=flags.k
    )
    timings["retrieve"] = time.perf_counter() - t0
    serialized = serialize_input(question, mentions, [c for c, _ in retrieved])

    t0 = time.perf_counter()
    try:
        candidates = tuple(
            generate(
                question,
                mentions,
                retrieved,
                components.generator,
                global_vocab=components.kb.relation_vocab,
            )
        )
    except NoCasesToReuse as exc:
        timings["generate"] = time.perf_counter() - t0
        return PipelineResult(
            question, tuple(mentions), tuple((c.id, s) for c, s in retrieved),
            serialized, (), None, None, frozenset(), error=str(exc), timings=timings,
        )
    timings["generate"] = time.perf_counter() - t0

    backend = None if flags.revise == "off" else components.similarity_backend(flags.revise)
    chosen: Optional[int] = None
    revision: Optional[AlignmentResult] = None
    answers: frozenset = frozenset()
    preserved: Optional[bool] = None
    t0 = time.perf_counter()
    for i, cand in enumerate(candidates):
        if backend is None:
            result = _try_execute(cand.lf, components.kb)
            if result:
                chosen, answers = i, result
                break
        else:
            aligned = align(cand.lf, components.kb, backend, beam=flags.revise_beam)
            if aligned.executed and aligned.answers:
                chosen, answers, revision = i, aligned.answers, aligned
                preserved = skeleton_of(aligned.lf) == skeleton_of(cand.lf)
                break
    if chosen is None and candidates:
        chosen = 0
        answers = _try_execute(candidates[0].lf, components.kb)
    timings["revise_execute"] = time.perf_counter() - t0

    return PipelineResult(
        question, tuple(mentions), tuple((c.id, s) for c, s in retrieved),
        serialized, candidates, chosen, revision, answers,
        skeleton_preserved=preserved, timings=timings,
    )


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class ExampleScore:
    id: str
    exact_match: int
    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "exact_match": self.exact_match,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
        }


@dataclass
class Metrics:
    n: int
    exact_match: float
    precision: float
    recall: float
    f1: float
    per_example: tuple[ExampleScore, ...] = ()

    def to_json(self, include_examples: bool = False) -> dict:
        out = {
            "n": self.n,
            "exact_match": round(self.exact_match, 6),
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
        }
        if include_examples:
            out["per_example"] = [s.to_json() for s in self.per_example]
        return out


def answer_set_scores(pred: frozenset, gold: frozenset) -> tuple[float, float, float]:
    """Per-example precision, recall, F1; empty prediction scores zero."""
    if not pred:
        return 0.0, 0.0, 0.0
    inter = len(pred & gold)
    p = inter / len(pred)
    r = inter / len(gold) if gold else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f1


def evaluate(
    examples: Sequence[DatasetExample],
    components: PipelineComponents,
    flags: PipelineFlags = PipelineFlags(),
) -> tuple[Metrics, list[PipelineResult]]:
    scores = []
    results = []
    for e in examples:
        result = answer(e.question, components, flags)
        results.append(result)
        em = int(result.answers == e.answers)
        p, r, f1 = answer_set_scores(result.answers, e.answers)
        scores.append(ExampleScore(e.id, em, p, r, f1))
    n = len(scores)
    if n == 0:
        return Metrics(0, 0.0, 0.0, 0.0, 0.0), []
    metrics = Metrics(
        n,
        sum(s.exact_match for s in scores) / n,
        sum(s.precision for s in scores) / n,
        sum(s.recall for s in scores) / n,
        sum(s.f1 for s in scores) / n,
        tuple(scores),
    )
    return metrics, results


def prediction_log_line(example_id: str, result: PipelineResult) -> str:
    payload = {"id": example_id}
    payload.update(result.to_json())
    return json.dumps(payload, sort_keys=True)


def recall_at_k(
    examples: Sequence[DatasetExample],
    encoder: Encoder,
    memory: CaseMemory,
    aliases: AliasTable,
    k: int,
) -> float:
    """Mean fraction of gold-LF relations covered by the union of top-k cases."""
    if not examples:
        return 0.0
    total = 0.0
    for e in examples:
        mentions = link(e.question, aliases)
        retrieved = retrieve(encoder, memory, e.question, mentions, k=k)
        covered = set()
        for case, _ in retrieved:
            covered.update(relations_of(case.lf))
        gold = set(relations_of(e.lf))
        total += len(gold & covered) / len(gold)
    return total / len(examples)


def gold_exact_match(examples: Sequence[DatasetExample], kb: KnowledgeBase) -> float:
    """Sanity gate: gold LFs executed directly must reproduce gold answers."""
    if not examples:
        return 1.0
    hits = sum(int(_try_execute(e.lf, kb) == e.answers) for e in examples)
    return hits / len(examples)
