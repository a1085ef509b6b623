"""Dense question retriever: hashed n-gram encoder trained in-batch.

The encoder embeds a question as the L2-normalized mean of hashed unigram
and bigram embeddings (one learned table of 2^hash_bits rows).  Training
uses a weighted in-batch objective: within a batch, every other question is
a candidate, weighted by the relation F1 between the two gold logical
forms, normalized per anchor:

    L = - sum_i sum_{j != i}  w_ij * log softmax_j( cos(q_i, q_j) / tau )

During training each entity mention is replaced by a single [BLANK] token
with probability p_mask, so questions about different entities but the same
relations look alike.  Inference never masks.

All gradients are computed analytically (see ``batch_loss_and_grad``) and are
checked against central finite differences in the test suite.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .kb import RelationId
from .linker import Mention
from .textsim import tokenize_with_spans

_EMPTY_FEATURE = "u:[EMPTY]"
_BLANK = "[blank]"
_EPS = 1e-12


class StaleVectorCache(RuntimeError):
    """A memory's cached vectors were produced by a different encoder."""


@functools.lru_cache(maxsize=1 << 20)
def _bucket(feature: str, n_buckets: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % n_buckets


def features_of(tokens: Sequence[str], n_buckets: int) -> np.ndarray:
    """Hashed unigram + bigram feature rows for a token sequence."""
    feats = [_bucket("u:" + t, n_buckets) for t in tokens]
    feats += [_bucket(f"b:{a} {b}", n_buckets) for a, b in zip(tokens, tokens[1:])]
    if not feats:
        feats = [_bucket(_EMPTY_FEATURE, n_buckets)]
    return np.asarray(feats, dtype=np.int64)


def mention_token_runs(
    question: str, mentions: Sequence[Mention]
) -> tuple[list[str], list[tuple[int, int]]]:
    """Tokenize a question and locate each mention as a token index run."""
    spans = tokenize_with_spans(question)
    tokens = [t for t, _, _ in spans]
    runs = []
    for m in mentions:
        idxs = [i for i, (_, s, e) in enumerate(spans) if s < m.end and e > m.start]
        if idxs:
            runs.append((idxs[0], idxs[-1] + 1))
    return tokens, runs


def apply_masking(
    tokens: list[str],
    runs: list[tuple[int, int]],
    p_mask: float,
    rng: np.random.Generator,
) -> list[str]:
    """Replace each mention token run by [blank], independently w.p. p_mask."""
    if not runs or p_mask <= 0.0:
        return list(tokens)
    out = list(tokens)
    for start, end in sorted(runs, key=lambda r: -r[0]):
        if rng.random() < p_mask:
            out[start:end] = [_BLANK]
    return out


class Encoder:
    """Hashed n-gram question encoder with a learned embedding table."""

    FORMAT_VERSION = 1

    def __init__(
        self,
        hash_bits: int = 15,
        dim: int = 64,
        temperature: float = 0.1,
        p_mask: float = 0.5,
        seed: int = 0,
    ):
        if not (4 <= hash_bits <= 24):
            raise ValueError("hash_bits out of range")
        self.hash_bits = hash_bits
        self.n_buckets = 1 << hash_bits
        self.dim = dim
        self.temperature = temperature
        self.p_mask = p_mask
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = rng.normal(0.0, 1.0 / math.sqrt(dim), size=(self.n_buckets, dim))

    # -- encoding ----------------------------------------------------------

    def features(
        self,
        question: str,
        mentions: Sequence[Mention] = (),
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        tokens, runs = mention_token_runs(question, mentions)
        if training and runs and self.p_mask > 0.0:
            if rng is None:
                raise ValueError("training-mode encoding requires an rng")
            tokens = apply_masking(tokens, runs, self.p_mask, rng)
        return features_of(tokens, self.n_buckets)

    def encode_features(self, feats: np.ndarray) -> np.ndarray:
        u = self.params[feats].mean(axis=0)
        norm = float(np.linalg.norm(u))
        if norm < _EPS:
            unit = np.zeros(self.dim)
            unit[0] = 1.0
            return unit
        return u / norm

    def encode(
        self,
        question: str,
        mentions: Sequence[Mention] = (),
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        return self.encode_features(self.features(question, mentions, training, rng))

    # -- identity ----------------------------------------------------------

    def version(self) -> str:
        h = hashlib.blake2b(digest_size=12)
        h.update(
            f"{self.FORMAT_VERSION}|{self.hash_bits}|{self.dim}|{self.temperature}|{self.p_mask}|{self.seed}|".encode()
        )
        h.update(np.ascontiguousarray(self.params).tobytes())
        return h.hexdigest()

    def save(self, path: str) -> None:
        meta = json.dumps(
            {
                "format_version": self.FORMAT_VERSION,
                "hash_bits": self.hash_bits,
                "dim": self.dim,
                "temperature": self.temperature,
                "p_mask": self.p_mask,
                "seed": self.seed,
            }
        )
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.frombuffer(meta.encode(), dtype=np.uint8), params=self.params)

    @staticmethod
    def load(path: str) -> "Encoder":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != Encoder.FORMAT_VERSION:
            raise ValueError(f"unsupported encoder format: {meta.get('format_version')}")
        enc = Encoder(
            hash_bits=meta["hash_bits"],
            dim=meta["dim"],
            temperature=meta["temperature"],
            p_mask=meta["p_mask"],
            seed=meta["seed"],
        )
        enc.params = np.array(data["params"], dtype=np.float64)
        return enc


# ---------------------------------------------------------------------------
# supervision weights

def relation_f1(rels_a: frozenset[RelationId], rels_b: frozenset[RelationId]) -> float:
    """F1 overlap between two relation sets; 0 when either is empty."""
    if not rels_a or not rels_b:
        return 0.0
    hit = len(rels_a & rels_b)
    if hit == 0:
        return 0.0
    p = hit / len(rels_a)
    r = hit / len(rels_b)
    return 2 * p * r / (p + r)


def pair_weight_matrix(relation_sets: Sequence[frozenset[RelationId]]) -> np.ndarray:
    n = len(relation_sets)
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            f = relation_f1(relation_sets[i], relation_sets[j])
            w[i, j] = w[j, i] = f
    return w


# ---------------------------------------------------------------------------
# loss and analytic gradient

def batch_loss_and_grad(
    params: np.ndarray,
    feat_lists: Sequence[np.ndarray],
    weights: np.ndarray,
    tau: float,
) -> tuple[float, int, dict[int, np.ndarray]]:
    """Weighted in-batch loss and its gradient w.r.t. embedding table rows.

    ``weights`` is the raw nonnegative pair matrix (diagonal ignored); rows
    with no positive weight are skipped.  Returns (loss, active anchor
    count, {row index: gradient vector}).
    """
    b = len(feat_lists)
    u = np.stack([params[f].mean(axis=0) for f in feat_lists])
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    norms = np.maximum(norms, _EPS)
    q = u / norms
    s = (q @ q.T) / tau
    np.fill_diagonal(s, -np.inf)

    row_sums = weights.sum(axis=1)
    active = row_sums > 0.0
    n_active = int(active.sum())
    g = np.zeros((b, b))
    loss = 0.0
    if n_active:
        smax = s.max(axis=1, keepdims=True)
        exp_s = np.exp(s - smax)
        z = exp_s.sum(axis=1, keepdims=True)
        logp = (s - smax) - np.log(z)
        p = exp_s / z
        wn = np.zeros_like(weights)
        wn[active] = weights[active] / row_sums[active, None]
        np.fill_diagonal(wn, 0.0)
        # logp is -inf on the masked diagonal where wn is 0; keep 0*inf out
        logp_safe = np.where(np.isfinite(logp), logp, 0.0)
        loss = float(-(wn[active] * logp_safe[active]).sum())
        g[active] = p[active] - wn[active]
    dq = (g + g.T) @ q / tau
    du = (dq - (dq * q).sum(axis=1, keepdims=True) * q) / norms
    grads: dict[int, np.ndarray] = {}
    for i, feats in enumerate(feat_lists):
        contrib = du[i] / len(feats)
        for row in feats:
            row = int(row)
            if row in grads:
                grads[row] = grads[row] + contrib
            else:
                grads[row] = contrib.copy()
    return loss, n_active, grads


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    epochs: int = 12
    batch_size: int = 32
    lr: float = 0.5
    seed: int = 0


@dataclass
class TrainItem:
    question: str
    mentions: tuple[Mention, ...]
    relations: frozenset[RelationId]


def train_retriever(
    encoder: Encoder, items: Sequence[TrainItem], config: TrainConfig
) -> list[float]:
    """SGD with linear learning-rate decay; returns per-epoch mean losses.

    Deterministic for a given (encoder seed, config seed): all shuffling and
    masking randomness flows from one seeded generator.
    """
    if len(items) < 2:
        raise ValueError("need at least two examples to train")
    counts: dict[RelationId, int] = {}
    for it in items:
        for rel in it.relations:
            counts[rel] = counts.get(rel, 0) + 1
    if not any(c >= 2 for c in counts.values()):
        raise ValueError("untrainable dataset: no relation is shared by two examples")

    prepared = []
    for it in items:
        tokens, runs = mention_token_runs(it.question, it.mentions)
        prepared.append((tokens, runs, it.relations))

    rng = np.random.default_rng(config.seed)
    n = len(items)
    steps_per_epoch = max(1, math.ceil(n / config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    step = 0
    curve = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_anchors = 0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            if len(batch) < 2:
                step += 1
                continue
            feat_lists = []
            rel_sets = []
            for idx in batch:
                tokens, runs, rels = prepared[idx]
                masked = apply_masking(tokens, runs, encoder.p_mask, rng)
                feat_lists.append(features_of(masked, encoder.n_buckets))
                rel_sets.append(rels)
            w = pair_weight_matrix(rel_sets)
            loss, n_active, grads = batch_loss_and_grad(
                encoder.params, feat_lists, w, encoder.temperature
            )
            lr_t = config.lr * (1.0 - step / total_steps)
            for row, grad in grads.items():
                encoder.params[row] -= lr_t * grad
            epoch_loss += loss
            epoch_anchors += n_active
            step += 1
        curve.append(epoch_loss / max(epoch_anchors, 1))
    return curve


# ---------------------------------------------------------------------------
# retrieval

def retrieve(
    encoder: Encoder,
    memory,
    question: str,
    mentions: Sequence[Mention] = (),
    k: int = 20,
    exclude_ids: Iterable[str] = (),
):
    """Exact top-k cases by cosine similarity; raises on stale vectors."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if memory.encoder_version != encoder.version():
        raise StaleVectorCache(
            "memory vectors were encoded with a different encoder version; rebuild or reload the memory"
        )
    if k == 0 or len(memory) == 0:
        return []
    qvec = encoder.encode(question, mentions)
    return memory.top_k(qvec, k, exclude_ids=exclude_ids)
