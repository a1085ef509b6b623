"""Pure numpy fallback for the hot translation-embedding kernel.

Semantics must stay in lockstep with the compiled twin in ``_ckern.pyx``:
same update order, same epsilon guard, same renormalization rule.  Any
change here must be mirrored there.
"""
from __future__ import annotations

import numpy as np

_EPS = 1e-12

BACKEND_NAME = "python"


def transe_epoch(
    ent: np.ndarray,
    rel: np.ndarray,
    heads: np.ndarray,
    rels: np.ndarray,
    tails: np.ndarray,
    corrupt_entity: np.ndarray,
    corrupt_head: np.ndarray,
    order: np.ndarray,
    lr: float,
    margin: float,
) -> float:
    """One SGD epoch of margin-based translation embedding training.

    Mutates ``ent`` and ``rel`` in place.  For each positive triple (in the
    given order) one corrupted triple is formed by replacing the head or the
    tail with ``corrupt_entity``; if the hinge ``margin + d_pos - d_neg`` is
    active, an SGD step is applied and the touched entity rows are projected
    back to the unit sphere.  Returns the summed hinge loss.
    """
    total = 0.0
    for t in order:
        h, r, tl = int(heads[t]), int(rels[t]), int(tails[t])
        ce = int(corrupt_entity[t])
        if corrupt_head[t]:
            h2, t2 = ce, tl
        else:
            h2, t2 = h, ce
        pos_vec = ent[h] + rel[r] - ent[tl]
        neg_vec = ent[h2] + rel[r] - ent[t2]
        d_pos = float(np.sqrt(pos_vec @ pos_vec))
        d_neg = float(np.sqrt(neg_vec @ neg_vec))
        loss = margin + d_pos - d_neg
        if loss <= 0.0:
            continue
        total += loss
        gp = pos_vec / d_pos if d_pos > _EPS else np.zeros_like(pos_vec)
        gn = neg_vec / d_neg if d_neg > _EPS else np.zeros_like(neg_vec)
        ent[h] -= lr * gp
        ent[tl] += lr * gp
        rel[r] -= lr * (gp - gn)
        ent[h2] += lr * gn
        ent[t2] -= lr * gn
        for row in (h, tl, h2, t2):
            norm = float(np.sqrt(ent[row] @ ent[row]))
            if norm > _EPS:
                ent[row] /= norm
    return total
