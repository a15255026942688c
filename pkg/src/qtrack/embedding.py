"""Instance embeddings and the two similarity normalizations built on their dot products.

``assignment_probabilities`` is the training-time distribution over reference
identities with an extra "no existing identity" label at index 0.
``bidirectional_softmax`` is the inference-time similarity averaging the
row-wise and column-wise softmaxes of the candidate/reference dot products.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

DEFAULT_EMBEDDING_DIM = 256


def as_embedding(values) -> np.ndarray:
    e = np.asarray(values, dtype=float)
    if e.ndim != 1:
        raise ValueError(f"embedding must be a flat vector, got shape {e.shape}")
    if not np.isfinite(e).all():
        raise ValueError("embedding contains NaN or infinite entries")
    return e


def stack_embeddings(embeddings: Sequence, dim: int | None = None) -> np.ndarray:
    """Stack embeddings into an (n, d) matrix, checking every row has the same length."""
    rows = [as_embedding(e) for e in embeddings]
    if not rows:
        return np.zeros((0, dim or 0))
    d = rows[0].shape[0] if dim is None else dim
    for k, r in enumerate(rows):
        if r.shape[0] != d:
            raise ValueError(f"embedding {k} has dimension {r.shape[0]}, expected {d}")
    return np.stack(rows)


def l2_normalize(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


def assignment_probabilities(e_i, refs: Sequence) -> np.ndarray:
    """Probabilities over labels 0..N for one candidate against N references.

    Label n >= 1 has weight exp(e_i . e_n); label 0 has the constant weight 1,
    i.e. an implicit logit of 0.
    """
    e_i = as_embedding(e_i)
    R = stack_embeddings(refs, dim=e_i.shape[0])
    logits = np.concatenate(([0.0], R @ e_i))
    # the shift includes the implicit zero logit so exp(-shift) never overflows either
    shift = max(0.0, logits.max())
    w = np.exp(logits - shift)
    return w / w.sum()


def bidirectional_softmax(cands: Sequence, refs: Sequence) -> np.ndarray:
    """(M, N) similarity: mean of the softmax over references and the softmax over candidates."""
    C = stack_embeddings(cands)
    R = stack_embeddings(refs, dim=C.shape[1] if len(C) else None)
    if C.shape[0] == 0 or R.shape[0] == 0:
        return np.zeros((C.shape[0], R.shape[0]))
    if C.shape[1] != R.shape[1]:
        raise ValueError(f"embedding dimensions differ: {C.shape[1]} vs {R.shape[1]}")
    dots = C @ R.T
    row = np.exp(dots - dots.max(axis=1, keepdims=True))
    row /= row.sum(axis=1, keepdims=True)
    col = np.exp(dots - dots.max(axis=0, keepdims=True))
    col /= col.sum(axis=0, keepdims=True)
    return (row + col) / 2
