"""Attention-style base importance and iterative reinforcement propagation.

Base scores come from a softmax over each token's affinity with the document
mean; propagation then mixes every score with its graph neighborhood until a
fixed point, so tokens embedded in strong contexts are reinforced while
isolated low-affinity tokens stay anchored to their base score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import Document, ImportanceVector, PipelineConfig


@dataclass(frozen=True)
class PropagationTrace:
    """Record of one propagation run: how long it took and whether it settled."""

    iterations: int
    final_delta: float
    converged: bool


def base_scores(doc: Document, cfg: PipelineConfig) -> ImportanceVector:
    """Softmax attention of each token against the document mean embedding."""
    emb = doc.embedding_matrix()
    return ImportanceVector(_attention_softmax(emb, emb.mean(axis=0)))


def _attention_softmax(emb: np.ndarray, context: np.ndarray) -> np.ndarray:
    logits = (emb @ context) / math.sqrt(emb.shape[1])
    logits -= logits.max()  # shift for numerical stability
    exp = np.exp(logits)
    return exp / exp.sum()


def propagation_steps(
    b: ImportanceVector, p: np.ndarray, cfg: PipelineConfig
) -> Iterator[np.ndarray]:
    """Successive iterates of ``s <- (1 - alpha) * b + alpha * P^T s``.

    Starts from ``s = b`` and yields after every update, up to ``max_iters``
    times. Each iterate keeps the probability-vector invariants because P is
    row-stochastic.
    """
    n = len(b)
    if p.shape != (n, n):
        raise ValueError(
            f"dimension mismatch: {n} scores against {p.shape} transition table"
        )
    base = b.scores
    pt = np.ascontiguousarray(p.T)
    s = base
    for _ in range(cfg.max_iters):
        s = (1.0 - cfg.alpha) * base + cfg.alpha * (pt @ s)
        yield s


def propagate(
    b: ImportanceVector, p: np.ndarray, cfg: PipelineConfig
) -> tuple[ImportanceVector, PropagationTrace]:
    """Iterate propagation to a fixed point (or the iteration cap).

    Stops at the first iterate whose L1 change falls below ``epsilon``.
    Hitting ``max_iters`` first is not an error; the trace records
    ``converged=False``.
    """
    prev = b.scores
    iterations = 0
    delta = 0.0
    converged = False
    for s in propagation_steps(b, p, cfg):
        iterations += 1
        delta = float(np.abs(s - prev).sum())
        prev = s
        if delta < cfg.epsilon:
            converged = True
            break
    return ImportanceVector(prev), PropagationTrace(iterations, delta, converged)


def score_entropy(s: ImportanceVector) -> float:
    """Normalized Shannon entropy of the score distribution, in [0, 1].

    0 for a one-hot vector, 1 for uniform. Used as the sparsity penalty in
    the training reward. Undefined for a single token.
    """
    n = len(s)
    if n < 2:
        raise ValueError("score entropy needs at least 2 tokens")
    arr = s.scores
    positive = arr[arr > 0.0]
    h = -float(np.sum(positive * np.log(positive)))
    return h / math.log(n)
