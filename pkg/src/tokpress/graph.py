"""Token-interdependency graph construction.

Edge weights blend clamped cosine similarity with an exponential positional
kernel, so the graph encodes both what a token says and where it sits. The
graph is sparsified to each node's top-k strongest candidates and symmetrized
by union, which keeps propagation cheap without orphaning any node.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Document, DocumentError, PipelineConfig, TokenGraph


def edge_weight(
    e_i: np.ndarray,
    e_j: np.ndarray,
    i: int,
    j: int,
    cfg: PipelineConfig,
) -> float:
    """Blended affinity of two tokens, in [0, 1].

    Computes ``lambda_sem * max(0, e_i . e_j) + (1 - lambda_sem) *
    exp(-|i - j| / tau)``. Cosine is clamped at zero before mixing: negative
    similarity conveys no interdependency.
    """
    if i == j:
        raise ValueError(f"self-edge requested at position {i}")
    cos = float(np.dot(e_i, e_j))
    cos = min(max(cos, 0.0), 1.0)
    positional = math.exp(-abs(i - j) / cfg.tau)
    return cfg.lambda_sem * cos + (1.0 - cfg.lambda_sem) * positional


def _pairwise_weights(emb: np.ndarray, positions: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """All-pairs weight matrix; diagonal poisoned to -1 so self never ranks."""
    cos = np.clip(emb @ emb.T, 0.0, 1.0)
    dist = np.abs(positions[:, None] - positions[None, :])
    w = cfg.lambda_sem * cos + (1.0 - cfg.lambda_sem) * np.exp(-dist / cfg.tau)
    np.fill_diagonal(w, -1.0)
    return w


def _topk_edges(w: np.ndarray, k: int) -> dict[tuple[int, int], float]:
    """Symmetric union of per-row top-k picks; ties break toward smaller j."""
    n = w.shape[0]
    cols = np.arange(n)
    edges: dict[tuple[int, int], float] = {}
    for i in range(n):
        order = np.lexsort((cols, -w[i]))
        for j in order[:k]:
            weight = float(w[i, j])
            if weight <= 0.0:
                break  # remaining candidates are no stronger
            key = (i, int(j)) if i < j else (int(j), i)
            edges[key] = weight
    return edges


def build_graph(doc: Document, cfg: PipelineConfig) -> TokenGraph:
    """Sparse symmetric graph over a validated document's tokens.

    For each node the ``k_neighbors`` highest-weight candidates are retained
    (ties toward the smaller index) and the edge set is the symmetric union.
    A single-token document yields an empty edge set.
    """
    n = len(doc.tokens)
    if n == 1:
        return TokenGraph(n=1, edges={})
    emb = doc.embedding_matrix()
    positions = np.array([t.position for t in doc.tokens], dtype=np.float64)
    w = _pairwise_weights(emb, positions, cfg)
    return TokenGraph(n=n, edges=_topk_edges(w, cfg.k_neighbors))


def row_normalize(g: TokenGraph) -> np.ndarray:
    """Row-stochastic transition table for propagation.

    Rows with positive weighted degree are normalized to sum to 1; isolated
    nodes get a self-loop so the table stays stochastic.
    """
    p = np.zeros((g.n, g.n), dtype=np.float64)
    for (i, j), w in g.edges.items():
        p[i, j] = w
        p[j, i] = w
    degrees = p.sum(axis=1)
    for i in range(g.n):
        if degrees[i] > 0.0:
            p[i] /= degrees[i]
        else:
            p[i, i] = 1.0
    return p


def cross_modal_edges(
    doc: Document, cfg: PipelineConfig
) -> dict[tuple[int, int], float]:
    """Top ``k_cross`` visual neighbors per text token, by clamped cosine.

    Keys are (text index, visual index); zero-weight pairs are not stored.
    """
    if doc.visual_tokens is None:
        raise DocumentError(f"document {doc.id!r} has no visual tokens")
    text = doc.embedding_matrix()
    visual = doc.visual_matrix()
    sim = np.clip(text @ visual.T, 0.0, 1.0)
    m = sim.shape[1]
    cols = np.arange(m)
    edges: dict[tuple[int, int], float] = {}
    for i in range(sim.shape[0]):
        order = np.lexsort((cols, -sim[i]))
        for j in order[: cfg.k_cross]:
            weight = float(sim[i, j])
            if weight <= 0.0:
                break
            edges[(i, int(j))] = weight
    return edges
