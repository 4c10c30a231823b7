"""Compression of paired text + visual documents with an alignment floor.

Importance is propagated over an extended graph spanning both modalities, so
cross-modal affinity feeds back into text-token significance. Only text
tokens are ever dropped; the visual stream is fixed context. On top of the
retention target, the controller refuses keep sets whose pooled text drifts
more than ``delta_align`` away from the visual pool relative to the
uncompressed document.
"""

from __future__ import annotations

import math

import numpy as np

from .compress import controller_start, select_with_constraints
from .core import (
    CompressionResult,
    Document,
    DocumentError,
    ImportanceVector,
    PipelineConfig,
    TokenGraph,
)
from .graph import _pairwise_weights, _topk_edges, cross_modal_edges, row_normalize
from .metrics import _pooled_retention, clamped_cosine, pool
from .scoring import _attention_softmax, propagate


def alignment_score(text_pool: np.ndarray, visual_pool: np.ndarray) -> float:
    """Clamped cosine between pooled text and pooled visual embeddings."""
    return clamped_cosine(text_pool, visual_pool)


def extended_graph(doc: Document, cfg: PipelineConfig) -> TokenGraph:
    """Joint graph over text and visual tokens.

    Text-text and visual-visual edges are built exactly like a text-only
    graph (each within its own positional axis); cross edges come from the
    top-``k_cross`` clamped-cosine pairs. Visual nodes are indexed after the
    text nodes.
    """
    if doc.visual_tokens is None:
        raise DocumentError(f"document {doc.id!r} has no visual tokens")
    n = len(doc.tokens)
    m = len(doc.visual_tokens)
    edges: dict[tuple[int, int], float] = {}
    if n > 1:
        w_text = _pairwise_weights(
            doc.embedding_matrix(),
            np.arange(n, dtype=np.float64),
            cfg,
        )
        edges.update(_topk_edges(w_text, cfg.k_neighbors))
    if m > 1:
        w_vis = _pairwise_weights(
            doc.visual_matrix(),
            np.arange(m, dtype=np.float64),
            cfg,
        )
        for (i, j), w in _topk_edges(w_vis, cfg.k_neighbors).items():
            edges[(n + i, n + j)] = w
    for (ti, vj), w in cross_modal_edges(doc, cfg).items():
        edges[(ti, n + vj)] = w
    return TokenGraph(n=n + m, edges=edges)


def joint_base_scores(doc: Document, cfg: PipelineConfig) -> ImportanceVector:
    """Attention base scores over text plus visual nodes, joint-mean context."""
    emb = np.vstack([doc.embedding_matrix(), doc.visual_matrix()])
    return ImportanceVector(_attention_softmax(emb, emb.mean(axis=0)))


def compress_multimodal(
    doc: Document,
    cfg: PipelineConfig,
    *,
    use_controller: bool = True,
    coverage_repair: bool = True,
) -> CompressionResult:
    """Compress the text stream of a paired document.

    All visual tokens are kept; they participate in propagation and may cover
    dropped text tokens. The controller grows the text budget until both the
    retention target and the alignment floor
    (``alignment_after >= alignment_before - delta_align``) hold, or all text
    is kept. Setting ``delta_align`` to 1.0 disables the alignment constraint.
    """
    if doc.visual_tokens is None:
        raise DocumentError(f"document {doc.id!r} has no visual tokens")
    n = len(doc.tokens)
    g = extended_graph(doc, cfg)
    scores, _trace = propagate(joint_base_scores(doc, cfg), row_normalize(g), cfg)

    text_weights = scores.scores[:n]
    visual_weights = scores.scores[n:]
    visual_pool = pool(doc.visual_tokens, visual_weights)
    align_before = alignment_score(pool(doc.tokens, text_weights), visual_pool)
    text_nodes = range(n)
    forced_visual = frozenset(range(n, g.n))

    def evaluate(m: int) -> tuple[tuple[int, ...], float, float]:
        kept = select_with_constraints(
            scores.scores,
            g,
            m,
            cfg.theta_cov,
            selectable=text_nodes,
            forced=forced_visual,
            repair=coverage_repair,
        )
        retention = _pooled_retention(doc.tokens, kept, text_weights)
        kept_pool = pool([doc.tokens[i] for i in kept], text_weights[list(kept)])
        align_after = alignment_score(kept_pool, visual_pool)
        return kept, retention, align_after

    if not use_controller:
        m = min(n, max(1, math.ceil(cfg.rho * n)))
        kept, retention, align_after = evaluate(m)
        return CompressionResult(
            n=n,
            kept=kept,
            scores=scores,
            retention=retention,
            kept_ratio=len(kept) / n,
            controller_steps=1,
            alignment_before=align_before,
            alignment_after=align_after,
        )

    steps = 0
    kept: tuple[int, ...] = tuple(range(n))
    retention = 1.0
    align_after = align_before
    for m in range(controller_start(n, cfg.rho_min), n + 1):
        steps += 1
        kept, retention, align_after = evaluate(m)
        if retention >= cfg.target_retention and (
            align_after >= align_before - cfg.delta_align
        ):
            break
    return CompressionResult(
        n=n,
        kept=kept,
        scores=scores,
        retention=retention,
        kept_ratio=len(kept) / n,
        controller_steps=steps,
        alignment_before=align_before,
        alignment_after=align_after,
    )
