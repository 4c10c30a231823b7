"""Retention measurement, error classification, and corpus-level reports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    CRITICAL_FLAG,
    CompressionResult,
    Document,
    EmbeddedToken,
    ImportanceVector,
    PipelineConfig,
)


def pool(
    tokens: Sequence[EmbeddedToken], weights: Sequence[float] | np.ndarray
) -> np.ndarray:
    """Importance-weighted mean embedding of a token subset.

    The result is not re-normalized to unit length; retention and alignment
    compare pooled directions via cosine, which is scale-free.
    """
    if len(tokens) == 0:
        raise ValueError("cannot pool an empty token subset")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(tokens),):
        raise ValueError(f"expected {len(tokens)} weights, got shape {w.shape}")
    total = float(w.sum())
    if total == 0.0:
        raise ValueError("cannot pool with all-zero weights")
    emb = np.stack([t.embedding for t in tokens])
    return (w @ emb) / total


def clamped_cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity clamped to [0, 1]; raises on a zero vector."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for a zero-vector pool")
    cos = float(np.dot(u, v)) / (nu * nv)
    return min(max(cos, 0.0), 1.0)


def _pooled_retention(
    tokens: Sequence[EmbeddedToken], kept: Sequence[int], weights: np.ndarray
) -> float:
    if len(kept) == 0:
        raise ValueError("retention undefined for an empty kept set")
    if len(kept) == len(tokens):
        return 1.0
    kept_idx = list(kept)
    full_pool = pool(tokens, weights)
    kept_pool = pool([tokens[i] for i in kept_idx], weights[kept_idx])
    # A zero pooled vector means the subset carries no measurable direction.
    if float(np.linalg.norm(full_pool)) == 0.0 or float(np.linalg.norm(kept_pool)) == 0.0:
        return 0.0
    return clamped_cosine(kept_pool, full_pool)


def retention_score(
    doc: Document, kept: Sequence[int], scores: ImportanceVector
) -> float:
    """Semantic retention of a kept subset, in [0, 1].

    Clamped cosine between the importance-weighted pooled embedding of the
    kept tokens and of the whole document. Keeping everything scores exactly
    1.0; a kept or full pool that collapses to the zero vector scores 0.0.
    """
    if len(scores) != len(doc.tokens):
        raise ValueError(
            f"scores cover {len(scores)} tokens, document has {len(doc.tokens)}"
        )
    return _pooled_retention(doc.tokens, kept, scores.scores)


@dataclass(frozen=True)
class ErrorProfile:
    """Per-document error flags; the three categories are independent."""

    semantic_loss: bool
    syntactic_error: bool
    task_inconsistency: bool


def _longest_dropped_run(n: int, kept: Sequence[int]) -> int:
    kept_set = set(kept)
    longest = 0
    run = 0
    for i in range(n):
        if i in kept_set:
            run = 0
        else:
            run += 1
            longest = max(longest, run)
    return longest


def classify_errors(
    doc: Document, kept: Sequence[int], retention: float, cfg: PipelineConfig
) -> ErrorProfile:
    """Classify compression damage for one document.

    semantic_loss: retention fell below ``theta_sem``.
    syntactic_error: some run of consecutive dropped positions exceeds ``g_max``.
    task_inconsistency: a token flagged critical was dropped.
    """
    kept_set = set(kept)
    dropped_critical = any(
        CRITICAL_FLAG in tok.flags and tok.position not in kept_set
        for tok in doc.tokens
    )
    return ErrorProfile(
        semantic_loss=retention < cfg.theta_sem,
        syntactic_error=_longest_dropped_run(len(doc.tokens), kept) > cfg.g_max,
        task_inconsistency=dropped_critical,
    )


@dataclass(frozen=True)
class ReportRow:
    """Aggregate statistics for one dataset tag."""

    tag: str
    docs: int
    baseline_tokens: int
    compressed_tokens: int
    compression_percent: float
    mean_retention: float
    mean_alignment: float | None
    semantic_loss_count: int
    syntactic_error_count: int
    task_inconsistency_count: int


@dataclass(frozen=True)
class CorpusReport:
    """Corpus-level evaluation mirroring per-dataset efficiency tables.

    ``rows`` aggregates per domain tag; ``overall`` spans the whole corpus.
    Timings and the memory figure are measurements of this run, labeled as
    estimates, and are not comparable across machines.
    """

    dataset_tag: str
    rows: tuple[ReportRow, ...]
    overall: ReportRow
    retention_curve: tuple[tuple[int, float], ...]
    timings_ms: Mapping[str, float]
    peak_memory_mb_estimate: float | None


def _aggregate(
    tag: str,
    entries: Sequence[tuple[Document, CompressionResult, ErrorProfile]],
) -> ReportRow:
    from .compress import compression_percent

    baseline = sum(doc.n_tokens for doc, _, _ in entries)
    compressed = sum(res.n_kept for _, res, _ in entries)
    alignments = [
        res.alignment_after for _, res, _ in entries if res.alignment_after is not None
    ]
    return ReportRow(
        tag=tag,
        docs=len(entries),
        baseline_tokens=baseline,
        compressed_tokens=compressed,
        compression_percent=compression_percent(baseline, compressed),
        mean_retention=float(np.mean([res.retention for _, res, _ in entries])),
        mean_alignment=float(np.mean(alignments)) if alignments else None,
        semantic_loss_count=sum(p.semantic_loss for _, _, p in entries),
        syntactic_error_count=sum(p.syntactic_error for _, _, p in entries),
        task_inconsistency_count=sum(p.task_inconsistency for _, _, p in entries),
    )


def build_report(
    results: Sequence[tuple[Document, CompressionResult]],
    dataset_tag: str,
    timings: Mapping[str, float],
    cfg: PipelineConfig,
    peak_memory_mb: float | None = None,
    bucket_width: int = 64,
) -> CorpusReport:
    """Aggregate per-document results into a corpus report.

    Compression percentages are computed from summed token counts, one row
    per domain tag plus an overall row, and the error histogram counts each
    flag across documents.
    """
    if len(results) == 0:
        raise ValueError("cannot build a report from zero results")
    triples = [
        (doc, res, classify_errors(doc, res.kept, res.retention, cfg))
        for doc, res in results
    ]
    by_tag: dict[str, list[tuple[Document, CompressionResult, ErrorProfile]]] = {}
    for triple in triples:
        by_tag.setdefault(triple[0].domain_tag, []).append(triple)
    rows = tuple(_aggregate(tag, by_tag[tag]) for tag in sorted(by_tag))
    return CorpusReport(
        dataset_tag=dataset_tag,
        rows=rows,
        overall=_aggregate(dataset_tag, triples),
        retention_curve=retention_curve(results, bucket_width),
        timings_ms=dict(timings),
        peak_memory_mb_estimate=peak_memory_mb,
    )


def retention_curve(
    results: Iterable[tuple[Document, CompressionResult]], bucket_width: int = 64
) -> tuple[tuple[int, float], ...]:
    """Mean retention bucketed by input token count.

    Bucket keys are the lower bound of each length bucket, emitted in
    increasing order.
    """
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    buckets: dict[int, list[float]] = {}
    for doc, res in results:
        key = (doc.n_tokens // bucket_width) * bucket_width
        buckets.setdefault(key, []).append(res.retention)
    return tuple((key, float(np.mean(buckets[key]))) for key in sorted(buckets))
