"""Budgeted keep-set selection and the retention-target feedback controller.

Selection is strictly extractive: tokens are kept or dropped, never rewritten.
A greedy pass keeps the highest-importance tokens; a repair pass then ensures
every dropped token still has a kept neighbor strong enough to represent it.
The controller grows the budget one token at a time until the retention
target is met, so the keep ratio adapts to how redundant each document is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CompressionResult,
    Document,
    ImportanceVector,
    PipelineConfig,
    TokenGraph,
)
from .graph import build_graph, row_normalize
from .metrics import retention_score
from .scoring import base_scores, propagate


@dataclass(frozen=True)
class SelectionParams:
    """Keep count and coverage threshold for one selection pass."""

    m: int
    theta_cov: float

    def __post_init__(self) -> None:
        if not isinstance(self.m, int) or isinstance(self.m, bool):
            raise ValueError(f"keep count must be an integer, got {self.m!r}")
        if self.m < 1:
            raise ValueError(f"keep count must be >= 1, got {self.m}")
        if not 0.0 <= self.theta_cov <= 1.0:
            raise ValueError(f"theta_cov {self.theta_cov} outside [0, 1]")


def selection_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score; ties break toward the smaller index."""
    return np.lexsort((np.arange(scores.size), -scores))


def select_with_constraints(
    scores: np.ndarray,
    g: TokenGraph,
    m: int,
    theta_cov: float,
    selectable: Sequence[int] | None = None,
    forced: frozenset[int] = frozenset(),
    repair: bool = True,
) -> tuple[int, ...]:
    """Greedy top-m selection over ``selectable`` nodes, then coverage repair.

    ``forced`` nodes count as kept for coverage but are not returned; the
    multimodal path uses this to let always-kept visual tokens cover dropped
    text. Repair visits dropped selectable nodes in descending score and keeps
    any with no kept neighbor of weight >= ``theta_cov``; a node with no
    neighbors at all is uncoverable and is always kept.
    """
    pool = np.asarray(selectable, dtype=np.int64) if selectable is not None else None
    if pool is None:
        order = selection_order(scores)
    else:
        sub = selection_order(scores[pool])
        order = pool[sub]
    m = min(m, order.size)
    kept = set(int(i) for i in order[:m])
    covering = kept | set(forced)
    if repair:
        for i in order[m:]:
            i = int(i)
            covered = any(
                j in covering and w >= theta_cov for j, w in g.neighbors(i)
            )
            if not covered:
                kept.add(i)
                covering.add(i)
    return tuple(sorted(kept))


def select(
    scores: ImportanceVector, g: TokenGraph, params: SelectionParams
) -> tuple[int, ...]:
    """Budgeted keep-set under the coverage constraint.

    Keeps the ``params.m`` highest-score indices, then repairs so that every
    dropped token has a kept neighbor with edge weight >= ``params.theta_cov``.
    The returned set is sorted and never smaller than the budget.
    """
    if len(scores) != g.n:
        raise ValueError(f"{len(scores)} scores against a {g.n}-node graph")
    if params.m > g.n:
        raise ValueError(f"keep count {params.m} exceeds {g.n} tokens")
    return select_with_constraints(
        scores.scores, g, params.m, params.theta_cov
    )


def controller_start(n: int, rho_min: float) -> int:
    return max(1, math.ceil(rho_min * n))


def compress_document(
    doc: Document,
    cfg: PipelineConfig,
    *,
    use_controller: bool = True,
    coverage_repair: bool = True,
) -> CompressionResult:
    """Compress one text document under the retention-target controller.

    Builds the token graph, propagates importance, then scans the keep budget
    upward from ``ceil(rho_min * n)`` until retention reaches
    ``target_retention`` (or everything is kept). With ``use_controller=False``
    a single fixed budget of ``ceil(rho * n)`` tokens is selected instead.
    ``coverage_repair=False`` disables the repair pass (ablation support).
    """
    n = len(doc.tokens)
    g = build_graph(doc, cfg)
    base = base_scores(doc, cfg)
    scores, _trace = propagate(base, row_normalize(g), cfg)

    if not use_controller:
        m = min(n, max(1, math.ceil(cfg.rho * n)))
        kept = select_with_constraints(
            scores.scores, g, m, cfg.theta_cov, repair=coverage_repair
        )
        return CompressionResult(
            n=n,
            kept=kept,
            scores=scores,
            retention=retention_score(doc, kept, scores),
            kept_ratio=len(kept) / n,
            controller_steps=1,
        )

    # The scan always terminates: at m = n the kept set is the whole document
    # and retention is exactly 1.0, which meets any target in [0, 1].
    steps = 0
    kept: tuple[int, ...] = tuple(range(n))
    retention = 1.0
    for m in range(controller_start(n, cfg.rho_min), n + 1):
        steps += 1
        kept = select_with_constraints(
            scores.scores, g, m, cfg.theta_cov, repair=coverage_repair
        )
        retention = retention_score(doc, kept, scores)
        if retention >= cfg.target_retention:
            break
    return CompressionResult(
        n=n,
        kept=kept,
        scores=scores,
        retention=retention,
        kept_ratio=len(kept) / n,
        controller_steps=steps,
    )


def compression_percent(baseline_tokens: int, compressed_tokens: int) -> float:
    """Token reduction as a percentage, rounded to one decimal for reporting."""
    if baseline_tokens <= 0:
        raise ValueError("baseline token count must be positive")
    if compressed_tokens < 0:
        raise ValueError("compressed token count cannot be negative")
    if compressed_tokens > baseline_tokens:
        raise ValueError(
            f"compressed count {compressed_tokens} exceeds baseline {baseline_tokens}"
        )
    return round(100.0 * (1.0 - compressed_tokens / baseline_tokens), 1)
