"""Curriculum-ordered, reward-driven hyperparameter adaptation.

Documents are processed shortest-first in buckets. Within each bucket a
seeded hill-climb perturbs one tunable at a time and keeps a candidate only
when it strictly beats the best mean reward seen so far, so the accepted
reward sequence is strictly increasing by construction. The longest 20% of
the curriculum is held out and used only to pick the final config, which
guarantees the returned config is never worse than the starting one on the
held-out documents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .compress import compress_document
from .core import CompressionResult, Document, ImportanceVector, PipelineConfig
from .multimodal import compress_multimodal
from .rng import keyed_generator
from .scoring import score_entropy

#: How each tunable is perturbed: (mode, step, low clip, high clip).
#: Additive steps move by +-step; multiplicative steps scale by (1 +- step).
STEP_TABLE: dict[str, tuple[str, float, float | None, float | None]] = {
    "lambda_sem": ("add", 0.05, 0.0, 1.0),
    "alpha": ("add", 0.05, 0.0, 0.99),
    "tau": ("mul", 0.05, None, None),
    "theta_cov": ("add", 0.05, 0.0, 1.0),
    "rho_min": ("add", 0.05, 0.01, 1.0),
}

#: Perturbation order is fixed so the seeded draws map to stable parameters.
TUNABLE_FIELDS = tuple(sorted(STEP_TABLE))

HOLDOUT_FRACTION = 0.2
DEFAULT_BUCKETS = 4


@dataclass(frozen=True)
class RewardBreakdown:
    """Reward terms for one compressed document.

    total = w_c * compression_term + w_r * retention_term - mu * sparsity_penalty
    """

    compression_term: float
    retention_term: float
    sparsity_penalty: float
    total: float


@dataclass(frozen=True)
class Checkpoint:
    """Best config and reward after finishing one curriculum bucket."""

    config: PipelineConfig
    mean_reward: float
    bucket_index: int
    accepted_moves: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.mean_reward):
            raise ValueError("checkpoint mean_reward must be finite")


def reward(
    result: CompressionResult, scores: ImportanceVector, cfg: PipelineConfig
) -> RewardBreakdown:
    """Weighted reward trading compression efficiency against retention."""
    compression_term = 1.0 - result.kept_ratio
    retention_term = result.retention
    sparsity_penalty = score_entropy(scores)
    total = (
        cfg.w_c * compression_term
        + cfg.w_r * retention_term
        - cfg.mu * sparsity_penalty
    )
    return RewardBreakdown(compression_term, retention_term, sparsity_penalty, total)


def curriculum_order(corpus: Sequence[Document]) -> list[Document]:
    """Documents sorted by ascending token count; ties by document id."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    return sorted(corpus, key=lambda doc: (doc.n_tokens, doc.id))


def bucket_curriculum(
    ordered: Sequence[Document], n_buckets: int = DEFAULT_BUCKETS
) -> list[list[Document]]:
    """Partition an ordered corpus into near-equal contiguous buckets.

    Earlier buckets get the extra document when sizes do not divide evenly;
    buckets that would be empty are omitted.
    """
    if n_buckets < 1:
        raise ValueError("need at least one bucket")
    total = len(ordered)
    base, extra = divmod(total, n_buckets)
    buckets: list[list[Document]] = []
    start = 0
    for i in range(n_buckets):
        size = base + (1 if i < extra else 0)
        if size > 0:
            buckets.append(list(ordered[start : start + size]))
        start += size
    return buckets


def _compress(doc: Document, cfg: PipelineConfig) -> CompressionResult:
    if doc.visual_tokens is not None:
        return compress_multimodal(doc, cfg)
    return compress_document(doc, cfg)


def mean_reward(docs: Sequence[Document], cfg: PipelineConfig) -> float:
    """Mean reward of compressing every document under one config."""
    if len(docs) == 0:
        raise ValueError("cannot average reward over zero documents")
    totals = []
    for doc in docs:
        result = _compress(doc, cfg)
        totals.append(reward(result, result.scores, cfg).total)
    return float(np.mean(totals))


def propose(cfg: PipelineConfig, rng: np.random.Generator) -> PipelineConfig:
    """Perturb exactly one tunable by its table step, clipped to its range."""
    name = TUNABLE_FIELDS[int(rng.integers(len(TUNABLE_FIELDS)))]
    sign = 1.0 if int(rng.integers(2)) == 1 else -1.0
    mode, step, lo, hi = STEP_TABLE[name]
    value = getattr(cfg, name)
    if mode == "add":
        value = value + sign * step
    else:
        value = value * (1.0 + sign * step)
    if lo is not None:
        value = max(lo, value)
    if hi is not None:
        value = min(hi, value)
    return cfg.with_overrides(**{name: value})


def train(
    corpus: Sequence[Document],
    cfg0: PipelineConfig,
    steps_per_bucket: int,
    *,
    n_buckets: int = DEFAULT_BUCKETS,
    on_accept: Callable[[float], None] | None = None,
) -> tuple[PipelineConfig, list[Checkpoint]]:
    """Hill-climb the compression tunables over a curriculum.

    Returns the config with the best held-out mean reward among the start
    config and every bucket checkpoint, plus the checkpoint history. With no
    accepted moves the start config comes back unchanged. ``on_accept``, when
    given, is called with the mean reward of every accepted move, in order.
    """
    if steps_per_bucket < 1:
        raise ValueError("steps_per_bucket must be >= 1")
    ordered = curriculum_order(corpus)
    n_holdout = int(round(HOLDOUT_FRACTION * len(ordered)))
    holdout = ordered[len(ordered) - n_holdout :]
    work = ordered[: len(ordered) - n_holdout]
    if not work:  # tiny corpus: climb and evaluate on the same documents
        work, holdout = list(ordered), []
    buckets = bucket_curriculum(work, n_buckets)

    rng = keyed_generator(cfg0.seed, "trainer")
    current = cfg0
    best_so_far: float | None = None
    accepted = 0
    history: list[Checkpoint] = []
    for bucket_index, bucket in enumerate(buckets):
        if best_so_far is None:
            best_so_far = mean_reward(bucket, current)
        for _ in range(steps_per_bucket):
            candidate = propose(current, rng)
            candidate_reward = mean_reward(bucket, candidate)
            if candidate_reward > best_so_far:
                current = candidate
                best_so_far = candidate_reward
                accepted += 1
                if on_accept is not None:
                    on_accept(candidate_reward)
        history.append(Checkpoint(current, best_so_far, bucket_index, accepted))

    eval_docs = holdout if holdout else work
    best = cfg0
    best_holdout = mean_reward(eval_docs, cfg0)
    for checkpoint in history:
        if checkpoint.config == best:
            continue
        score = mean_reward(eval_docs, checkpoint.config)
        if score > best_holdout:
            best = checkpoint.config
            best_holdout = score
    return best, history
