"""Shared domain types, configuration schema, and document validation.

Everything downstream (graph construction, scoring, selection, reporting)
consumes the types defined here. All types are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

import numpy as np

#: Maximum allowed deviation of an input embedding from unit L2 norm.
NORM_TOLERANCE = 1e-6

#: Flag marking a token as task-relevant; dropping such a token is reported
#: as a task inconsistency by the error classifier.
CRITICAL_FLAG = "critical"


class TokpressError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TokpressError, ValueError):
    """A configuration value is out of range; the message names the field."""


class DocumentError(TokpressError, ValueError):
    """A document violates a structural invariant."""


class CorpusFormatError(TokpressError, ValueError):
    """A corpus or result file is malformed; the message carries the line number."""


def _readonly_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddedToken:
    """One input token: text, a unit-norm embedding, and its original position.

    The embedding must be within ``NORM_TOLERANCE`` of unit L2 norm;
    ``validate_document`` rescales it to machine-precision unit length.
    """

    text: str
    embedding: np.ndarray
    position: int
    flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "embedding", _readonly_f64(self.embedding))
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddedToken):
            return NotImplemented
        return (
            self.text == other.text
            and self.position == other.position
            and self.flags == other.flags
            and np.array_equal(self.embedding, other.embedding)
        )


@dataclass(frozen=True, eq=False)
class Document:
    """An ordered token sequence, optionally paired with visual tokens.

    Token positions must be exactly 0..n-1 in list order; visual tokens,
    when present, share the embedding dimension and are positioned 0..m-1.
    """

    id: str
    tokens: tuple[EmbeddedToken, ...]
    visual_tokens: tuple[EmbeddedToken, ...] | None = None
    domain_tag: str = "default"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.visual_tokens is not None:
            object.__setattr__(self, "visual_tokens", tuple(self.visual_tokens))

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def embedding_matrix(self) -> np.ndarray:
        """Token embeddings stacked into an (n, d) array."""
        return np.stack([t.embedding for t in self.tokens])

    def visual_matrix(self) -> np.ndarray:
        if self.visual_tokens is None:
            raise DocumentError(f"document {self.id!r} has no visual tokens")
        return np.stack([t.embedding for t in self.visual_tokens])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Document):
            return NotImplemented
        return (
            self.id == other.id
            and self.domain_tag == other.domain_tag
            and self.tokens == other.tokens
            and self.visual_tokens == other.visual_tokens
        )


@dataclass(frozen=True, eq=False)
class TokenGraph:
    """Sparse symmetric weighted graph over a document's tokens.

    Edges are stored once under the canonical key ``(min(i, j), max(i, j))``
    with weights in (0, 1]; zero-weight pairs are never stored since they
    carry no interdependency. ``degree_meta[i]`` is ``(degree, max incident
    weight)`` for node i.
    """

    n: int
    edges: Mapping[tuple[int, int], float]
    degree_meta: tuple[tuple[int, float], ...] = field(default=())
    _adjacency: tuple[tuple[tuple[int, float], ...], ...] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("graph must have at least one node")
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for (i, j), w in self.edges.items():
            if i == j:
                raise ValueError(f"self-edge stored at node {i}")
            if not (i < j):
                raise ValueError(f"edge key ({i}, {j}) is not canonical")
            if not 0.0 < w <= 1.0:
                raise ValueError(f"edge ({i}, {j}) weight {w} outside (0, 1]")
            adj[i].append((j, w))
            adj[j].append((i, w))
        adjacency = tuple(tuple(sorted(nbrs)) for nbrs in adj)
        object.__setattr__(self, "_adjacency", adjacency)
        if not self.degree_meta:
            meta = tuple(
                (len(nbrs), max((w for _, w in nbrs), default=0.0))
                for nbrs in adjacency
            )
            object.__setattr__(self, "degree_meta", meta)

    def weight(self, i: int, j: int) -> float:
        """Weight of edge (i, j), or 0.0 if absent. Symmetric by storage."""
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self.edges.get(key, 0.0)

    def neighbors(self, i: int) -> tuple[tuple[int, float], ...]:
        return self._adjacency[i]

    @property
    def edge_count(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class ImportanceVector:
    """Per-token significance distribution: nonnegative, sums to 1 (±1e-9)."""

    scores: np.ndarray

    def __post_init__(self) -> None:
        arr = _readonly_f64(self.scores)
        if arr.ndim != 1:
            raise ValueError("importance scores must be a 1-d vector")
        if arr.size < 1:
            raise ValueError("importance vector must be nonempty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("importance scores contain non-finite entries")
        if np.any(arr < 0.0):
            raise ValueError("importance scores must be nonnegative")
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"importance scores sum to {total}, expected 1 ± 1e-9")
        object.__setattr__(self, "scores", arr)

    def __len__(self) -> int:
        return int(self.scores.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImportanceVector):
            return NotImplemented
        return np.array_equal(self.scores, other.scores)


@dataclass(frozen=True, eq=False)
class CompressionResult:
    """Outcome of compressing one document.

    ``kept`` holds original token indices in increasing order, so downstream
    consumers can reconstruct the surviving sequence in input order. ``scores``
    is the importance vector the selection was made from; for multimodal
    documents it spans text plus visual nodes (text first) and is ``None``
    only when the result was parsed from a file written without per-token
    scores.
    """

    n: int
    kept: tuple[int, ...]
    scores: ImportanceVector | None
    retention: float
    kept_ratio: float
    controller_steps: int
    alignment_before: float | None = None
    alignment_after: float | None = None

    def __post_init__(self) -> None:
        kept = tuple(int(i) for i in self.kept)
        object.__setattr__(self, "kept", kept)
        if self.n < 1:
            raise ValueError("result token count must be >= 1")
        if not 1 <= len(kept) <= self.n:
            raise ValueError(f"kept size {len(kept)} outside [1, {self.n}]")
        if kept[0] < 0 or kept[-1] >= self.n:
            raise ValueError("kept indices out of range")
        if any(a >= b for a, b in zip(kept, kept[1:])):
            raise ValueError("kept indices must be strictly increasing")
        if self.kept_ratio != len(kept) / self.n:
            raise ValueError("kept_ratio must equal |kept| / n exactly")
        if not 0.0 <= self.retention <= 1.0:
            raise ValueError(f"retention {self.retention} outside [0, 1]")
        if self.controller_steps < 1:
            raise ValueError("controller_steps must be >= 1")
        for name in ("alignment_before", "alignment_after"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} {val} outside [0, 1]")
        if self.scores is not None and len(self.scores) < self.n:
            raise ValueError("scores must cover every token")

    @property
    def n_kept(self) -> int:
        return len(self.kept)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompressionResult):
            return NotImplemented
        return (
            self.n == other.n
            and self.kept == other.kept
            and self.scores == other.scores
            and self.retention == other.retention
            and self.kept_ratio == other.kept_ratio
            and self.controller_steps == other.controller_steps
            and self.alignment_before == other.alignment_before
            and self.alignment_after == other.alignment_after
        )


def _check_range(name: str, value, lo=None, hi=None, *, lo_open=False, hi_open=False,
                 integer=False) -> None:
    if integer:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
    else:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{name} must be finite, got {value!r}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(f"{name} = {value} violates lower bound "
                          f"{'>' if lo_open else '>='} {lo}")
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise ConfigError(f"{name} = {value} violates upper bound "
                          f"{'<' if hi_open else '<='} {hi}")


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the compression pipeline, with validated ranges.

    d: embedding dimension shared by all documents in a run.
    lambda_sem: semantic/positional mix weight in the edge formula.
    tau: positional decay length of the locality kernel.
    k_neighbors: per-node fan-out of the sparse token graph.
    alpha: propagation strength; the base scores anchor with weight 1 - alpha.
    epsilon / max_iters: propagation stopping rule (L1 change, iteration cap).
    rho: keep ratio used by fixed-budget compression (no feedback controller).
    rho_min: the controller's starting keep ratio (its floor).
    theta_cov: minimum edge weight for a kept neighbor to cover a dropped token.
    target_retention: the controller's semantic retention target.
    k_cross: visual neighbors retained per text token in cross-modal edges.
    delta_align: tolerated drop in alignment versus the uncompressed document.
    theta_sem / g_max: thresholds for semantic-loss and dropped-run errors.
    w_c, w_r, mu: reward weights (compression, retention) and sparsity penalty.
    seed: 64-bit unsigned seed for every derived random stream.
    """

    d: int = 16
    lambda_sem: float = 0.7
    tau: float = 4.0
    k_neighbors: int = 8
    alpha: float = 0.85
    epsilon: float = 1e-9
    max_iters: int = 100
    rho: float = 0.55
    rho_min: float = 0.1
    theta_cov: float = 0.3
    target_retention: float = 0.9
    k_cross: int = 4
    delta_align: float = 0.05
    theta_sem: float = 0.85
    g_max: int = 3
    w_c: float = 0.5
    w_r: float = 0.5
    mu: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        _check_range("d", self.d, lo=2, integer=True)
        _check_range("lambda_sem", self.lambda_sem, lo=0.0, hi=1.0)
        _check_range("tau", self.tau, lo=0.0, lo_open=True)
        _check_range("k_neighbors", self.k_neighbors, lo=1, integer=True)
        _check_range("alpha", self.alpha, lo=0.0, hi=1.0, hi_open=True)
        _check_range("epsilon", self.epsilon, lo=0.0, lo_open=True)
        _check_range("max_iters", self.max_iters, lo=1, integer=True)
        _check_range("rho", self.rho, lo=0.0, hi=1.0, lo_open=True)
        _check_range("rho_min", self.rho_min, lo=0.0, hi=1.0, lo_open=True)
        _check_range("theta_cov", self.theta_cov, lo=0.0, hi=1.0)
        _check_range("target_retention", self.target_retention, lo=0.0, hi=1.0)
        _check_range("k_cross", self.k_cross, lo=1, integer=True)
        _check_range("delta_align", self.delta_align, lo=0.0)
        _check_range("theta_sem", self.theta_sem, lo=0.0, hi=1.0)
        _check_range("g_max", self.g_max, lo=1, integer=True)
        _check_range("w_c", self.w_c, lo=0.0)
        _check_range("w_r", self.w_r, lo=0.0)
        _check_range("mu", self.mu, lo=0.0)
        _check_range("seed", self.seed, lo=0, hi=2**64 - 1, integer=True)

    def with_overrides(self, **changes) -> "PipelineConfig":
        """A copy with the given fields replaced; revalidates on construction."""
        known = {f.name for f in fields(self)}
        for key in changes:
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
        return replace(self, **changes)


def _validate_stream(
    doc_id: str, tokens: tuple[EmbeddedToken, ...], d: int, label: str
) -> tuple[tuple[EmbeddedToken, ...], bool]:
    """Check one token stream; returns (possibly renormalized tokens, changed)."""
    out: list[EmbeddedToken] = []
    changed = False
    for idx, tok in enumerate(tokens):
        where = f"document {doc_id!r}, {label} {idx}"
        emb = tok.embedding
        if emb.ndim != 1 or emb.size != d:
            raise DocumentError(
                f"{where}: dimension mismatch, embedding has {emb.size} "
                f"components, expected {d}"
            )
        if not np.all(np.isfinite(emb)):
            raise DocumentError(f"{where}: non-finite embedding entry")
        if tok.position != idx:
            raise DocumentError(
                f"{where}: non-contiguous positions, found {tok.position}"
            )
        norm = float(np.linalg.norm(emb))
        if norm < 1e-12:
            raise DocumentError(f"{where}: non-normalizable embedding")
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise DocumentError(
                f"{where}: embedding norm {norm} deviates from 1 by more "
                f"than {NORM_TOLERANCE}"
            )
        # Rescale only when the deviation is measurable; this keeps
        # validation idempotent while still landing within 1e-12 of unit.
        if abs(norm - 1.0) > 1e-12:
            tok = EmbeddedToken(tok.text, emb / norm, tok.position, tok.flags)
            changed = True
        out.append(tok)
    return tuple(out), changed


def validate_document(doc: Document, cfg: PipelineConfig) -> Document:
    """Validate a document against the config; renormalize near-unit embeddings.

    Embeddings within ``NORM_TOLERANCE`` of unit norm are rescaled to exact
    unit length; anything further off, non-finite, wrongly sized, or with
    non-contiguous positions is rejected with a ``DocumentError``.
    """
    if len(doc.tokens) == 0:
        raise DocumentError(f"document {doc.id!r}: empty token list")
    tokens, t_changed = _validate_stream(doc.id, doc.tokens, cfg.d, "token")
    visual = doc.visual_tokens
    v_changed = False
    if visual is not None:
        if len(visual) == 0:
            raise DocumentError(f"document {doc.id!r}: empty visual token list")
        visual, v_changed = _validate_stream(doc.id, visual, cfg.d, "visual token")
    if not (t_changed or v_changed):
        return doc
    return Document(doc.id, tokens, visual, doc.domain_tag)
