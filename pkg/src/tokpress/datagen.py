"""Deterministic synthetic corpus generation.

Documents are built around a handful of fixed topic directions: every token
embedding is a noisy draw near one of its document's active topics, and a
configurable fraction of tokens are near-copies of earlier tokens in the same
document. That controlled redundancy is what makes the corpora compressible
in a measurable, reproducible way. All randomness is keyed per
(seed, document, token), so output is identical regardless of generation
order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Document, DocumentError, EmbeddedToken, CRITICAL_FLAG
from .rng import keyed_generator

#: Perturbation scale for near-duplicate tokens.
DUPLICATE_JITTER = 0.01

#: Most topics a single document mixes.
MAX_ACTIVE_TOPICS = 3


@dataclass(frozen=True)
class GenSpec:
    """Parameters of one synthetic corpus."""

    n_docs: int
    tokens_min: int
    tokens_max: int
    d: int
    n_topics: int = 8
    redundancy: float = 0.0
    noise_sigma: float = 0.25
    critical_frac: float = 0.05
    multimodal: bool = False
    visual_tokens_per_doc: int = 8
    seed: int = 0
    domain_tag: str = "synthetic"

    def __post_init__(self) -> None:
        if self.n_docs < 0:
            raise ConfigError("n_docs must be >= 0")
        if self.tokens_min < 1:
            raise ConfigError("tokens_min must be >= 1")
        if self.tokens_max < self.tokens_min:
            raise ConfigError("tokens_max must be >= tokens_min")
        if self.d < 2:
            raise ConfigError("d must be >= 2")
        if self.n_topics < 1:
            raise ConfigError("n_topics must be >= 1")
        if not 0.0 <= self.redundancy <= 1.0:
            raise ConfigError("redundancy must be in [0, 1]")
        if self.noise_sigma < 0.0 or not math.isfinite(self.noise_sigma):
            raise ConfigError("noise_sigma must be finite and >= 0")
        if not 0.0 <= self.critical_frac <= 1.0:
            raise ConfigError("critical_frac must be in [0, 1]")
        if self.multimodal and self.visual_tokens_per_doc < 1:
            raise ConfigError("visual_tokens_per_doc must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise DocumentError("degenerate zero-length draw")  # pragma: no cover
    return vec / norm


def topic_vectors(spec: GenSpec) -> np.ndarray:
    """The corpus's fixed unit topic directions, derived from the seed."""
    rng = keyed_generator(spec.seed, "topics")
    raw = rng.normal(size=(spec.n_topics, spec.d))
    return np.stack([_unit(row) for row in raw])


def _doc_id(index: int) -> str:
    return f"doc-{index:05d}"


def _noisy_token(base: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0.0:
        return base  # exact: renormalizing a unit vector can shift the last ulp
    return _unit(base + sigma * rng.normal(size=base.shape))


def _generate_document(spec: GenSpec, topics: np.ndarray, index: int) -> Document:
    doc_rng = keyed_generator(spec.seed, "doc", index)
    n_tokens = int(doc_rng.integers(spec.tokens_min, spec.tokens_max + 1))
    active_count = int(doc_rng.integers(1, min(MAX_ACTIVE_TOPICS, spec.n_topics) + 1))
    active = doc_rng.choice(spec.n_topics, size=active_count, replace=False)

    embeddings: list[np.ndarray] = []
    tokens: list[EmbeddedToken] = []
    for t in range(n_tokens):
        rng = keyed_generator(spec.seed, "tok", index, t)
        duplicate = t > 0 and float(rng.random()) < spec.redundancy
        if duplicate:
            source = int(rng.integers(0, t))
            emb = _noisy_token(embeddings[source], DUPLICATE_JITTER, rng)
        else:
            topic = topics[int(active[int(rng.integers(0, active_count))])]
            emb = _noisy_token(topic, spec.noise_sigma, rng)
        flags = frozenset({CRITICAL_FLAG}) if float(rng.random()) < spec.critical_frac else frozenset()
        embeddings.append(emb)
        tokens.append(EmbeddedToken(f"tok-{index}-{t}", emb, t, flags))

    visual = None
    if spec.multimodal:
        visual_tokens: list[EmbeddedToken] = []
        for v in range(spec.visual_tokens_per_doc):
            rng = keyed_generator(spec.seed, "vis", index, v)
            topic = topics[int(active[int(rng.integers(0, active_count))])]
            emb = _noisy_token(topic, spec.noise_sigma, rng)
            visual_tokens.append(EmbeddedToken(f"vis-{index}-{v}", emb, v))
        visual = tuple(visual_tokens)

    return Document(
        id=_doc_id(index),
        tokens=tuple(tokens),
        visual_tokens=visual,
        domain_tag=spec.domain_tag,
    )


def generate(spec: GenSpec, threads: int = 1) -> list[Document]:
    """Generate the corpus described by ``spec``.

    Identical specs produce byte-identical corpora regardless of ``threads``,
    because every draw is keyed by (seed, document, token); every document
    passes validation at the spec's dimension.
    """
    topics = topic_vectors(spec)
    if threads > 1 and spec.n_docs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(
                pool.map(lambda i: _generate_document(spec, topics, i), range(spec.n_docs))
            )
    return [_generate_document(spec, topics, i) for i in range(spec.n_docs)]


def inject_noise(doc: Document, sigma: float, seed: int) -> Document:
    """Perturb every embedding with seeded Gaussian noise, then renormalize.

    ``sigma = 0`` returns a document equal to the input. Noise draws are keyed
    by (seed, document id, stream, token index) so repeat calls agree exactly.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return doc

    def perturb(tokens: tuple[EmbeddedToken, ...], stream: str) -> tuple[EmbeddedToken, ...]:
        out = []
        for tok in tokens:
            rng = keyed_generator(seed, "noise", doc.id, stream, tok.position)
            emb = _noisy_token(tok.embedding, sigma, rng)
            out.append(EmbeddedToken(tok.text, emb, tok.position, tok.flags))
        return tuple(out)

    visual = perturb(doc.visual_tokens, "visual") if doc.visual_tokens else None
    return Document(doc.id, perturb(doc.tokens, "text"), visual, doc.domain_tag)
