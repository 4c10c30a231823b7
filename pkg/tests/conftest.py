from __future__ import annotations

import numpy as np
import pytest

from tokpress import Document, EmbeddedToken, PipelineConfig


def unit(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


def random_document(
    rng: np.random.Generator,
    n: int,
    d: int,
    doc_id: str = "doc",
    domain: str = "test",
    critical: tuple[int, ...] = (),
    n_visual: int = 0,
) -> Document:
    """A document of random unit embeddings; optionally multimodal."""
    tokens = tuple(
        EmbeddedToken(
            f"t{i}",
            unit(rng.normal(size=d)),
            i,
            frozenset({"critical"}) if i in critical else frozenset(),
        )
        for i in range(n)
    )
    visual = None
    if n_visual:
        visual = tuple(
            EmbeddedToken(f"v{j}", unit(rng.normal(size=d)), j)
            for j in range(n_visual)
        )
    return Document(id=doc_id, tokens=tokens, visual_tokens=visual, domain_tag=domain)


def basis_token(i: int, axis: int, d: int, flags: frozenset[str] = frozenset()) -> EmbeddedToken:
    emb = np.zeros(d)
    emb[axis] = 1.0
    return EmbeddedToken(f"t{i}", emb, i, flags)


@pytest.fixture
def cfg() -> PipelineConfig:
    return PipelineConfig()
