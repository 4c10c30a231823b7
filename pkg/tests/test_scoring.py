"""Base attention scores and reinforcement propagation.

The propagation fixed point is checked against a dense direct linear solve,
which shares no code with the iterative path.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from tokpress import (
    Document,
    EmbeddedToken,
    ImportanceVector,
    PipelineConfig,
    base_scores,
    build_graph,
    propagate,
    propagation_steps,
    row_normalize,
    score_entropy,
)
from tokpress.core import TokenGraph

from conftest import random_document, unit


def oracle_softmax_scores(doc):
    """Re-derive the attention softmax with plain Python arithmetic."""
    embs = [list(map(float, t.embedding)) for t in doc.tokens]
    d = len(embs[0])
    context = [math.fsum(e[k] for e in embs) / len(embs) for k in range(d)]
    logits = [
        math.fsum(e[k] * context[k] for k in range(d)) / math.sqrt(d) for e in embs
    ]
    peak = max(logits)
    exps = [math.exp(z - peak) for z in logits]
    total = math.fsum(exps)
    return [x / total for x in exps]


def test_base_scores_singleton(cfg):
    rng = np.random.default_rng(30)
    doc = random_document(rng, 1, cfg.d)
    assert base_scores(doc, cfg).scores.tolist() == [1.0]


def test_base_scores_identical_tokens_uniform(cfg):
    e = unit(np.arange(1.0, cfg.d + 1.0))
    doc = Document("u", tuple(EmbeddedToken(f"t{i}", e, i) for i in range(5)))
    s = base_scores(doc, cfg).scores
    assert np.allclose(s, 0.2, atol=1e-15)


def test_base_scores_match_independent_softmax(cfg):
    rng = np.random.default_rng(31)
    doc = random_document(rng, 4, cfg.d)
    got = base_scores(doc, cfg).scores
    want = oracle_softmax_scores(doc)
    assert np.max(np.abs(got - np.array(want))) <= 1e-12


def test_propagate_alpha_zero_returns_base(cfg):
    rng = np.random.default_rng(32)
    doc = random_document(rng, 6, cfg.d)
    b = base_scores(doc, cfg)
    p = row_normalize(build_graph(doc, cfg))
    s, trace = propagate(b, p, cfg.with_overrides(alpha=0.0))
    assert np.array_equal(s.scores, b.scores)
    assert trace.iterations == 1
    assert trace.converged
    assert trace.final_delta == 0.0


def test_propagate_symmetric_two_node_fixed_point(cfg):
    b = ImportanceVector([0.5, 0.5])
    p = np.array([[0.0, 1.0], [1.0, 0.0]])
    s, trace = propagate(b, p, cfg)
    assert np.allclose(s.scores, [0.5, 0.5], atol=1e-15)
    assert trace.converged


def test_propagate_matches_dense_linear_solve():
    cfg = PipelineConfig(epsilon=1e-12, max_iters=500)
    rng = np.random.default_rng(33)
    for trial in range(10):
        n = int(rng.integers(2, 21))
        doc = random_document(rng, n, cfg.d, doc_id=f"solve{trial}")
        b = base_scores(doc, cfg)
        p = row_normalize(build_graph(doc, cfg))
        s, _ = propagate(b, p, cfg)
        lhs = np.eye(n) - cfg.alpha * p.T
        direct = np.linalg.solve(lhs, (1.0 - cfg.alpha) * b.scores)
        assert np.max(np.abs(s.scores - direct)) <= 1e-8


def test_propagation_conserves_mass_every_iteration(cfg):
    rng = np.random.default_rng(34)
    for trial in range(20):
        n = int(rng.integers(2, 40))
        doc = random_document(rng, n, cfg.d, doc_id=f"mass{trial}")
        b = base_scores(doc, cfg)
        p = row_normalize(build_graph(doc, cfg))
        for s in propagation_steps(b, p, cfg):
            assert np.all(s >= 0.0)
            assert abs(float(s.sum()) - 1.0) <= 1e-9


def test_propagation_unique_fixed_point_from_any_start(cfg):
    rng = np.random.default_rng(35)
    doc = random_document(rng, 12, cfg.d)
    b = base_scores(doc, cfg)
    p = row_normalize(build_graph(doc, cfg))
    s, _ = propagate(b, p, cfg)
    # Re-run the update rule from a different starting distribution.
    other = rng.random(12)
    other /= other.sum()
    pt = p.T
    for _ in range(400):
        other = (1.0 - cfg.alpha) * b.scores + cfg.alpha * (pt @ other)
    assert np.max(np.abs(other - s.scores)) <= 1e-6


def test_propagate_isolated_node_keeps_base_share(cfg):
    g = TokenGraph(n=3, edges={(0, 1): 0.9})
    p = row_normalize(g)
    b = ImportanceVector([0.2, 0.2, 0.6])
    s, _ = propagate(b, p, cfg)
    assert s.scores[2] >= (1.0 - cfg.alpha) * 0.6


def test_propagate_dimension_mismatch(cfg):
    b = ImportanceVector([0.5, 0.5])
    with pytest.raises(ValueError, match="dimension mismatch"):
        propagate(b, np.eye(3), cfg)


def test_score_entropy_uniform_and_one_hot():
    assert score_entropy(ImportanceVector([1 / 8] * 8)) == pytest.approx(1.0, abs=1e-12)
    assert score_entropy(ImportanceVector([1.0, 0.0, 0.0])) == 0.0


def test_score_entropy_hand_value():
    s = ImportanceVector([0.5, 0.25, 0.25])
    assert score_entropy(s) == pytest.approx(0.946394630357186, abs=1e-12)


def test_score_entropy_rejects_singleton():
    with pytest.raises(ValueError, match="at least 2"):
        score_entropy(ImportanceVector([1.0]))
