"""Cross-module invariants as property tests."""

from __future__ import annotations

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from confuscan.content import set_jaccard
from confuscan.features import SENTINEL, extract_ss
from confuscan.forest import auc_score, f1_score, stratified_folds
from confuscan.names import normalize
from confuscan.namevec import EmbeddingProvider, cosine_similarity, embed_name
from confuscan.textsim import max_syntactic_similarity

names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_.", min_size=1, max_size=24)
scoped = st.tuples(names, names).map(lambda t: f"@{t[0]}/{t[1]}")

_provider = EmbeddingProvider(dimension=32, seed=9)


class TestNames:
    @given(name=st.one_of(names, scoped))
    def test_normalize_idempotent(self, name):
        once = normalize(name)
        twice = normalize(once.canonical)
        assert twice.canonical == once.canonical

    @given(name=scoped)
    def test_scope_stripped(self, name):
        result = normalize(name)
        assert result.scope is not None
        assert "/" not in result.canonical
        assert not result.canonical.startswith("@")


class TestEmbeddings:
    @given(name=names)
    def test_unit_norm(self, name):
        vec = embed_name(_provider, normalize(name))
        assert math.isclose(float(np.linalg.norm(vec.values)), 1.0, rel_tol=1e-9)

    @given(a=names, b=names)
    def test_cosine_bounded_and_symmetric(self, a, b):
        va = embed_name(_provider, normalize(a))
        vb = embed_name(_provider, normalize(b))
        c = cosine_similarity(va, vb)
        assert -1.0 - 1e-9 <= c <= 1.0 + 1e-9
        assert c == cosine_similarity(vb, va)

    @given(name=names)
    def test_separator_style_invariant(self, name):
        # Per-word subword extraction: '-' and '_' spellings embed identically.
        dashed = normalize(name.replace("_", "-"))
        scored = normalize(name.replace("-", "_"))
        if dashed.canonical.strip("-") and scored.canonical.strip("_"):
            va = embed_name(_provider, dashed)
            vb = embed_name(_provider, scored)
            assert va == vb


class TestSetJaccard:
    @given(a=st.frozensets(names, max_size=8), b=st.frozensets(names, max_size=8))
    def test_bounded_and_symmetric(self, a, b):
        j = set_jaccard(a, b)
        assert 0.0 <= j <= 1.0
        assert j == set_jaccard(b, a)

    @given(a=st.frozensets(names, max_size=8))
    def test_self_is_one(self, a):
        assert set_jaccard(a, a) == 1.0


class TestFeatureBounds:
    @given(a=names, b=names)
    def test_ss_in_unit_interval(self, a, b):
        value = max_syntactic_similarity(normalize(a), normalize(b))
        assert 0.0 <= value <= 1.0

    def test_empty_ss_never_sentinel(self):
        assert SENTINEL not in extract_ss(normalize("x"), [])


class TestForestMetrics:
    @given(
        probs=st.lists(st.floats(0, 1), min_size=2, max_size=30),
        data=st.data(),
    )
    @settings(max_examples=50)
    def test_auc_bounded(self, probs, data):
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=len(probs), max_size=len(probs)))
        labels = np.array(labels)
        if labels.sum() in (0, len(labels)):
            labels[0] = 1 - labels[0]
        score = auc_score(np.array(probs), labels)
        assert 0.0 <= score <= 1.0
        # Reversing the ranking complements the score.
        flipped = auc_score(-np.array(probs), labels)
        assert math.isclose(score + flipped, 1.0, abs_tol=1e-12)

    @given(
        preds=st.lists(st.integers(0, 1), min_size=1, max_size=30),
        data=st.data(),
    )
    @settings(max_examples=50)
    def test_f1_bounded(self, preds, data):
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=len(preds), max_size=len(preds)))
        value = f1_score(np.array(labels), np.array(preds))
        assert 0.0 <= value <= 1.0

    @given(
        n0=st.integers(5, 40), n1=st.integers(5, 40), seed=st.integers(0, 100))
    @settings(max_examples=50)
    def test_folds_partition_everything(self, n0, n1, seed):
        y = np.array([0] * n0 + [1] * n1)
        assignment = stratified_folds(y, n_folds=5, seed=seed)
        assert assignment.min() >= 0 and assignment.max() < 5
        for cls, count in ((0, n0), (1, n1)):
            sizes = [int(((assignment == f) & (y == cls)).sum()) for f in range(5)]
            assert sum(sizes) == count
            assert max(sizes) - min(sizes) <= 1
