import math
from itertools import combinations

import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone

from bisonet.datasets import make_dirichlet_corpus
from bisonet.topics import (
    DocumentCooccurrence,
    GibbsLDA,
    ModelMismatchError,
    load_model,
    npmi,
    npmi_coherence,
    save_model,
    top_words,
)

FAST = dict(n_iter=200, burn_in=100, thinning=20)


def greedy_alignment(est, true):
    """Greedy max-cosine matching of recovered rows onto true rows."""
    a = est / np.linalg.norm(est, axis=1, keepdims=True)
    b = true / np.linalg.norm(true, axis=1, keepdims=True)
    cos = a @ b.T
    pairs = []
    for _ in range(min(cos.shape)):
        i, j = np.unravel_index(np.argmax(cos), cos.shape)
        pairs.append((i, j, cos[i, j]))
        cos[i, :] = -np.inf
        cos[:, j] = -np.inf
    return pairs


@pytest.fixture(scope="module")
def disjoint_counts():
    rng = np.random.default_rng(3)
    rows = []
    for i in range(40):
        lo = 0 if i % 2 == 0 else 10
        row = np.zeros(20, dtype=np.int64)
        np.add.at(row, rng.integers(lo, lo + 10, size=30), 1)
        rows.append(row)
    return sp.csr_matrix(np.array(rows))


@pytest.fixture(scope="module")
def disjoint_model(disjoint_counts):
    return GibbsLDA(n_topics=2, alpha=0.5, random_state=1, **FAST).fit(disjoint_counts)


def test_disjoint_sets_separate(disjoint_model):
    phi = disjoint_model.components_
    masses = np.stack([phi[:, :10].sum(axis=1), phi[:, 10:].sum(axis=1)], axis=1)
    # each recovered topic puts >= 0.95 of its mass on one planted set, and the two sets differ
    assert masses.max(axis=1).min() >= 0.95
    assert set(masses.argmax(axis=1)) == {0, 1}


def test_normalization(disjoint_model, disjoint_counts):
    phi, X = disjoint_model.components_, disjoint_model.doc_topic_
    assert X.shape == (disjoint_counts.shape[0], 2)
    assert np.all(phi >= 0) and np.all(X >= 0)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(X.sum(axis=1), 1.0, atol=1e-9)


def test_single_document():
    model = GibbsLDA(n_topics=2, **FAST).fit(np.array([[3, 1, 2]]))
    assert model.doc_topic_.shape == (1, 2)
    assert abs(model.doc_topic_.sum() - 1.0) < 1e-9


def test_default_alpha():
    model = GibbsLDA(n_topics=4, n_iter=2, burn_in=0, thinning=1).fit(np.array([[1, 2], [2, 1]]))
    assert model.alpha_ == 12.5


def test_seed_determinism(disjoint_counts):
    a = GibbsLDA(n_topics=3, random_state=7, **FAST).fit(disjoint_counts)
    b = GibbsLDA(n_topics=3, random_state=7, **FAST).fit(disjoint_counts)
    assert np.array_equal(a.components_, b.components_)
    assert np.array_equal(a.doc_topic_, b.doc_topic_)


def test_exchangeability(disjoint_counts):
    ids = [f"doc{i:02d}" for i in range(disjoint_counts.shape[0])]
    perm = np.random.default_rng(0).permutation(len(ids))
    a = GibbsLDA(n_topics=3, random_state=7, **FAST).fit(disjoint_counts, doc_ids=ids)
    b = GibbsLDA(n_topics=3, random_state=7, **FAST).fit(
        disjoint_counts[perm], doc_ids=[ids[i] for i in perm]
    )
    assert np.array_equal(b.doc_topic_, a.doc_topic_[perm])
    assert np.array_equal(a.components_, b.components_)


def test_exchangeability_without_ids(disjoint_counts):
    # content hash fixes the order when no ids are supplied
    perm = np.random.default_rng(1).permutation(disjoint_counts.shape[0])
    a = GibbsLDA(n_topics=3, random_state=2, **FAST).fit(disjoint_counts)
    b = GibbsLDA(n_topics=3, random_state=2, **FAST).fit(disjoint_counts[perm])
    assert np.array_equal(b.doc_topic_, a.doc_topic_[perm])


def test_empty_document_rejected():
    with pytest.raises(ValueError, match="zero tokens"):
        GibbsLDA(n_topics=2, **FAST).fit(np.array([[1, 1], [0, 0]]))


@pytest.mark.parametrize(
    "params",
    [dict(n_topics=1), dict(n_iter=10, burn_in=10), dict(beta=0), dict(alpha=-1.0), dict(thinning=0)],
)
def test_bad_params(params):
    with pytest.raises(ValueError):
        GibbsLDA(**{**FAST, **params}).fit(np.array([[1, 2], [2, 1]]))


def test_sklearn_api(disjoint_counts):
    est = GibbsLDA(n_topics=2, alpha=0.5, random_state=1, **FAST)
    assert clone(est).get_params() == est.get_params()
    X = est.fit_transform(disjoint_counts)
    assert np.array_equal(X, est.doc_topic_)


def test_transform_folds_in(disjoint_model, disjoint_counts):
    theta = disjoint_model.transform(disjoint_counts[:6])
    np.testing.assert_allclose(theta.sum(axis=1), 1.0, atol=1e-9)
    # fold-in of training documents agrees with the fitted dominant topic
    assert np.array_equal(theta.argmax(axis=1), disjoint_model.doc_topic_[:6].argmax(axis=1))
    with pytest.raises(ValueError, match="features"):
        disjoint_model.transform(np.ones((1, 3), dtype=int))


def test_recovery_on_dirichlet_corpus():
    data = make_dirichlet_corpus(n_docs=150, seed=4)
    model = GibbsLDA(n_topics=5, random_state=0, **FAST).fit(data.counts)
    cos = [c for _, _, c in greedy_alignment(model.components_, data.phi)]
    assert np.mean(cos) >= 0.7


def test_topic_usage(disjoint_model):
    np.testing.assert_allclose(disjoint_model.topic_usage_.sum(), disjoint_model.doc_topic_.shape[0])


def test_top_words_one_hot():
    phi = np.zeros((2, 5))
    phi[0, 3] = 1.0
    phi[1] = 0.2
    s = top_words(phi, 0, m=1)
    assert s.token_ids == (3,) and s.probabilities == (1.0,)
    # uniform row: ties broken by token id
    assert top_words(phi, 1, m=3).token_ids == (0, 1, 2)


def test_top_words_clamps_to_vocabulary():
    phi = np.full((2, 4), 0.25)
    assert len(top_words(phi, 1, m=10).words) == 4


def test_top_words_out_of_range():
    with pytest.raises(IndexError):
        top_words(np.full((2, 4), 0.25), 2)


def test_top_words_planted(disjoint_model):
    for t in range(2):
        s = top_words(disjoint_model, t, m=10)
        assert len(set(s.words)) == 10
        assert all(a >= b for a, b in zip(s.probabilities, s.probabilities[1:]))
        planted = set(range(10)) if min(s.token_ids) < 10 else set(range(10, 20))
        assert set(s.token_ids) == planted


def test_npmi_always_together():
    cooc = DocumentCooccurrence(np.array([[1, 1, 0], [2, 1, 0], [0, 0, 1]]))
    assert npmi(cooc, 0, 1) == pytest.approx(1.0, abs=1e-9)


def test_npmi_never_together():
    cooc = DocumentCooccurrence(np.array([[1, 0], [0, 1], [1, 0], [0, 1]]))
    # p(a)=p(b)=1/2, p(ab)=eps; tends to -1 as eps shrinks
    for eps in (1e-12, 1e-30):
        expected = math.log(eps / 0.25) / -math.log(eps)
        assert npmi(cooc, 0, 1, eps) == pytest.approx(expected, abs=1e-12)
    assert npmi(cooc, 0, 1, 1e-30) < npmi(cooc, 0, 1, 1e-12) < -0.9


def _brute_npmi(docs, a, b, eps=1e-12):
    n = len(docs)
    pa = sum(a in d for d in docs) / n
    pb = sum(b in d for d in docs) / n
    pab = sum(a in d and b in d for d in docs) / n + eps
    return math.log(pab / (pa * pb)) / -math.log(pab)


def test_npmi_coherence_toy_corpus():
    docs = [
        {0, 1, 2}, {0, 1}, {0, 2, 3}, {1, 3}, {0, 1, 2, 4},
        {3, 4}, {2, 4}, {0, 3}, {1, 2}, {0, 1, 3},
    ]
    counts = np.zeros((10, 5), dtype=np.int64)
    for i, d in enumerate(docs):
        counts[i, list(d)] = 1
    phi = np.array([[0.4, 0.3, 0.2, 0.05, 0.05], [0.2] * 5])
    cooc = DocumentCooccurrence(counts)
    expected = np.mean([_brute_npmi(docs, a, b) for a, b in combinations([0, 1, 2], 2)])
    assert npmi_coherence(phi, 0, 3, cooc) == pytest.approx(expected, abs=1e-12)
    # frozen by hand: p(0)=.6, p(1)=.6, p(2)=.5; p(01)=.4, p(02)=.3, p(12)=.3
    hand = np.mean([
        math.log(0.4 / 0.36) / -math.log(0.4),
        math.log(0.3 / 0.30) / -math.log(0.3),
        math.log(0.3 / 0.30) / -math.log(0.3),
    ])
    assert npmi_coherence(phi, 0, 3, cooc) == pytest.approx(hand, abs=1e-9)


def test_npmi_coherence_needs_two_words():
    cooc = DocumentCooccurrence(np.eye(3, dtype=int))
    with pytest.raises(ValueError, match="m >= 2"):
        npmi_coherence(np.full((1, 3), 1 / 3), 0, 1, cooc)


def test_model_persistence(disjoint_model, tmp_path):
    path = tmp_path / "model.json"
    digest = save_model(disjoint_model, path, "abc")
    assert len(digest) == 64
    again = load_model(path, vocabulary_hash="abc")
    assert np.array_equal(again.components_, disjoint_model.components_)
    assert np.array_equal(again.doc_topic_, disjoint_model.doc_topic_)
    assert again.get_params() == disjoint_model.get_params()
    with pytest.raises(ModelMismatchError):
        load_model(path, vocabulary_hash="other")
