"""Bridging-topic scores, per-domain rankings and coherence-matched baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_index, check_labels, check_topic_matrix
from .classify import DomainEnsemble, OutlierSet, find_outliers

__all__ = [
    "ZERO_DENOMINATOR",
    "TopicBisociationScore",
    "RankedTopicList",
    "bisociation_score",
    "bisociation_scores",
    "rank_bisociative_topics",
    "topic_usage_rank",
    "select_baseline_topic",
    "BridgingTopicRanker",
]

ZERO_DENOMINATOR = 1e-12


@dataclass(frozen=True)
class TopicBisociationScore:
    domain: int | None
    topic: int
    score: float
    zero_denominator: bool = False


def _outlier_index(outliers, n_docs: int) -> np.ndarray:
    idx = np.unique(np.asarray(list(outliers), dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= n_docs):
        raise IndexError("outlier index out of range")
    return idx


def bisociation_scores(X, outliers) -> tuple[np.ndarray, np.ndarray]:
    """Scores of every topic for one outlier set.

    Returns ``(scores, zero_denominator)``: the share of each topic's total
    mass that falls on the outlier documents, and a flag for topics whose
    total mass is below ``ZERO_DENOMINATOR`` (scored 0).
    """
    X = check_topic_matrix(X)
    idx = _outlier_index(outliers, X.shape[0])
    total = X.sum(axis=0)
    part = X[idx].sum(axis=0) if idx.size else np.zeros(X.shape[1])
    zero = total < ZERO_DENOMINATOR
    scores = np.divide(part, total, out=np.zeros_like(total), where=~zero)
    return np.clip(scores, 0.0, 1.0), zero


def bisociation_score(X, outliers, t: int, domain: int | None = None) -> TopicBisociationScore:
    X = check_topic_matrix(X)
    t = check_index(t, X.shape[1], "topic")
    idx = _outlier_index(outliers, X.shape[0])
    total = X[:, t].sum()
    if total < ZERO_DENOMINATOR:
        return TopicBisociationScore(domain, t, 0.0, zero_denominator=True)
    part = X[idx, t].sum() if idx.size else 0.0
    return TopicBisociationScore(domain, t, float(min(max(part / total, 0.0), 1.0)))


@dataclass(frozen=True)
class RankedTopicList:
    """Topics of one domain by descending score; ties by ascending topic id."""

    domain: int
    topics: tuple[int, ...]
    scores: tuple[float, ...]
    zero_denominator: tuple[bool, ...]

    @classmethod
    def from_scores(cls, domain: int, scores, zero=None) -> "RankedTopicList":
        scores = np.asarray(scores, dtype=np.float64)
        zero = np.zeros(scores.shape, dtype=bool) if zero is None else np.asarray(zero)
        topics = np.arange(scores.shape[0])
        order = np.lexsort((topics, -scores))
        return cls(
            domain=int(domain),
            topics=tuple(int(t) for t in order),
            scores=tuple(float(scores[t]) for t in order),
            zero_denominator=tuple(bool(zero[t]) for t in order),
        )

    def __len__(self) -> int:
        return len(self.topics)

    def top(self, k: int) -> tuple[int, ...]:
        return self.topics[:k]

    def rank_of(self, topic: int) -> int:
        """1-based rank of ``topic``."""
        return self.topics.index(topic) + 1

    def score_array(self) -> np.ndarray:
        out = np.zeros(len(self.topics))
        out[list(self.topics)] = self.scores
        return out

    def entries(self):
        for t, s, z in zip(self.topics, self.scores, self.zero_denominator):
            yield TopicBisociationScore(self.domain, t, s, z)


def _doc_topic(model) -> np.ndarray:
    return model.doc_topic_ if hasattr(model, "doc_topic_") else np.asarray(model)


def rank_bisociative_topics(corpus, model, outliers: OutlierSet, q) -> RankedTopicList:
    """Score all topics for domain ``q`` against its outlier set and order them.

    ``corpus`` may be ``None``; it is only used to resolve domain names.
    """
    X = _doc_topic(model)
    if corpus is not None:
        q = corpus.domain_id(q)
    n_domains = outliers.n_domains
    if not isinstance(q, (int, np.integer)) or not 0 <= q < n_domains:
        raise KeyError(f"unknown domain {q!r}")
    scores, zero = bisociation_scores(X, outliers.indices(int(q)))
    return RankedTopicList.from_scores(int(q), scores, zero)


def topic_usage_rank(X) -> np.ndarray:
    """1-based usage rank per topic: 1 is the least used topic overall."""
    usage = np.asarray(X, dtype=np.float64).sum(axis=0)
    order = np.lexsort((np.arange(usage.size), usage))
    rank = np.empty(usage.size, dtype=np.int64)
    rank[order] = np.arange(1, usage.size + 1)
    return rank


def select_baseline_topic(
    b_topic: int,
    scores,
    coherences,
    n_candidates: int = 3,
    npmi_tolerance: float = 0.05,
    seed: int = 0,
    exclude=(),
) -> int:
    """Pick a random coherence-matched topic with low bisociation score.

    Topics other than ``b_topic`` (and ``exclude``) whose coherence lies
    within ``npmi_tolerance`` of the b-topic's are candidates; the tolerance
    doubles until ``n_candidates`` qualify or every topic does. Among
    ``n_candidates`` seeded random draws, the lowest-scoring topic is
    returned (ties by lower topic id).
    """
    if isinstance(scores, RankedTopicList):
        scores = scores.score_array()
    scores = np.asarray(scores, dtype=np.float64)
    coherences = np.asarray(coherences, dtype=np.float64)
    n_topics = scores.shape[0]
    if n_topics < 2:
        raise ValueError("need at least 2 topics")
    if coherences.shape[0] != n_topics:
        raise ValueError("scores and coherences differ in length")
    b_topic = check_index(b_topic, n_topics, "b_topic")
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    excluded = {int(t) for t in exclude} | {b_topic}
    pool = [t for t in range(n_topics) if t not in excluded]
    if not pool:
        raise ValueError("no topic left to serve as a baseline")

    gap = np.abs(coherences - coherences[b_topic])
    gap = np.where(np.isnan(gap), np.inf, gap)
    finite_pool = [t for t in pool if np.isfinite(gap[t])] or pool
    tol = npmi_tolerance if npmi_tolerance > 0 else 1e-12
    while True:
        cands = [t for t in pool if gap[t] <= tol]
        if len(cands) >= n_candidates or len(cands) >= len(finite_pool):
            break
        tol *= 2
    if not cands:
        cands = pool
    rng = np.random.default_rng(seed)
    picks = rng.choice(np.asarray(cands), size=min(n_candidates, len(cands)), replace=False)
    return int(min((int(t) for t in picks), key=lambda t: (scores[t], t)))


class BridgingTopicRanker(BaseEstimator):
    """Rank topics of every domain by their share in that domain's outliers.

    ``fit(X, y)`` trains a :class:`~bisonet.classify.DomainEnsemble` on the
    document-topic matrix ``X``, takes its in-sample false negatives as
    outliers and scores every (domain, topic) pair.
    """

    def __init__(self, candidates=None, n_members=3, k_folds=5, random_state=0):
        self.candidates = candidates
        self.n_members = n_members
        self.k_folds = k_folds
        self.random_state = random_state

    def fit(self, X, y, doc_ids=None):
        X = check_topic_matrix(X)
        y = check_labels(y, X.shape[0])
        self.ensemble_ = DomainEnsemble(
            candidates=self.candidates,
            n_members=self.n_members,
            k_folds=self.k_folds,
            random_state=self.random_state,
        ).fit(X, y)
        n_domains = int(y.max()) + 1
        self.outliers_ = find_outliers(self.ensemble_, X, y, doc_ids=doc_ids, n_domains=n_domains)
        self.ranked_ = [
            rank_bisociative_topics(None, X, self.outliers_, d) for d in range(n_domains)
        ]
        self.scores_ = np.vstack([r.score_array() for r in self.ranked_])
        self.zero_denominator_ = X.sum(axis=0) < ZERO_DENOMINATOR
        self.n_features_in_ = X.shape[1]
        return self

    def top_topics(self, domain: int, k: int = 10) -> tuple[int, ...]:
        check_is_fitted(self, "ranked_")
        return self.ranked_[domain].top(k)
