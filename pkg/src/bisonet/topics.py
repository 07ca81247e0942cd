"""LDA by collapsed Gibbs sampling, topic summaries and NPMI coherence."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count_matrix, check_index

__all__ = [
    "GibbsLDA",
    "TopicSummary",
    "DocumentCooccurrence",
    "fit_lda",
    "top_words",
    "npmi",
    "npmi_coherence",
    "save_model",
    "load_model",
    "ModelMismatchError",
]

MODEL_FORMAT = "bisonet-lda"
MODEL_VERSION = 1


@numba.njit(cache=True)
def _gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, u, cum):
    n_topics = ndk.shape[1]
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(n_topics):
            total += (ndk[d, t] + alpha) * (nkw[t, w] + beta) / (nk[t] + vbeta)
            cum[t] = total
        r = u[i] * total
        k = 0
        while k < n_topics - 1 and cum[k] <= r:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@numba.njit(cache=True)
def _foldin_sweep(words, docs, z, ndk, phi, alpha, u, cum):
    n_topics = ndk.shape[1]
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        ndk[d, z[i]] -= 1
        total = 0.0
        for t in range(n_topics):
            total += (ndk[d, t] + alpha) * phi[t, w]
            cum[t] = total
        r = u[i] * total
        k = 0
        while k < n_topics - 1 and cum[k] <= r:
            k += 1
        z[i] = k
        ndk[d, k] += 1


def _canonical_order(X: sp.csr_matrix, doc_ids) -> np.ndarray:
    # Fixed processing order so that the fit does not depend on input row order.
    n = X.shape[0]
    if doc_ids is not None:
        doc_ids = [str(d) for d in doc_ids]
        if len(doc_ids) != n:
            raise ValueError("doc_ids must match the number of documents")
        if len(set(doc_ids)) != n:
            raise ValueError("doc_ids must be unique")
        return np.array(sorted(range(n), key=lambda i: doc_ids[i]), dtype=np.int64)
    keys = []
    for i in range(n):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        h = hashlib.sha256(X.indices[lo:hi].tobytes() + b"|" + X.data[lo:hi].tobytes())
        keys.append(h.hexdigest())
    return np.array(sorted(range(n), key=lambda i: (keys[i], i)), dtype=np.int64)


def _expand_tokens(X: sp.csr_matrix, order: np.ndarray):
    words, docs = [], []
    for pos, i in enumerate(order):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        w = np.repeat(X.indices[lo:hi], X.data[lo:hi])
        words.append(w)
        docs.append(np.full(w.shape[0], pos, dtype=np.int64))
    return np.concatenate(words).astype(np.int64), np.concatenate(docs)


def _sample_sweeps(n_iter, burn_in, thinning):
    sweeps = [s for s in range(burn_in + 1, n_iter + 1) if (s - burn_in) % thinning == 0]
    return sweeps or [n_iter]


class GibbsLDA(TransformerMixin, BaseEstimator):
    """Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

    Topic-word (``components_``) and document-topic (``doc_topic_``)
    estimates are posterior means averaged over the samples taken every
    ``thinning`` sweeps after ``burn_in``.

    Parameters
    ----------
    n_topics : int
        Number of topics T.
    alpha : float or None
        Symmetric document-topic prior; ``None`` means ``50 / n_topics``.
    beta : float
        Symmetric topic-word prior.
    n_iter, burn_in, thinning : int
        Sampler schedule, in full sweeps over the corpus.
    transform_iter : int
        Sweeps used to fold in unseen documents in :meth:`transform`.
    random_state : int
        Seed; the fit is bit-deterministic given this seed.
    """

    def __init__(
        self,
        n_topics=100,
        alpha=None,
        beta=0.1,
        n_iter=1000,
        burn_in=500,
        thinning=50,
        transform_iter=100,
        random_state=0,
    ):
        self.n_topics = n_topics
        self.alpha = alpha
        self.beta = beta
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thinning = thinning
        self.transform_iter = transform_iter
        self.random_state = random_state

    def _check_params(self):
        if int(self.n_topics) != self.n_topics or self.n_topics < 2:
            raise ValueError(f"n_topics must be an integer >= 2, got {self.n_topics}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need n_iter > burn_in >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        return 50.0 / self.n_topics if self.alpha is None else float(self.alpha)

    def fit(self, X, y=None, doc_ids=None):
        """Fit on an N x V count matrix.

        ``doc_ids``, when given, fixes the internal sampling order so the
        result per document does not depend on row order.
        """
        alpha = self._check_params()
        X = check_count_matrix(X)
        n_docs, n_words = X.shape
        T = int(self.n_topics)
        beta = float(self.beta)

        order = _canonical_order(X, doc_ids)
        words, docs = _expand_tokens(X, order)
        rng = np.random.default_rng(self.random_state)
        z = rng.integers(T, size=words.shape[0]).astype(np.int64)

        ndk = np.zeros((n_docs, T), dtype=np.int64)
        nkw = np.zeros((T, n_words), dtype=np.int64)
        np.add.at(ndk, (docs, z), 1)
        np.add.at(nkw, (z, words), 1)
        nk = nkw.sum(axis=1)
        doc_len = ndk.sum(axis=1)

        sweeps = set(_sample_sweeps(self.n_iter, self.burn_in, self.thinning))
        phi_sum = np.zeros((T, n_words))
        theta_sum = np.zeros((n_docs, T))
        cum = np.empty(T)
        vbeta = n_words * beta
        for sweep in range(1, self.n_iter + 1):
            u = rng.random(words.shape[0])
            _gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, u, cum)
            if sweep in sweeps:
                phi_sum += (nkw + beta) / (nk[:, None] + vbeta)
                theta_sum += (ndk + alpha) / (doc_len[:, None] + T * alpha)

        n_samples = len(sweeps)
        phi = phi_sum / n_samples
        phi /= phi.sum(axis=1, keepdims=True)
        theta = theta_sum / n_samples
        theta /= theta.sum(axis=1, keepdims=True)

        doc_topic = np.empty_like(theta)
        doc_topic[order] = theta
        self.components_ = phi
        self.doc_topic_ = doc_topic
        self.alpha_ = alpha
        self.n_features_in_ = n_words
        self.n_samples_averaged_ = n_samples
        self.doc_ids_ = None if doc_ids is None else tuple(str(d) for d in doc_ids)
        return self

    def fit_transform(self, X, y=None, doc_ids=None):
        return self.fit(X, y, doc_ids=doc_ids).doc_topic_

    def transform(self, X):
        """Infer topic proportions of new documents with the topics held fixed."""
        check_is_fitted(self, "components_")
        X = check_count_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}"
            )
        T = int(self.n_topics)
        alpha = self.alpha_
        order = np.arange(X.shape[0], dtype=np.int64)
        words, docs = _expand_tokens(X, order)
        rng = np.random.default_rng(self.random_state)
        z = rng.integers(T, size=words.shape[0]).astype(np.int64)
        ndk = np.zeros((X.shape[0], T), dtype=np.int64)
        np.add.at(ndk, (docs, z), 1)
        doc_len = ndk.sum(axis=1)
        n_iter = max(int(self.transform_iter), 2)
        burn = n_iter // 2
        theta_sum = np.zeros((X.shape[0], T))
        cum = np.empty(T)
        phi = np.ascontiguousarray(self.components_)
        for sweep in range(1, n_iter + 1):
            u = rng.random(words.shape[0])
            _foldin_sweep(words, docs, z, ndk, phi, alpha, u, cum)
            if sweep > burn:
                theta_sum += (ndk + alpha) / (doc_len[:, None] + T * alpha)
        theta = theta_sum / theta_sum.sum(axis=1, keepdims=True)
        return theta

    @property
    def topic_usage_(self) -> np.ndarray:
        """Total topic mass over the training documents (column sums of X)."""
        check_is_fitted(self, "doc_topic_")
        return self.doc_topic_.sum(axis=0)


def fit_lda(
    corpus,
    T: int = 100,
    alpha: float | None = None,
    beta: float = 0.1,
    iterations: int = 1000,
    burn_in: int = 500,
    thinning: int = 50,
    seed: int = 0,
) -> GibbsLDA:
    """Fit :class:`GibbsLDA` on a :class:`~bisonet.corpus.Corpus`."""
    model = GibbsLDA(
        n_topics=T,
        alpha=alpha,
        beta=beta,
        n_iter=iterations,
        burn_in=burn_in,
        thinning=thinning,
        random_state=seed,
    )
    model.fit(corpus.counts(), doc_ids=corpus.doc_ids)
    model.vocabulary_hash_ = corpus.vocabulary.hash
    return model


@dataclass(frozen=True)
class TopicSummary:
    topic: int
    token_ids: tuple[int, ...]
    words: tuple[str, ...]
    probabilities: tuple[float, ...]
    coherence: float | None = None


def _topic_word_matrix(model) -> np.ndarray:
    return model.components_ if hasattr(model, "components_") else np.asarray(model)


def top_words(model, t: int, m: int = 10, vocabulary=None, coherence=None) -> TopicSummary:
    """The ``m`` most probable words of topic ``t``; ties go to the lower token id."""
    phi = _topic_word_matrix(model)
    t = check_index(t, phi.shape[0], "topic")
    if m < 1:
        raise ValueError("m must be >= 1")
    row = phi[t]
    ids = np.argsort(-row, kind="stable")[: min(m, row.shape[0])]
    if vocabulary is None:
        words = tuple(str(i) for i in ids)
    else:
        words = tuple(vocabulary.token_of(int(i)) for i in ids)
    return TopicSummary(
        topic=t,
        token_ids=tuple(int(i) for i in ids),
        words=words,
        probabilities=tuple(float(row[i]) for i in ids),
        coherence=coherence,
    )


class DocumentCooccurrence:
    """Document-level word occurrence counts of a reference corpus."""

    def __init__(self, counts):
        counts = sp.csc_matrix(counts)
        self._presence = sp.csc_matrix(
            (np.ones_like(counts.data, dtype=np.int64), counts.indices, counts.indptr),
            shape=counts.shape,
        )
        self._presence.sum_duplicates()
        self._presence.data[:] = 1
        self.n_documents = counts.shape[0]
        self.doc_freq = np.asarray(self._presence.sum(axis=0)).ravel()
        self._docs = [
            self._presence.indices[self._presence.indptr[w] : self._presence.indptr[w + 1]]
            for w in range(counts.shape[1])
        ]

    @classmethod
    def from_corpus(cls, corpus) -> "DocumentCooccurrence":
        return cls(corpus.counts())

    def joint(self, a: int, b: int) -> int:
        if a == b:
            return int(self.doc_freq[a])
        return int(np.intersect1d(self._docs[a], self._docs[b], assume_unique=True).size)


def npmi(cooc: DocumentCooccurrence, a: int, b: int, eps: float = 1e-12) -> float:
    """Normalized PMI of two words from document co-occurrence, smoothed by ``eps``."""
    n = cooc.n_documents
    p_a = cooc.doc_freq[a] / n
    p_b = cooc.doc_freq[b] / n
    p_ab = cooc.joint(a, b) / n + eps
    if p_a == 0 or p_b == 0:
        return -1.0
    if p_ab >= 1.0:
        return 1.0
    value = np.log(p_ab / (p_a * p_b)) / -np.log(p_ab)
    return float(np.clip(value, -1.0, 1.0))


def npmi_coherence(model, t: int, m: int, cooccurrence: DocumentCooccurrence, eps: float = 1e-12) -> float:
    """Mean NPMI over all unordered pairs of topic ``t``'s top-``m`` words."""
    if m < 2:
        raise ValueError("NPMI coherence needs m >= 2")
    ids = top_words(model, t, m).token_ids
    if len(ids) < 2:
        raise ValueError("topic has fewer than 2 words")
    return float(np.mean([npmi(cooccurrence, a, b, eps) for a, b in combinations(ids, 2)]))


class ModelMismatchError(ValueError):
    """A stored model does not belong to the corpus it is combined with."""


def save_model(model: GibbsLDA, path, vocabulary_hash: str | None = None) -> str:
    """Write a fitted model as versioned JSON; returns the file's sha256."""
    check_is_fitted(model, "components_")
    vocabulary_hash = vocabulary_hash or getattr(model, "vocabulary_hash_", None)
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "params": model.get_params(),
        "T": int(model.n_topics),
        "V": int(model.n_features_in_),
        "alpha": model.alpha_,
        "beta": float(model.beta),
        "seed": model.random_state,
        "n_samples_averaged": model.n_samples_averaged_,
        "vocabulary_hash": vocabulary_hash,
        "doc_ids": list(model.doc_ids_) if model.doc_ids_ is not None else None,
        "phi": model.components_.tolist(),
        "X": model.doc_topic_.tolist(),
    }
    data = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_model(path, vocabulary_hash: str | None = None) -> GibbsLDA:
    """Read a model written by :func:`save_model`.

    Raises :class:`ModelMismatchError` if ``vocabulary_hash`` is given and
    differs from the stored one.
    """
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {payload.get('version')}")
    if vocabulary_hash is not None and payload["vocabulary_hash"] != vocabulary_hash:
        raise ModelMismatchError(
            "model vocabulary hash does not match the corpus vocabulary; refit the topics"
        )
    model = GibbsLDA(**payload["params"])
    model.components_ = np.asarray(payload["phi"], dtype=np.float64)
    model.doc_topic_ = np.asarray(payload["X"], dtype=np.float64)
    model.alpha_ = float(payload["alpha"])
    model.n_features_in_ = int(payload["V"])
    model.n_samples_averaged_ = int(payload["n_samples_averaged"])
    model.doc_ids_ = tuple(payload["doc_ids"]) if payload["doc_ids"] is not None else None
    model.vocabulary_hash_ = payload["vocabulary_hash"]
    return model
