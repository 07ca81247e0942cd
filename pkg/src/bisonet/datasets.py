"""Synthetic corpora with known generating parameters."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import RawDocument

__all__ = [
    "SyntheticLDACorpus",
    "PlantedBridgeCorpus",
    "make_dirichlet_corpus",
    "make_planted_bridge_corpus",
    "write_jsonl",
]


@dataclass
class SyntheticLDACorpus:
    counts: sp.csr_matrix
    phi: np.ndarray
    theta: np.ndarray


def make_dirichlet_corpus(
    n_docs=300,
    n_words=200,
    n_topics=5,
    doc_length=100,
    doc_concentration=0.5,
    word_concentration=0.1,
    seed=0,
) -> SyntheticLDACorpus:
    """Sample a bag-of-words corpus from the LDA generative process."""
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(n_words, word_concentration), size=n_topics)
    theta = rng.dirichlet(np.full(n_topics, doc_concentration), size=n_docs)
    counts = np.zeros((n_docs, n_words), dtype=np.int64)
    for i in range(n_docs):
        z = rng.choice(n_topics, size=doc_length, p=theta[i])
        for k in np.unique(z):
            n_k = int(np.sum(z == k))
            counts[i] += rng.multinomial(n_k, phi[k])
    return SyntheticLDACorpus(counts=sp.csr_matrix(counts), phi=phi, theta=theta)


def _word(topic: int, j: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return "q" + letters[topic % 26] + letters[(j // 26) % 26] + letters[j % 26]


@dataclass
class PlantedBridgeCorpus:
    documents: list[RawDocument]
    topic_words: list[list[str]]
    phi: np.ndarray
    bridge_topic: int
    planted: dict[str, list[str]]
    source_domain: dict[str, str]

    def true_phi_over(self, vocabulary) -> np.ndarray:
        """Generating topic-word distributions re-indexed to ``vocabulary``."""
        words = [w for ws in self.topic_words for w in ws]
        index = {w: j for j, w in enumerate(words)}
        out = np.zeros((self.phi.shape[0], len(vocabulary)))
        for v, token in enumerate(vocabulary.tokens):
            if token in index:
                out[:, v] = self.phi[:, index[token]]
        return out


def make_planted_bridge_corpus(
    n_domains=3,
    docs_per_domain=60,
    planted_frac=0.1,
    bridge_weight=0.35,
    doc_length=80,
    words_per_topic=20,
    seed=0,
) -> PlantedBridgeCorpus:
    """Documents from ``n_domains`` domains with one planted bridge topic.

    Each domain owns two topics; one general topic is shared by every
    ordinary document. A ``planted_frac`` share of each domain's documents
    is drawn from the next domain's topic mixture plus the bridge topic,
    which occurs nowhere else.
    """
    rng = np.random.default_rng(seed)
    n_topics = 2 * n_domains + 2
    general, bridge = 2 * n_domains, 2 * n_domains + 1
    topic_words = [[_word(k, j) for j in range(words_per_topic)] for k in range(n_topics)]
    n_words = n_topics * words_per_topic
    phi = np.zeros((n_topics, n_words))
    for k in range(n_topics):
        phi[k, k * words_per_topic : (k + 1) * words_per_topic] = rng.dirichlet(
            np.ones(words_per_topic)
        )
    vocab = [w for ws in topic_words for w in ws]

    n_planted = max(1, int(round(planted_frac * docs_per_domain)))
    documents, planted, source = [], {}, {}
    for d in range(n_domains):
        name = f"domain{d}"
        planted[name] = []
        for i in range(docs_per_domain):
            doc_id = f"{name}-{i:03d}"
            mix = np.zeros(n_topics)
            if i < n_planted:
                s = (d + 1) % n_domains
                w = rng.dirichlet([1.0, 1.0])
                mix[2 * s : 2 * s + 2] = (1 - bridge_weight) * w
                mix[bridge] = bridge_weight
                planted[name].append(doc_id)
                source[doc_id] = f"domain{s}"
            else:
                w = rng.dirichlet([2.0, 2.0, 1.0])
                mix[2 * d : 2 * d + 2] = w[:2]
                mix[general] = w[2]
            z = rng.choice(n_topics, size=doc_length, p=mix)
            tokens = [vocab[rng.choice(n_words, p=phi[k])] for k in z]
            documents.append(RawDocument(doc_id=doc_id, domain=name, title="", body=" ".join(tokens)))
    order = rng.permutation(len(documents))
    documents = [documents[j] for j in order]
    return PlantedBridgeCorpus(
        documents=documents,
        topic_words=topic_words,
        phi=phi,
        bridge_topic=bridge,
        planted=planted,
        source_domain=source,
    )


def write_jsonl(documents, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            row = {"doc_id": doc.doc_id, "domain": doc.domain, "title": doc.title, "body": doc.body}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path
