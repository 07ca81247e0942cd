"""Document ingestion, tokenization and vocabulary construction."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

__all__ = [
    "CorpusError",
    "RawDocument",
    "TokenizerOptions",
    "Vocabulary",
    "Corpus",
    "LoadReport",
    "tokenize",
    "load_stopwords",
    "read_documents",
    "build_vocabulary",
    "build_corpus",
    "load_corpus",
]

_TAG_RE = re.compile(r"<[^>]*>")
# runs of unicode letters (no digits, no underscore)
_LETTER_RUN_RE = re.compile(r"[^\W\d_]+")

REQUIRED_FIELDS = ("doc_id", "domain", "body")


class CorpusError(ValueError):
    """Raised for malformed input records or an unusable corpus."""


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    domain: str
    title: str
    body: str

    @property
    def text(self) -> str:
        if self.title:
            return f"{self.title}\n{self.body}"
        return self.body


def _s_stem(token: str) -> str:
    # Harman's S-stemmer: strip common English plural endings only.
    if len(token) > 4 and token.endswith("ies") and not token.endswith(("eies", "aies")):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("es") and not token.endswith(("aes", "ees", "oes")):
        return token[:-1]
    if len(token) > 3 and token.endswith("s") and not token.endswith(("us", "ss")):
        return token[:-1]
    return token


@dataclass(frozen=True)
class TokenizerOptions:
    min_length: int = 3
    stopwords: frozenset = field(default=frozenset(ENGLISH_STOP_WORDS))
    stem: bool = False
    strip_html: bool = True

    def __post_init__(self):
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")
        object.__setattr__(self, "stopwords", frozenset(w.lower() for w in self.stopwords))


def tokenize(text: str, options: TokenizerOptions | None = None) -> list[str]:
    """Split ``text`` into lowercase letter-run tokens.

    Stopwords and tokens shorter than ``options.min_length`` are removed.
    Stemming, when enabled, runs after stopword removal.
    """
    options = options or TokenizerOptions()
    if not text:
        return []
    if options.strip_html:
        text = _TAG_RE.sub(" ", text)
    tokens = []
    for tok in _LETTER_RUN_RE.findall(text.lower()):
        if len(tok) < options.min_length or tok in options.stopwords:
            continue
        if options.stem:
            tok = _s_stem(tok)
            if len(tok) < options.min_length or tok in options.stopwords:
                continue
        tokens.append(tok)
    return tokens


def load_stopwords(path: str | Path) -> frozenset:
    """Read a stopword file: one token per line, UTF-8, blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


@dataclass(frozen=True)
class Vocabulary:
    """Dense token ids ordered by descending corpus frequency, ties lexicographic."""

    tokens: tuple[str, ...]
    doc_freq: np.ndarray
    corpus_freq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index[token]

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    @property
    def token_to_id(self) -> dict[str, int]:
        return dict(self._index)

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "doc_freq": [int(v) for v in self.doc_freq],
            "corpus_freq": [int(v) for v in self.corpus_freq],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        return cls(
            tokens=tuple(data["tokens"]),
            doc_freq=np.asarray(data["doc_freq"], dtype=np.int64),
            corpus_freq=np.asarray(data["corpus_freq"], dtype=np.int64),
        )


def build_vocabulary(
    documents: Iterable[Sequence[str]], min_df: int = 5, max_df_frac: float = 0.5
) -> Vocabulary:
    """Build a vocabulary from tokenized documents.

    Tokens with document frequency below ``min_df`` or above
    ``max_df_frac * n_documents`` are excluded.
    """
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    if not 0 < max_df_frac <= 1:
        raise ValueError("max_df_frac must be in (0, 1]")
    df: Counter = Counter()
    cf: Counter = Counter()
    n_docs = 0
    for doc in documents:
        n_docs += 1
        cf.update(doc)
        df.update(set(doc))
    max_df = max_df_frac * n_docs
    kept = [t for t, f in df.items() if min_df <= f <= max_df]
    if not kept:
        raise CorpusError(
            f"empty vocabulary after document-frequency filtering "
            f"(min_df={min_df}, max_df_frac={max_df_frac}, n_documents={n_docs})"
        )
    kept.sort(key=lambda t: (-cf[t], t))
    return Vocabulary(
        tokens=tuple(kept),
        doc_freq=np.array([df[t] for t in kept], dtype=np.int64),
        corpus_freq=np.array([cf[t] for t in kept], dtype=np.int64),
    )


@dataclass(frozen=True)
class LoadReport:
    n_records: int
    n_empty_after_tokenization: int
    n_empty_after_vocabulary: int
    dropped_doc_ids: tuple[str, ...] = ()

    @property
    def n_dropped(self) -> int:
        return self.n_empty_after_tokenization + self.n_empty_after_vocabulary

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_empty_after_tokenization": self.n_empty_after_tokenization,
            "n_empty_after_vocabulary": self.n_empty_after_vocabulary,
            "dropped_doc_ids": list(self.dropped_doc_ids),
        }


@dataclass(frozen=True)
class Corpus:
    """Labeled bag-of-words corpus.

    ``documents[i]`` is a pair ``(token_ids, counts)`` with token ids
    ascending. ``labels[i]`` indexes into ``domains``.
    """

    doc_ids: tuple[str, ...]
    titles: tuple[str, ...]
    labels: np.ndarray
    domains: tuple[str, ...]
    documents: tuple[tuple[np.ndarray, np.ndarray], ...]
    vocabulary: Vocabulary
    load_report: LoadReport | None = None

    def __post_init__(self):
        n = len(self.doc_ids)
        if not (len(self.titles) == len(self.labels) == len(self.documents) == n):
            raise CorpusError("doc_ids, titles, labels and documents differ in length")
        if len(set(self.doc_ids)) != n:
            raise CorpusError("duplicate doc_id in corpus")
        if len(self.domains) < 2:
            raise CorpusError(f"corpus needs at least 2 domains, got {len(self.domains)}")
        labels = np.asarray(self.labels, dtype=np.int64)
        if n and (labels.min() < 0 or labels.max() >= len(self.domains)):
            raise CorpusError("label out of range")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n_documents(self) -> int:
        return len(self.doc_ids)

    N = n_documents

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    def counts(self) -> sp.csr_matrix:
        """Return the N x V document-term count matrix."""
        indptr = np.zeros(self.n_documents + 1, dtype=np.int64)
        for i, (ids, _) in enumerate(self.documents):
            indptr[i + 1] = indptr[i] + len(ids)
        if self.documents:
            indices = np.concatenate([ids for ids, _ in self.documents])
            data = np.concatenate([c for _, c in self.documents])
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0, dtype=np.int64)
        return sp.csr_matrix(
            (data, indices, indptr), shape=(self.n_documents, len(self.vocabulary))
        )

    def domain_documents(self, domain: int) -> np.ndarray:
        return np.flatnonzero(self.labels == domain)

    def domain_id(self, name_or_id) -> int:
        if isinstance(name_or_id, (int, np.integer)):
            if not 0 <= name_or_id < self.n_domains:
                raise KeyError(f"unknown domain id {name_or_id}")
            return int(name_or_id)
        try:
            return self.domains.index(name_or_id)
        except ValueError:
            raise KeyError(f"unknown domain {name_or_id!r}") from None

    def to_dict(self) -> dict:
        return {
            "doc_ids": list(self.doc_ids),
            "titles": list(self.titles),
            "labels": [int(v) for v in self.labels],
            "domains": list(self.domains),
            "documents": [
                [[int(v) for v in ids], [int(v) for v in c]] for ids, c in self.documents
            ],
            "vocabulary": self.vocabulary.to_dict(),
            "load_report": self.load_report.to_dict() if self.load_report else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Corpus":
        report = data.get("load_report")
        if report is not None:
            report = LoadReport(
                n_records=report["n_records"],
                n_empty_after_tokenization=report["n_empty_after_tokenization"],
                n_empty_after_vocabulary=report["n_empty_after_vocabulary"],
                dropped_doc_ids=tuple(report["dropped_doc_ids"]),
            )
        return cls(
            doc_ids=tuple(data["doc_ids"]),
            titles=tuple(data["titles"]),
            labels=np.asarray(data["labels"], dtype=np.int64),
            domains=tuple(data["domains"]),
            documents=tuple(
                (np.asarray(ids, dtype=np.int64), np.asarray(c, dtype=np.int64))
                for ids, c in data["documents"]
            ),
            vocabulary=Vocabulary.from_dict(data["vocabulary"]),
            load_report=report,
        )

    @property
    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _record(raw: dict, line: int) -> RawDocument:
    if not isinstance(raw, dict):
        raise CorpusError(f"line {line}: expected an object, got {type(raw).__name__}")
    for name in REQUIRED_FIELDS:
        value = raw.get(name)
        if value is None:
            raise CorpusError(f"line {line}: missing field {name!r}")
    domain = str(raw["domain"]).strip()
    if not domain:
        raise CorpusError(f"line {line}: empty domain")
    doc_id = str(raw["doc_id"]).strip()
    if not doc_id:
        raise CorpusError(f"line {line}: empty doc_id")
    return RawDocument(
        doc_id=doc_id, domain=domain, title=str(raw.get("title") or ""), body=str(raw["body"])
    )


def read_documents(path: str | Path, format: str | None = None) -> list[RawDocument]:
    """Read raw records from a JSONL or CSV file.

    ``format`` defaults to the file suffix. Duplicate doc ids raise.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    format = format.lower()
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unsupported corpus format {format!r}")
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")

    docs: list[RawDocument] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        if format == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
                doc = _record(raw, lineno)
                if doc.doc_id in seen:
                    raise CorpusError(
                        f"line {lineno}: duplicate doc_id {doc.doc_id!r} "
                        f"(first seen at line {seen[doc.doc_id]})"
                    )
                seen[doc.doc_id] = lineno
                docs.append(doc)
        else:
            reader = csv.DictReader(fh)
            missing = [f for f in REQUIRED_FIELDS if f not in (reader.fieldnames or [])]
            if missing:
                raise CorpusError(f"line 1: CSV header lacks {', '.join(missing)}")
            for raw in reader:
                lineno = reader.line_num
                if None in raw:
                    raise CorpusError(f"line {lineno}: too many fields")
                doc = _record(raw, lineno)
                if doc.doc_id in seen:
                    raise CorpusError(
                        f"line {lineno}: duplicate doc_id {doc.doc_id!r} "
                        f"(first seen at line {seen[doc.doc_id]})"
                    )
                seen[doc.doc_id] = lineno
                docs.append(doc)
    return docs


def build_corpus(
    raw_docs: Sequence[RawDocument],
    tokenizer: TokenizerOptions | None = None,
    min_df: int = 5,
    max_df_frac: float = 0.5,
) -> Corpus:
    """Tokenize raw documents and assemble a :class:`Corpus`.

    Documents that are empty after tokenization, or that keep no token after
    vocabulary filtering, are dropped and counted in ``corpus.load_report``.
    Domains are enumerated in first-appearance order of the surviving
    documents.
    """
    tokenizer = tokenizer or TokenizerOptions()
    ids_seen = set()
    for doc in raw_docs:
        if doc.doc_id in ids_seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        ids_seen.add(doc.doc_id)

    tokenized = []
    dropped = []
    n_empty_tok = 0
    for doc in raw_docs:
        toks = tokenize(doc.text, tokenizer)
        if toks:
            tokenized.append((doc, toks))
        else:
            n_empty_tok += 1
            dropped.append(doc.doc_id)
    if not tokenized:
        raise CorpusError("no document has any token after tokenization")

    vocab = build_vocabulary((t for _, t in tokenized), min_df=min_df, max_df_frac=max_df_frac)
    index = vocab.token_to_id

    kept_docs, documents = [], []
    n_empty_vocab = 0
    for doc, toks in tokenized:
        c = Counter(index[t] for t in toks if t in index)
        if not c:
            n_empty_vocab += 1
            dropped.append(doc.doc_id)
            continue
        ids = np.array(sorted(c), dtype=np.int64)
        documents.append((ids, np.array([c[i] for i in ids], dtype=np.int64)))
        kept_docs.append(doc)

    domains: list[str] = []
    for doc in kept_docs:
        if doc.domain not in domains:
            domains.append(doc.domain)
    if len(domains) < 2:
        raise CorpusError(f"corpus needs at least 2 domains, got {len(domains)}")
    dom_index = {d: i for i, d in enumerate(domains)}

    return Corpus(
        doc_ids=tuple(d.doc_id for d in kept_docs),
        titles=tuple(d.title for d in kept_docs),
        labels=np.array([dom_index[d.domain] for d in kept_docs], dtype=np.int64),
        domains=tuple(domains),
        documents=tuple(documents),
        vocabulary=vocab,
        load_report=LoadReport(
            n_records=len(raw_docs),
            n_empty_after_tokenization=n_empty_tok,
            n_empty_after_vocabulary=n_empty_vocab,
            dropped_doc_ids=tuple(dropped),
        ),
    )


def load_corpus(
    path: str | Path,
    format: str | None = None,
    tokenizer: TokenizerOptions | None = None,
    min_df: int = 5,
    max_df_frac: float = 0.5,
) -> Corpus:
    """Read ``path`` (jsonl or csv) and build a corpus from it."""
    return build_corpus(
        read_documents(path, format), tokenizer=tokenizer, min_df=min_df, max_df_frac=max_df_frac
    )
