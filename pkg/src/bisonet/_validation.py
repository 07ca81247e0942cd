"""Input checks shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp


def check_count_matrix(X, *, allow_empty_rows: bool = False) -> sp.csr_matrix:
    """Return ``X`` as a CSR matrix of nonnegative integer counts."""
    if sp.issparse(X):
        X = sp.csr_matrix(X)
    else:
        X = np.asarray(X)
        if X.ndim != 2:
            raise ValueError(f"expected a 2-d document-term matrix, got shape {X.shape}")
        X = sp.csr_matrix(X)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"document-term matrix has shape {X.shape}")
    data = X.data
    if data.size and (np.any(data < 0) or np.any(data != np.round(data))):
        raise ValueError("document-term matrix must hold nonnegative integer counts")
    X = sp.csr_matrix(
        (data.astype(np.int64), X.indices.astype(np.int64), X.indptr.astype(np.int64)),
        shape=X.shape,
    )
    X.sum_duplicates()
    X.eliminate_zeros()
    if not allow_empty_rows:
        lengths = np.diff(X.indptr)
        empty = np.flatnonzero(lengths == 0)
        if empty.size:
            raise ValueError(
                f"document {int(empty[0])} has zero tokens; drop empty documents before fitting"
            )
    return X


def check_topic_matrix(X, *, n_topics: int | None = None) -> np.ndarray:
    """Return ``X`` as a finite float64 N x T array with entries in [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d document-topic matrix, got shape {X.shape}")
    if n_topics is not None and X.shape[1] != n_topics:
        raise ValueError(f"expected {n_topics} topic columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("document-topic matrix contains non-finite values")
    if X.size and (X.min() < 0 or X.max() > 1):
        raise ValueError("document-topic proportions must lie in [0, 1]")
    return X


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"labels must be a 1-d array of length {n_samples}")
    if not np.issubdtype(y.dtype, np.integer):
        if np.all(np.equal(np.mod(y, 1), 0)):
            y = y.astype(np.int64)
        else:
            raise ValueError("labels must be integer domain ids")
    if y.size and y.min() < 0:
        raise ValueError("domain ids must be nonnegative")
    return y.astype(np.int64)


def check_index(value, size: int, name: str) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if not 0 <= value < size:
        raise IndexError(f"{name} {value} out of range [0, {size})")
    return int(value)
