"""Domain classification ensemble and outlier (false negative) detection."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.covariance import LedoitWolf
from sklearn.discriminant_analysis import LinearDiscriminantAnalysis
from sklearn.ensemble import BaggingClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import accuracy_score, f1_score
from sklearn.model_selection import StratifiedKFold, cross_val_score
from sklearn.naive_bayes import GaussianNB
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_is_fitted

from ._seeding import sub_seed
from ._validation import check_labels

__all__ = [
    "default_candidates",
    "DomainEnsemble",
    "DomainScores",
    "CvReport",
    "OutlierSet",
    "train_ensemble",
    "domain_scores",
    "find_outliers",
    "LOW_ACCURACY_THRESHOLD",
]

LOW_ACCURACY_THRESHOLD = 0.8


class RidgedLedoitWolf(LedoitWolf):
    """Ledoit-Wolf covariance plus ``ridge`` on the diagonal.

    Keeps the discriminant solvable when the pooled within-class
    covariance is exactly zero (perfectly separable one-hot inputs).
    """

    def __init__(self, ridge=1e-6, store_precision=True, assume_centered=False):
        super().__init__(store_precision=store_precision, assume_centered=assume_centered)
        self.ridge = ridge

    def fit(self, X, y=None):
        super().fit(X, y)
        self.covariance_ = self.covariance_ + self.ridge * np.eye(self.covariance_.shape[0])
        return self


def default_candidates() -> dict:
    """Candidate classifier families, keyed by name."""
    lda = LinearDiscriminantAnalysis(solver="lsqr", covariance_estimator=RidgedLedoitWolf())
    return {
        "linear_discriminant": lda,
        "bagged_trees": BaggingClassifier(
            DecisionTreeClassifier(min_samples_leaf=5), n_estimators=30
        ),
        "subspace_discriminant": BaggingClassifier(
            clone(lda), n_estimators=30, max_features=0.5, bootstrap=False
        ),
        "logistic_regression": LogisticRegression(C=10.0, max_iter=5000),
        "naive_bayes": GaussianNB(),
    }


def _normalize_rows(P) -> np.ndarray:
    P = np.clip(np.asarray(P, dtype=np.float64), 0.0, None)
    s = P.sum(axis=1, keepdims=True)
    out = np.divide(P, s, out=np.full_like(P, 1.0 / P.shape[1]), where=s > 0)
    return out


@dataclass(frozen=True)
class CvReport:
    cv_accuracy: dict
    members: tuple[str, ...]
    ensemble_accuracy: float
    macro_f1: float
    k_folds: int

    @property
    def low_accuracy(self) -> bool:
        return self.ensemble_accuracy < LOW_ACCURACY_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "cv_accuracy": {k: float(v) for k, v in self.cv_accuracy.items()},
            "members": list(self.members),
            "ensemble_accuracy": float(self.ensemble_accuracy),
            "macro_f1": float(self.macro_f1),
            "k_folds": self.k_folds,
            "low_accuracy": self.low_accuracy,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CvReport":
        return cls(
            cv_accuracy=dict(data["cv_accuracy"]),
            members=tuple(data["members"]),
            ensemble_accuracy=data["ensemble_accuracy"],
            macro_f1=data["macro_f1"],
            k_folds=data["k_folds"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class DomainScores:
    """Summed per-classifier probability vectors for one document."""

    scores: np.ndarray
    contributions: np.ndarray
    classes: np.ndarray

    @property
    def predicted(self) -> int:
        # np.argmax returns the first maximum: ties go to the lowest domain index
        return int(self.classes[int(np.argmax(self.scores))])


class DomainEnsemble(ClassifierMixin, BaseEstimator):
    """Sum of the best ``n_members`` candidate classifiers by k-fold CV accuracy.

    Each candidate is scored by stratified k-fold cross-validation; the top
    ``n_members`` are refit on all data. Their ``predict_proba`` rows are
    renormalized to the simplex and added.
    """

    def __init__(self, candidates=None, n_members=3, k_folds=5, random_state=0):
        self.candidates = candidates
        self.n_members = n_members
        self.k_folds = k_folds
        self.random_state = random_state

    def _candidates(self) -> dict:
        cands = default_candidates() if self.candidates is None else self.candidates
        if isinstance(cands, (list, tuple)):
            pool = default_candidates()
            unknown = [n for n in cands if n not in pool]
            if unknown:
                raise ValueError(f"unknown classifier candidates: {unknown}; known: {sorted(pool)}")
            cands = {n: pool[n] for n in cands}
        if len(cands) < self.n_members:
            raise ValueError(
                f"need at least {self.n_members} candidate families, got {len(cands)}"
            )
        return dict(cands)

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-d")
        y = check_labels(y, X.shape[0])
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        cands = self._candidates()
        classes, counts = np.unique(y, return_counts=True)
        if classes.size < 2:
            raise ValueError("need at least 2 domains")
        small = classes[counts < self.k_folds]
        if small.size:
            raise ValueError(
                f"domain {int(small[0])} has {int(counts[classes == small[0]][0])} documents, "
                f"fewer than k_folds={self.k_folds}; use a smaller k_folds"
            )
        if X.shape[0] < classes.size * self.k_folds:
            raise ValueError("need at least n_domains * k_folds documents")

        folds = StratifiedKFold(
            n_splits=self.k_folds, shuffle=True, random_state=sub_seed(self.random_state, "folds")
        )
        cv_accuracy = {}
        seeded = {}
        for name, est in cands.items():
            est = clone(est)
            if "random_state" in est.get_params():
                est.set_params(random_state=sub_seed(self.random_state, name))
            seeded[name] = est
            cv_accuracy[name] = float(
                np.mean(cross_val_score(clone(est), X, y, cv=folds, scoring="accuracy"))
            )
        names = list(cands)
        ranked = sorted(names, key=lambda n: (-cv_accuracy[n], names.index(n)))
        chosen = ranked[: self.n_members]

        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        self.members_ = [(n, clone(seeded[n]).fit(X, y)) for n in chosen]
        self.cv_accuracy_ = cv_accuracy
        pred = self.predict(X)
        self.cv_report_ = CvReport(
            cv_accuracy=cv_accuracy,
            members=tuple(chosen),
            ensemble_accuracy=float(accuracy_score(y, pred)),
            macro_f1=float(f1_score(y, pred, average="macro", labels=classes)),
            k_folds=self.k_folds,
        )
        return self

    def _check_X(self, X) -> np.ndarray:
        check_is_fitted(self, "members_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got input of shape {X.shape}"
            )
        return X

    def member_scores(self, X) -> np.ndarray:
        """Normalized score of each member, shape (n_members, N, D)."""
        X = self._check_X(X)
        out = np.zeros((len(self.members_), X.shape[0], self.classes_.size))
        for m, (_, est) in enumerate(self.members_):
            cols = np.searchsorted(self.classes_, est.classes_)
            out[m][:, cols] = est.predict_proba(X)
            out[m] = _normalize_rows(out[m])
        return out

    def decision_function(self, X) -> np.ndarray:
        """Summed normalized member scores, shape (N, D); rows sum to n_members."""
        return self.member_scores(X).sum(axis=0)

    def predict_proba(self, X) -> np.ndarray:
        return self.decision_function(X) / len(self.members_)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def train_ensemble(X, labels, k_folds=5, candidates=None, seed=0, n_members=3):
    """Fit a :class:`DomainEnsemble`; returns ``(ensemble, cv_report)``."""
    ens = DomainEnsemble(
        candidates=candidates, n_members=n_members, k_folds=k_folds, random_state=seed
    ).fit(X, labels)
    return ens, ens.cv_report_


def domain_scores(ensemble: DomainEnsemble, x) -> DomainScores:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single topic-proportion vector")
    contrib = ensemble.member_scores(x)[:, 0, :]
    return DomainScores(scores=contrib.sum(axis=0), contributions=contrib, classes=ensemble.classes_)


@dataclass(frozen=True)
class OutlierSet:
    """Per-domain in-sample false negatives of a domain ensemble."""

    labels: np.ndarray
    predicted: np.ndarray
    doc_ids: tuple[str, ...]
    n_domains: int
    members: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            members = {
                d: tuple(int(i) for i in np.flatnonzero((self.labels == d) & (self.predicted != d)))
                for d in range(self.n_domains)
            }
            object.__setattr__(self, "members", members)

    def indices(self, domain: int) -> np.ndarray:
        return np.asarray(self.members[domain], dtype=np.int64)

    def ids(self, domain: int) -> list[str]:
        return [self.doc_ids[i] for i in self.members[domain]]

    @property
    def counts(self) -> dict:
        return {d: len(v) for d, v in self.members.items()}

    @property
    def n_misclassified(self) -> int:
        return int(np.sum(self.labels != self.predicted))

    def rows(self, domain_names=None):
        """(doc_id, true_domain, predicted_domain) for every outlier, by document order."""
        name = (lambda d: domain_names[d]) if domain_names is not None else int
        idx = sorted(i for v in self.members.values() for i in v)
        return [(self.doc_ids[i], name(int(self.labels[i])), name(int(self.predicted[i]))) for i in idx]

    def write_csv(self, path, domain_names=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["doc_id", "true_domain", "predicted_domain"])
            w.writerows(self.rows(domain_names))

    @classmethod
    def read_csv(cls, path, doc_ids, labels, domain_names=None):
        """Rebuild an outlier set from a CSV written by :meth:`write_csv`."""
        labels = np.asarray(labels, dtype=np.int64)
        predicted = labels.copy()
        pos = {d: i for i, d in enumerate(doc_ids)}
        if domain_names is not None:
            lookup = {n: i for i, n in enumerate(domain_names)}
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                p = row["predicted_domain"]
                predicted[pos[row["doc_id"]]] = lookup[p] if domain_names is not None else int(p)
        n_domains = len(domain_names) if domain_names is not None else int(labels.max()) + 1
        return cls(labels=labels, predicted=predicted, doc_ids=tuple(doc_ids), n_domains=n_domains)


def find_outliers(ensemble: DomainEnsemble, X, labels, doc_ids=None, n_domains=None) -> OutlierSet:
    """In-sample predictions over all documents; misclassified ones are outliers of their true domain."""
    labels = check_labels(labels, np.asarray(X).shape[0])
    predicted = ensemble.predict(X)
    if doc_ids is None:
        doc_ids = tuple(str(i) for i in range(labels.shape[0]))
    if n_domains is None:
        n_domains = int(max(labels.max(), ensemble.classes_.max())) + 1
    return OutlierSet(
        labels=labels, predicted=np.asarray(predicted, dtype=np.int64),
        doc_ids=tuple(doc_ids), n_domains=n_domains,
    )
