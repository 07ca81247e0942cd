import numpy as np
import pytest
from sklearn.base import clone

from bisonet.classify import (
    CvReport,
    DomainEnsemble,
    OutlierSet,
    domain_scores,
    find_outliers,
    train_ensemble,
)


class FixedProba:
    """Stand-in fitted classifier returning a fixed probability row."""

    def __init__(self, row, classes=(0, 1, 2)):
        self.row = np.asarray(row, dtype=float)
        self.classes_ = np.asarray(classes)

    def predict_proba(self, X):
        return np.tile(self.row, (np.asarray(X).shape[0], 1))


def stub_ensemble(rows, n_classes=3, n_features=4):
    ens = DomainEnsemble()
    ens.classes_ = np.arange(n_classes)
    ens.n_features_in_ = n_features
    ens.members_ = [(f"m{i}", FixedProba(r, range(n_classes))) for i, r in enumerate(rows)]
    return ens


def one_hot_data(n_per=20, D=3, T=4):
    y = np.repeat(np.arange(D), n_per)
    X = np.zeros((y.size, T))
    X[np.arange(y.size), y] = 1.0
    return X, y


def test_separable_one_hot():
    X, y = one_hot_data()
    ens, report = train_ensemble(X, y, k_folds=5, seed=0)
    assert all(acc == 1.0 for acc in report.cv_accuracy.values())
    assert len(report.members) == 3
    out = find_outliers(ens, X, y)
    assert all(c == 0 for c in out.counts.values())
    assert report.ensemble_accuracy == 1.0 and report.macro_f1 == 1.0


def test_gaussian_blobs_match_nearest_centroid():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])
    y_true = np.repeat(np.arange(3), 100)
    X = centers[y_true] + rng.normal(size=(300, 2))
    y = y_true.copy()
    flip = rng.random(300) < 0.1
    y[flip] = (y[flip] + rng.integers(1, 3, size=flip.sum())) % 3
    # oracle: nearest generating centroid, scored against the noisy labels
    nearest = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    oracle = np.mean(nearest == y)
    _, report = train_ensemble(X, y, seed=0)
    best = max(report.cv_accuracy[m] for m in report.members)
    assert abs(best - oracle) <= 0.05
    for m in report.members:
        assert abs(report.cv_accuracy[m] - oracle) <= 0.05


def test_small_domain_error():
    X, y = one_hot_data(n_per=10)
    y = y[:-7]
    X = X[:-7]
    with pytest.raises(ValueError, match="smaller k_folds"):
        train_ensemble(X, y, k_folds=5)


def test_too_few_candidates():
    X, y = one_hot_data()
    with pytest.raises(ValueError, match="at least 3"):
        train_ensemble(X, y, candidates=["naive_bayes", "bagged_trees"])
    with pytest.raises(ValueError, match="unknown classifier"):
        train_ensemble(X, y, candidates=["naive_bayes", "bagged_trees", "svm"])


def test_agreement_score_three():
    ens = stub_ensemble([[0, 0, 1.0]] * 3)
    s = domain_scores(ens, np.full(4, 0.25))
    assert s.predicted == 2
    assert s.scores[2] == 3.0


def test_tie_goes_to_lowest_domain():
    ens = stub_ensemble([[0.5, 0.5]] * 3, n_classes=2)
    s = domain_scores(ens, np.full(4, 0.25))
    assert s.predicted == 0
    assert ens.predict(np.full((2, 4), 0.25)).tolist() == [0, 0]


def test_two_classifier_disagreement():
    ens = stub_ensemble([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
    s = domain_scores(ens, np.full(4, 0.25))
    np.testing.assert_allclose(s.scores, [0.8, 0.5, 0.7], atol=1e-12)
    np.testing.assert_allclose(s.contributions.sum(axis=1), 1.0, atol=1e-9)
    assert s.predicted == 0


def test_unnormalized_scores_are_normalized():
    # argmax invariance: scaling one member's vector does not change anything
    a = stub_ensemble([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.2, 0.5, 0.3]])
    b = stub_ensemble([[7.0, 2.0, 1.0], [0.01, 0.03, 0.06], [20, 50, 30]])
    x = np.full((1, 4), 0.25)
    np.testing.assert_allclose(a.decision_function(x), b.decision_function(x), atol=1e-12)
    assert a.predict(x)[0] == b.predict(x)[0]


def test_member_with_missing_class_column():
    ens = stub_ensemble([[0.2, 0.8], [0.1, 0.3, 0.6]])
    ens.members_[0] = ("m0", FixedProba([0.2, 0.8], classes=(0, 2)))
    s = domain_scores(ens, np.full(4, 0.25))
    np.testing.assert_allclose(s.scores, [0.3, 0.3, 1.4], atol=1e-12)


def test_dimension_mismatch():
    ens = stub_ensemble([[0, 0, 1.0]] * 3)
    with pytest.raises(ValueError, match="features"):
        ens.predict(np.ones((1, 5)))


def test_planted_five_outliers():
    rng = np.random.default_rng(2)
    T = 6
    means = np.array([[0.6, 0.3, 0.02, 0.02, 0.03, 0.03], [0.02, 0.03, 0.6, 0.3, 0.02, 0.03], [0.03, 0.02, 0.02, 0.03, 0.6, 0.3]])
    y = np.repeat(np.arange(3), 40)
    gen = y.copy()
    planted = np.arange(5)  # first five documents of domain 0 drawn from domain 1
    gen[planted] = 1
    X = np.array([rng.dirichlet(50 * means[g]) for g in gen])
    ens, _ = train_ensemble(X, y, seed=0)
    out = find_outliers(ens, X, y)
    assert set(planted) <= set(out.members[0])
    assert len(out.members[0]) <= 6
    assert all(v <= 1 for d, v in out.counts.items() if d != 0)
    assert T == X.shape[1]


def test_outlier_invariants():
    labels = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([0, 1, 1, 0, 0, 2])
    out = OutlierSet(labels=labels, predicted=pred, doc_ids=tuple("abcdef"), n_domains=3)
    assert out.members == {0: (1,), 1: (3,), 2: (4,)}
    for d, idx in out.members.items():
        assert all(labels[i] == d for i in idx)
    assert sum(out.counts.values()) == out.n_misclassified == 3
    assert out.ids(2) == ["e"]


def test_outlier_csv_round_trip(tmp_path):
    labels = np.array([0, 0, 1, 1])
    pred = np.array([1, 0, 1, 0])
    out = OutlierSet(labels=labels, predicted=pred, doc_ids=("a", "b", "c", "d"), n_domains=2)
    path = tmp_path / "o.csv"
    out.write_csv(path, domain_names=["x", "y"])
    assert path.read_text().splitlines() == ["doc_id,true_domain,predicted_domain", "a,x,y", "d,y,x"]
    back = OutlierSet.read_csv(path, ("a", "b", "c", "d"), labels, domain_names=["x", "y"])
    assert back.members == out.members


def test_determinism_and_clone():
    rng = np.random.default_rng(5)
    X = rng.dirichlet(np.ones(5), size=60)
    y = np.repeat(np.arange(3), 20)
    a = DomainEnsemble(random_state=3).fit(X, y)
    b = clone(a).fit(X, y)
    assert a.cv_report_ == b.cv_report_
    assert np.array_equal(a.decision_function(X), b.decision_function(X))
    np.testing.assert_allclose(a.predict_proba(X).sum(axis=1), 1.0, atol=1e-9)


def test_cv_report_json_round_trip():
    rep = CvReport({"a": 0.5, "b": 0.75}, ("b", "a"), 0.7, 0.65, 5)
    assert rep.low_accuracy
    import json

    assert CvReport.from_dict(json.loads(rep.to_json())) == rep
