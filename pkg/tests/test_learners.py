import itertools

import numpy as np
import pytest
from sklearn.base import clone

from milstab.learners import (DecisionStump, LinearSVM, NearestMean, OneNearestNeighbor,
                              fit_weighted_stump)

X4 = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 0.5], [3.0, 1.0]])
Y4 = np.array([-1, 1, -1, 1])


def dual_oracle(X, y, C):
    """Best dual objective over every assignment of {0, C, free} to the multipliers.

    Each feasible candidate lower-bounds the optimum and the optimum is one
    of them, so the maximum equals the primal optimum by strong duality.
    """
    n = len(y)
    Q = np.outer(y, y) * (X @ X.T)
    best = -np.inf
    for states in itertools.product((0, 1, 2), repeat=n):
        a = np.array([C if s == 1 else 0.0 for s in states])
        free = [i for i, s in enumerate(states) if s == 2]
        if free:
            fixed = [i for i in range(n) if i not in free]
            m = len(free)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(free, free)]
            A[:m, m] = y[free]
            A[m, :m] = y[free]
            rhs = np.zeros(m + 1)
            rhs[:m] = 1 - Q[np.ix_(free, fixed)] @ a[fixed]
            rhs[m] = -(y[fixed] @ a[fixed])
            sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
            if not np.allclose(A @ sol, rhs, atol=1e-10):
                continue
            a[free] = sol[:m]
        if np.any(a < -1e-12) or np.any(a > C + 1e-12) or abs(y @ a) > 1e-10:
            continue
        best = max(best, a.sum() - 0.5 * a @ Q @ a)
    return best


def test_svm_separable_pair():
    m = LinearSVM(C=1).fit([[-1.0], [1.0]], [-1, 1])
    assert m.predict([[-1.0], [1.0]]).tolist() == [0, 1]
    assert m.decision_function([[-1.0]])[0] < 0 < m.decision_function([[1.0]])[0]


def test_svm_four_point_oracle():
    oracle = dual_oracle(X4.astype(float), Y4.astype(float), 1.0)
    assert oracle == pytest.approx(1.6, rel=1e-12)
    m = LinearSVM(C=1.0).fit(X4, Y4)
    assert m.objective_ == pytest.approx(oracle, rel=1e-3)
    assert m.objective(X4, Y4) == pytest.approx(m.objective_)
    np.testing.assert_allclose(m.coef_, [0.4, 0.8], atol=1e-3)
    assert m.intercept_ == pytest.approx(-1.0, abs=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_svm_matches_oracle_on_random_problems(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(7, 2))
    y = np.where(r.random(7) < 0.5, -1, 1)
    y[:2] = [-1, 1]
    C = float(r.choice([0.1, 1.0, 10.0]))
    m = LinearSVM(C=C).fit(X, y)
    assert m.objective_ == pytest.approx(dual_oracle(X, y.astype(float), C), rel=1e-3)


def test_svm_history_and_gap(rng):
    X = rng.normal(size=(200, 4))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=200) > 0, 1, -1)
    m = LinearSVM(C=1.0).fit(X, y)
    h = np.array(m.objective_history_)
    assert np.all(np.diff(h) <= 0)
    assert m.duality_gap_ <= 1e-4 * m.objective_
    assert h[-1] == m.objective_


def test_svm_deterministic_and_label_forms(rng):
    X = rng.normal(size=(50, 3))
    y01 = (X[:, 1] > 0).astype(int)
    a = LinearSVM().fit(X, y01)
    b = LinearSVM().fit(X, 2 * y01 - 1)
    assert np.array_equal(a.coef_, b.coef_) and a.intercept_ == b.intercept_


def test_svm_input_errors():
    with pytest.raises(ValueError):
        LinearSVM().fit(X4, np.ones(4))
    with pytest.raises(ValueError):
        LinearSVM(C=0).fit(X4, Y4)
    with pytest.raises(ValueError):
        LinearSVM().fit(X4, [0, 1, 2, 1])
    with pytest.raises(ValueError):
        LinearSVM().fit(np.array([[np.nan, 0]] * 4), Y4)


def test_svm_sklearn_api():
    m = LinearSVM(C=3.0)
    assert m.get_params() == {"C": 3.0, "max_epochs": 200, "tol": 1e-4}
    assert clone(m).C == 3.0


def test_nearest_mean_examples():
    m = NearestMean().fit([[0.0], [2.0]], [0, 1])
    assert m.decision_function([[1.5]])[0] == pytest.approx(1.0)
    assert m.predict([[1.5]])[0] == 1
    assert m.decision_function([[1.0]])[0] == 0.0
    assert m.predict([[1.0]])[0] == 0


def test_one_nn_examples():
    m = OneNearestNeighbor().fit([[0.0], [2.0]], [0, 1])
    assert m.predict([[0.5]])[0] == 0
    assert m.predict([[1.7]])[0] == 1


def test_one_nn_loo():
    X = np.array([[0.0], [0.1], [5.0], [5.2]])
    m = OneNearestNeighbor().fit(X, [0, 1, 0, 1])
    loo = m.loo_decision_function()
    # each point's nearest other point has the opposite label
    assert np.all(np.sign(loo) == [1, -1, 1, -1])
    assert np.all(m.decision_function(X) * np.array([-1, 1, -1, 1]) > 0)


def exhaustive_stump(X, t, w):
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2
            for pol in (1, -1):
                pred = np.where(X[:, f] > thr, pol, -pol)
                err = w[pred != t].sum()
                if best is None or err < best[0] - 1e-12 * w.sum():
                    best = (err, f, thr, pol)
    return best


def test_stump_one_dimensional():
    s = fit_weighted_stump([[-1.0], [1.0]], [-1, 1], [1.0, 1.0])
    assert (s.feature, s.threshold, s.polarity, s.error) == (0, 0.0, 1, 0.0)


def test_stump_tie_rule():
    X = np.array([[0.0, 5.0], [1.0, 6.0], [2.0, 7.0]])
    s = fit_weighted_stump(X, [1, -1, -1], [1.0, 0.0, 0.0])
    assert s.error == 0 and s.feature == 0 and s.threshold == 0.5


@pytest.mark.parametrize("seed", range(10))
def test_stump_matches_exhaustive_scan(seed):
    r = np.random.default_rng(seed)
    X = np.round(r.normal(size=(20, 3)), 1)
    t = np.where(r.random(20) < 0.5, -1, 1)
    w = r.random(20)
    s = fit_weighted_stump(X, t, w)
    err, f, thr, pol = exhaustive_stump(X, t, w)
    assert (s.feature, s.threshold, s.polarity) == (f, thr, pol)
    assert s.error == pytest.approx(err)


def test_stump_constant_features():
    s = fit_weighted_stump(np.ones((4, 2)), [1, 1, -1, 1], np.ones(4))
    assert s.threshold == -np.inf and s.polarity == 1 and s.error == 1.0
    assert s.predict(np.ones((2, 2))).tolist() == [1, 1]


def test_decision_stump_estimator():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    m = DecisionStump().fit(X, [0, 0, 1, 1])
    assert m.predict(X).tolist() == [0, 0, 1, 1]


def test_svm_permutation_invariant(rng):
    X = rng.normal(size=(80, 3))
    y = np.where(X[:, 0] - X[:, 2] > 0, 1, -1)
    perm = rng.permutation(80)
    a = LinearSVM().fit(X, y)
    b = LinearSVM().fit(X[perm], y[perm])
    T = rng.normal(size=(200, 3))
    assert np.array_equal(a.predict(T), b.predict(T))
    assert b.objective_ == pytest.approx(a.objective_, rel=1e-3)


def test_nearest_mean_antisymmetric(rng):
    X = rng.normal(size=(30, 2))
    y = rng.integers(0, 2, 30)
    y[:2] = [0, 1]
    T = rng.normal(size=(10, 2))
    np.testing.assert_allclose(NearestMean().fit(X, y).decision_function(T),
                               -NearestMean().fit(X, 1 - y).decision_function(T))
