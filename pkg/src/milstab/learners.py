"""Supervised instance-level learners used inside the MIL wrappers.

All learners expose ``decision_function`` with the convention that a
positive score means the positive class; ``predict`` returns 1 only for
strictly positive scores, so exact ties go to the negative class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .validation import check_signed_labels

_GRAM_LIMIT = 4000


@njit(cache=True)
def _smo_steps(X, gram, diag, y, alpha, grad, w, C, n_steps):
    """Run up to ``n_steps`` SMO pair updates in place; True once optimal."""
    n = X.shape[0]
    use_gram = gram.shape[0] == n
    ki = np.empty(n)
    kj = np.empty(n)
    for _ in range(n_steps):
        i = -1
        m = -np.inf
        low_min = np.inf
        for t in range(n):
            s = -y[t] * grad[t]
            pos = y[t] > 0
            if (alpha[t] < C) if pos else (alpha[t] > 0):
                if s > m:
                    m = s
                    i = t
            if (alpha[t] > 0) if pos else (alpha[t] < C):
                if s < low_min:
                    low_min = s
        if i < 0 or low_min == np.inf or m - low_min < 1e-12:
            return True
        if use_gram:
            ki[:] = gram[i]
        else:
            ki[:] = X @ X[i]
        j = -1
        best = np.inf
        for t in range(n):
            pos = y[t] > 0
            if not ((alpha[t] > 0) if pos else (alpha[t] < C)):
                continue
            b = m + y[t] * grad[t]
            if b <= 0:
                continue
            curv = max(diag[i] + diag[t] - 2.0 * ki[t], 1e-12)
            v = -(b * b) / curv
            if v < best:
                best = v
                j = t
        if j < 0:
            return True
        curv = max(diag[i] + diag[j] - 2.0 * ki[j], 1e-12)
        step = (m + y[j] * grad[j]) / curv
        step = min(step, C - alpha[i] if y[i] > 0 else alpha[i])
        step = min(step, alpha[j] if y[j] > 0 else C - alpha[j])
        if step <= 0:
            return True
        alpha[i] = min(max(alpha[i] + y[i] * step, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * step, 0.0), C)
        if use_gram:
            kj[:] = gram[j]
        else:
            kj[:] = X @ X[j]
        for t in range(n):
            grad[t] += step * y[t] * (ki[t] - kj[t])
        w += step * (X[i] - X[j])
    return False


class _Binary(ClassifierMixin):
    classes_ = np.array([0, 1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


def _check_Xy(X, y):
    X = check_array(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("no training rows")
    y = check_signed_labels(y)
    if len(y) != X.shape[0]:
        raise ValueError("X and y differ in length")
    return X, y


class LinearSVM(_Binary, BaseEstimator):
    """Linear soft-margin SVM trained on the dual with pairwise (SMO) updates.

    Minimizes ``0.5 * ||w||^2 + C * sum(max(0, 1 - y * (X @ w + b)))`` with an
    unregularized bias. Working pairs are chosen by the second-order
    maximal-violation rule, so the run is a deterministic function of the
    data order. After every epoch (``n`` pair updates) the primal objective
    is evaluated and the best iterate so far is kept; training stops when
    the relative duality gap of that iterate drops below ``tol`` or after
    ``max_epochs`` epochs.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    objective_ : float
        Primal objective of the returned model.
    hinge_loss_ : float
        Total hinge loss (the sum of slacks) of the returned model.
    objective_history_ : list of float
        Best primal objective after each epoch; non-increasing.
    duality_gap_ : float
    n_iter_ : int
        Number of epochs run.
    """

    def __init__(self, C=1.0, max_epochs=200, tol=1e-4):
        self.C = C
        self.max_epochs = max_epochs
        self.tol = tol

    def fit(self, X, y):
        if not self.C > 0:
            raise ValueError("C must be > 0")
        X, y = _check_Xy(X, y)
        n = X.shape[0]
        C = float(self.C)
        yf = y.astype(float)

        gram = X @ X.T if n <= _GRAM_LIMIT else np.empty((0, 0))
        diag = np.einsum("ij,ij->i", X, X)
        alpha = np.zeros(n)
        grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a)
        w = np.zeros(X.shape[1])

        best = None
        history = []
        dual = 0.0
        gap = np.inf
        epoch = 0
        for epoch in range(1, self.max_epochs + 1):
            converged = _smo_steps(X, gram, diag, yf, alpha, grad, w, C, n)
            rho = self._rho(alpha, grad, yf, C)
            margins = yf * (X @ w - rho)
            hinge = np.maximum(0.0, 1.0 - margins).sum()
            primal = 0.5 * w @ w + C * hinge
            dual = alpha.sum() - 0.5 * w @ w
            if best is None or primal < best[0]:
                best = (primal, w.copy(), -rho, hinge)
            history.append(best[0])
            gap = best[0] - dual
            if converged or gap <= self.tol * max(abs(best[0]), 1e-12):
                break

        self.objective_, self.coef_, self.intercept_, self.hinge_loss_ = best
        self.intercept_ = float(self.intercept_)
        self.objective_history_ = history
        self.duality_gap_ = float(gap)
        self.n_iter_ = epoch
        self.n_features_in_ = X.shape[1]
        return self

    @staticmethod
    def _rho(alpha, grad, y, C):
        yg = y * grad
        at_upper = alpha >= C
        at_lower = alpha <= 0
        free = ~at_upper & ~at_lower
        if free.any():
            return float(yg[free].mean())
        pos = y > 0
        ub_mask = (pos & at_lower) | (~pos & at_upper)
        lb_mask = (pos & at_upper) | (~pos & at_lower)
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        if np.isinf(ub) or np.isinf(lb):
            return float(ub if np.isfinite(ub) else lb)
        return float((ub + lb) / 2)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return X @ self.coef_ + self.intercept_

    def objective(self, X, y):
        """Primal objective of the fitted model on ``(X, y)``."""
        y = check_signed_labels(y)
        margins = y * self.decision_function(X)
        return 0.5 * self.coef_ @ self.coef_ + self.C * np.maximum(0.0, 1.0 - margins).sum()


def _pairwise_distances(A, B, chunk=2048):
    if A.shape[0] <= chunk:
        return cdist(A, B)
    return np.vstack([cdist(A[k:k + chunk], B) for k in range(0, A.shape[0], chunk)])


class NearestMean(_Binary, BaseEstimator):
    """Nearest class mean; score is ``d(x, mean_neg) - d(x, mean_pos)``."""

    def fit(self, X, y):
        X, y = _check_Xy(X, y)
        self.means_ = np.vstack([X[y < 0].mean(axis=0), X[y > 0].mean(axis=0)])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "means_")
        X = check_array(X, dtype=float)
        D = _pairwise_distances(X, self.means_)
        return D[:, 0] - D[:, 1]


class OneNearestNeighbor(_Binary, BaseEstimator):
    """1-NN with Euclidean distance; score is ``d(x, nn_neg) - d(x, nn_pos)``."""

    def fit(self, X, y):
        X, y = _check_Xy(X, y)
        self.X_ = X
        self.y_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def _score(self, D):
        d_neg = D[:, self.y_ < 0].min(axis=1)
        d_pos = D[:, self.y_ > 0].min(axis=1)
        return d_neg - d_pos

    def decision_function(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=float)
        return self._score(_pairwise_distances(X, self.X_))

    def loo_decision_function(self):
        """Scores of the stored instances with each one excluded from its own search.

        A class left with no other member yields an infinite score of the
        appropriate sign.
        """
        check_is_fitted(self, "X_")
        D = _pairwise_distances(self.X_, self.X_)
        np.fill_diagonal(D, np.inf)
        with np.errstate(invalid="ignore"):
            score = self._score(D)
        return np.nan_to_num(score, nan=0.0)


# -- weighted decision stumps -------------------------------------------

@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int
    error: float

    def predict(self, X):
        """+polarity where ``X[:, feature] > threshold``, else -polarity."""
        X = np.asarray(X, dtype=float)
        return np.where(X[:, self.feature] > self.threshold, self.polarity, -self.polarity)


def fit_weighted_stump(X, targets, weights) -> Stump:
    """Stump minimizing weighted misclassification of ``targets`` in {-1, +1}.

    Thresholds are the midpoints between consecutive distinct values of each
    feature. Ties go to the lowest feature index, then the lowest threshold,
    then polarity +1 before -1. If no feature has two distinct values a
    constant stump (threshold ``-inf``) is returned.
    """
    X = check_array(X, dtype=float)
    targets = np.asarray(targets)
    weights = np.asarray(weights, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("no rows")
    if weights.shape != targets.shape or len(targets) != X.shape[0]:
        raise ValueError("X, targets and weights must agree in length")
    if np.any(weights < 0) or not weights.sum() > 0:
        raise ValueError("weights must be non-negative and not all zero")
    total = weights.sum()
    tie = 1e-12 * total
    w_pos = np.where(targets > 0, weights, 0.0)
    w_neg = np.where(targets > 0, 0.0, weights)

    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cut = np.flatnonzero(np.diff(xs) > 0)  # last index of each left block
        if len(cut) == 0:
            continue
        left_pos = np.cumsum(w_pos[order])[cut]
        left_neg = np.cumsum(w_neg[order])[cut]
        # polarity +1 predicts -1 on the left, +1 on the right
        err_plus = left_pos + (w_neg.sum() - left_neg)
        err_minus = total - err_plus
        thresholds = (xs[cut] + xs[cut + 1]) / 2
        errs = np.stack([err_plus, err_minus], axis=1)
        lowest = errs.min()
        k, p = np.argwhere(errs <= lowest + tie)[0]
        if best is None or lowest < best.error - tie:
            best = Stump(f, float(thresholds[k]), 1 if p == 0 else -1, float(errs[k, p]))
    if best is None:
        polarity = 1 if w_pos.sum() >= w_neg.sum() else -1
        err = w_neg.sum() if polarity > 0 else w_pos.sum()
        best = Stump(0, -np.inf, polarity, float(err))
    return best


class DecisionStump(_Binary, BaseEstimator):
    """Estimator wrapper around :func:`fit_weighted_stump`."""

    def fit(self, X, y, sample_weight=None):
        X, y = _check_Xy(X, y)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        self.stump_ = fit_weighted_stump(X, y, w)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "stump_")
        return self.stump_.predict(check_array(X, dtype=float)).astype(float)


BASE_LEARNERS = {"svm": LinearSVM, "nm": NearestMean, "1nn": OneNearestNeighbor}
