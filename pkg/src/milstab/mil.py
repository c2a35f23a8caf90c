"""Instance-labeling MIL classifiers: SimpleMIL, mi-family, MILBoost and MILES.

Every estimator takes a sequence of bags (2-D arrays, or a ``Dataset``)
with bag labels in {0, 1}, and exposes both levels of decision:

* ``decision_function`` / ``predict`` for bags,
* ``instance_decision_function`` / ``predict_instances`` for instances,
  concatenated in bag order, rows within a bag in their original order.
"""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist, pdist
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .learners import BASE_LEARNERS, LinearSVM, OneNearestNeighbor, fit_weighted_stump
from .validation import bag_offsets, check_bag_labels, check_bags


class DegenerateModelError(ValueError):
    """Raised when a fit produces a model with no usable features."""


class MILClassifier(ClassifierMixin, BaseEstimator):
    """Shared bag/instance prediction plumbing.

    Subclasses implement ``fit`` and ``_instance_scores(X)``. Unless
    overridden, a bag's score is the max of its instance scores.
    """

    combining_rule = "max_score"
    bag_threshold = 0.0
    classes_ = np.array([0, 1])

    def _check(self, bags):
        check_is_fitted(self, "n_features_in_")
        return check_bags(bags, n_features=self.n_features_in_)

    def instance_decision_function(self, bags):
        bags = self._check(bags)
        return self._instance_scores(np.vstack(bags))

    def predict_instances(self, bags):
        return (self.instance_decision_function(bags) > 0).astype(int)

    def decision_function(self, bags):
        bags = self._check(bags)
        scores = self._instance_scores(np.vstack(bags))
        return np.maximum.reduceat(scores, bag_offsets(bags)[:-1])

    def predict(self, bags):
        return (self.decision_function(bags) > self.bag_threshold).astype(int)


def _make_base(base, C):
    if base not in BASE_LEARNERS:
        raise ValueError(f"unknown base learner {base!r}; choose from {sorted(BASE_LEARNERS)}")
    return LinearSVM(C=C) if base == "svm" else BASE_LEARNERS[base]()


class SimpleMIL(MILClassifier):
    """Every instance inherits its bag label; one supervised learner on the pool."""

    def __init__(self, base="svm", C=1.0):
        self.base = base
        self.C = C

    def fit(self, bags, y):
        bags = check_bags(bags)
        y = check_bag_labels(y, len(bags))
        X = np.vstack(bags)
        z = np.repeat(y, [len(b) for b in bags])
        self.estimator_ = _make_base(self.base, self.C).fit(X, z)
        self.n_features_in_ = X.shape[1]
        return self

    def _instance_scores(self, X):
        return self.estimator_.decision_function(X)


def mi_relabel(scores, offsets, bag_labels):
    """One relabeling step of the mi-family heuristic.

    Instances of negative bags get 0, instances of positive bags get
    ``score > 0``; a positive bag left with no positive instance has its
    highest-scoring instance (first on ties) set to 1.
    """
    z = (np.asarray(scores) > 0).astype(int)
    for k, label in enumerate(bag_labels):
        lo, hi = offsets[k], offsets[k + 1]
        if not label:
            z[lo:hi] = 0
        elif not z[lo:hi].any():
            z[lo + int(np.argmax(scores[lo:hi]))] = 1
    return z


class MiClassifier(MILClassifier):
    """mi-SVM style alternation between instance labels and a base learner.

    Labels start from the bag labels. Each pass trains the base learner,
    relabels with :func:`mi_relabel`, and stops once the labels no longer
    change or ``max_iter`` passes have run. For ``base='1nn'`` training
    instances are relabeled from leave-one-out scores, since plain 1-NN
    always reproduces its own training labels.

    Attributes
    ----------
    instance_labels_ : ndarray
        Labels the returned learner was trained on.
    n_iter_ : int
    converged_ : bool
        Whether a fixed point was reached.
    """

    def __init__(self, base="svm", C=1.0, max_iter=20):
        self.base = base
        self.C = C
        self.max_iter = max_iter

    def fit(self, bags, y):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        bags = check_bags(bags)
        y = check_bag_labels(y, len(bags))
        X = np.vstack(bags)
        offsets = bag_offsets(bags)
        z = np.repeat(y, np.diff(offsets))
        self.converged_ = False
        for it in range(1, self.max_iter + 1):
            est = _make_base(self.base, self.C).fit(X, z)
            if isinstance(est, OneNearestNeighbor):
                scores = est.loo_decision_function()
            else:
                scores = est.decision_function(X)
            z_new = mi_relabel(scores, offsets, y)
            self.estimator_ = est
            self.instance_labels_ = z
            if np.array_equal(z_new, z):
                self.converged_ = True
                break
            z = z_new
        self.n_iter_ = it
        self.n_features_in_ = X.shape[1]
        return self

    def _instance_scores(self, X):
        return self.estimator_.decision_function(X)


# -- MILBoost ------------------------------------------------------------

def _log_noisy_or_complement(f, offsets):
    """Per-bag log(1 - P) = sum of log(1 - p) over instances, p = sigmoid(f)."""
    return np.add.reduceat(-np.logaddexp(0.0, f), offsets[:-1])


def noisy_or(probs, offsets):
    """Bag probabilities 1 - prod(1 - p) from stacked instance probabilities."""
    with np.errstate(divide="ignore"):
        log_q = np.add.reduceat(np.log1p(-np.asarray(probs, float)), offsets[:-1])
    return -np.expm1(log_q)


def milboost_loglik(f, offsets, y):
    """Noisy-or bag log-likelihood of instance logits ``f``."""
    s = _log_noisy_or_complement(f, offsets)
    with np.errstate(divide="ignore"):
        pos = np.log(-np.expm1(s))
    return float(np.where(y == 1, pos, s).sum())


def milboost_gradient(f, offsets, y):
    """Derivative of :func:`milboost_loglik` with respect to every logit.

    Negative bags give ``-p``; positive bags give ``p * (1 - P) / P``.
    """
    p = expit(f)
    s = _log_noisy_or_complement(f, offsets)
    with np.errstate(divide="ignore"):
        ratio = 1.0 / np.expm1(-s)  # (1 - P) / P
    sizes = np.diff(offsets)
    factor = np.where(y == 1, ratio, -1.0)
    return p * np.repeat(factor, sizes)


class MILBoost(MILClassifier):
    """Gradient boosting of decision stumps under the noisy-or bag model.

    Each round fits a stump to the sign of the log-likelihood gradient
    (weighted by its magnitude) and picks the step by a bounded scalar
    search; a step that would lower the likelihood is rejected and ends
    training.
    """

    combining_rule = "noisy_or"
    bag_threshold = 0.5

    def __init__(self, n_rounds=50, max_step=10.0):
        self.n_rounds = n_rounds
        self.max_step = max_step

    def fit(self, bags, y):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        bags = check_bags(bags)
        y = check_bag_labels(y, len(bags))
        X = np.vstack(bags)
        offsets = bag_offsets(bags)
        f = np.zeros(X.shape[0])
        self.stumps_, self.alphas_ = [], []
        self.loglik_history_ = [milboost_loglik(f, offsets, y)]
        for _ in range(self.n_rounds):
            g = milboost_gradient(f, offsets, y)
            if not np.abs(g).max() > 1e-12:
                break
            stump = fit_weighted_stump(X, np.where(g > 0, 1, -1), np.abs(g))
            h = stump.predict(X)
            if not g @ h > 0:
                break
            res = minimize_scalar(lambda a: -milboost_loglik(f + a * h, offsets, y),
                                  bounds=(0.0, self.max_step), method="bounded",
                                  options={"xatol": 1e-10})
            step = float(res.x)
            new_ll = milboost_loglik(f + step * h, offsets, y)
            if not new_ll > self.loglik_history_[-1]:
                break
            f = f + step * h
            self.stumps_.append(stump)
            self.alphas_.append(step)
            self.loglik_history_.append(new_ll)
        self.n_features_in_ = X.shape[1]
        return self

    def _instance_scores(self, X):
        f = np.zeros(X.shape[0])
        for stump, a in zip(self.stumps_, self.alphas_):
            f += a * stump.predict(X)
        return f

    def decision_function(self, bags):
        bags = self._check(bags)
        f = self._instance_scores(np.vstack(bags))
        return noisy_or(expit(f), bag_offsets(bags))


# -- MILES ---------------------------------------------------------------

def miles_embedding(bags, prototypes, gamma=1.0):
    """Similarity of each bag to each prototype: exp(-gamma * min_k ||x_k - p||)."""
    bags = check_bags(bags)
    D = cdist(np.vstack(bags), np.asarray(prototypes, dtype=float))
    return np.exp(-gamma * np.minimum.reduceat(D, bag_offsets(bags)[:-1], axis=0))


def _l1_logistic_objective(S, y, w, b, lam):
    eta = S @ w + b
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta) + lam * np.abs(w).sum())


@njit(cache=True)
def _weighted_lasso_cd(S, W, r, w, b, lam, tol, max_sweeps):
    """Cyclic CD on 0.5/N * sum W (r - S dw - db)^2 + lam * |w|_1, in place.

    ``r`` is the working residual for the current (w, b); returns b.
    """
    N, P = S.shape
    sw = W.sum()
    a = np.empty(P)
    for j in range(P):
        acc = 0.0
        for i in range(N):
            acc += W[i] * S[i, j] * S[i, j]
        a[j] = acc / N
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(P):
            if a[j] <= 0.0:
                continue
            g = 0.0
            for i in range(N):
                g += W[i] * S[i, j] * r[i]
            g = g / N + a[j] * w[j]
            if g > lam:
                new = (g - lam) / a[j]
            elif g < -lam:
                new = (g + lam) / a[j]
            else:
                new = 0.0
            delta = new - w[j]
            if delta != 0.0:
                for i in range(N):
                    r[i] -= S[i, j] * delta
                w[j] = new
                change = a[j] * delta * delta
                if change > max_change:
                    max_change = change
        acc = 0.0
        for i in range(N):
            acc += W[i] * r[i]
        db = acc / sw
        for i in range(N):
            r[i] -= db
        b += db
        change = sw / N * db * db
        if change > max_change:
            max_change = change
        if max_change < tol:
            break
    return b


def fit_l1_logistic(S, y, lam, tol=1e-6, max_iter=100):
    """L1-penalized logistic regression by proximal Newton with cyclic CD.

    Minimizes ``mean(log(1 + exp(eta)) - y * eta) + lam * ||w||_1`` with
    ``eta = S @ w + b``, ``y`` in {0, 1}, and an unpenalized intercept.
    Each outer step solves the weighted-lasso approximation by coordinate
    descent, then backtracks until the objective does not increase.

    Returns ``(w, b, n_iter, objective)``.
    """
    S = np.ascontiguousarray(S, dtype=float)
    y = np.asarray(y, dtype=float)
    ybar = y.mean()
    w = np.zeros(S.shape[1])
    b = float(np.log(ybar / (1 - ybar)))
    obj = _l1_logistic_objective(S, y, w, b, lam)
    it = 0
    for it in range(1, max_iter + 1):
        eta = S @ w + b
        p = expit(eta)
        W = np.maximum(p * (1 - p), 1e-5)
        r = (y - p) / W
        w_new = w.copy()
        b_new = _weighted_lasso_cd(S, W, r, w_new, b, lam, tol * 1e-6, 100000)
        dw, db = w_new - w, b_new - b
        step = 1.0
        while True:
            cand_w, cand_b = w + step * dw, b + step * db
            cand = _l1_logistic_objective(S, y, cand_w, cand_b, lam)
            if cand <= obj or step < 1e-10:
                break
            step /= 2
        if cand > obj:
            break
        decrease = obj - cand
        w, b, obj = cand_w, cand_b, cand
        if decrease <= tol * max(abs(obj), 1.0) or np.abs(step * dw).max(initial=0.0) < tol:
            break
    return w, b, it, obj


def l1_logistic_lambda_max(S, y):
    """Smallest penalty at which every weight is zero at the optimum."""
    y = np.asarray(y, dtype=float)
    return float(np.abs(np.asarray(S).T @ (y - y.mean())).max() / len(y))


class MILES(MILClassifier):
    """Bag embedding on instance prototypes plus an L1-penalized logistic model.

    The bag score is the logistic margin on the embedded bag, so the bag
    label is ``score > 0`` (probability above one half). An instance is
    scored as the singleton bag holding it.

    ``gamma='median'`` sets the kernel scale to one over the median distance
    between prototypes, which keeps similarities informative when the
    features are high-dimensional.

    Attributes
    ----------
    prototypes_ : ndarray
        All training instances, stacked in bag order.
    coef_, intercept_ : weights over prototypes and the bias.
    selected_ : ndarray of int
        Indices of prototypes with nonzero weight.
    sparsity_ : float
        Fraction of nonzero weights.
    gamma_ : float
        Kernel scale actually used.
    """

    combining_rule = "bag_classifier"

    def __init__(self, lam=0.01, gamma=1.0, tol=1e-6, max_iter=100):
        self.lam = lam
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, bags, y):
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        bags = check_bags(bags)
        y = check_bag_labels(y, len(bags))
        self.prototypes_ = np.vstack(bags)
        self.gamma_ = self._resolve_gamma()
        S = miles_embedding(bags, self.prototypes_, self.gamma_)
        w, b, n_iter, obj = fit_l1_logistic(S, y, self.lam, self.tol, self.max_iter)
        if not np.any(w):
            raise DegenerateModelError(
                f"all prototype weights are zero at lam={self.lam:g}; "
                f"the largest usable lam is below {l1_logistic_lambda_max(S, y):.6g}")
        self.coef_, self.intercept_ = w, float(b)
        self.selected_ = np.flatnonzero(w)
        self.sparsity_ = len(self.selected_) / len(w)
        self.n_iter_, self.objective_ = n_iter, obj
        self.n_features_in_ = self.prototypes_.shape[1]
        return self

    def _resolve_gamma(self):
        if self.gamma == "median":
            P = self.prototypes_
            if len(P) > 2000:
                P = P[np.linspace(0, len(P) - 1, 2000).astype(int)]
            med = np.median(pdist(P))
            if not med > 0:
                raise DegenerateModelError("all prototypes coincide; median distance is 0")
            return float(1.0 / med)
        if isinstance(self.gamma, str) or not self.gamma > 0:
            raise ValueError("gamma must be > 0 or 'median'")
        return float(self.gamma)

    def _bag_scores(self, bags):
        S = miles_embedding(bags, self.prototypes_, self.gamma_)
        return (S * self.coef_).sum(axis=1) + self.intercept_

    def decision_function(self, bags):
        return self._bag_scores(self._check(bags))

    def _instance_scores(self, X):
        return self._bag_scores([x[None, :] for x in X])


CLASSIFIER_KINDS = {
    "simple_svm": (SimpleMIL, {"base": "svm"}),
    "simple_nm": (SimpleMIL, {"base": "nm"}),
    "simple_1nn": (SimpleMIL, {"base": "1nn"}),
    "mi_svm": (MiClassifier, {"base": "svm"}),
    "mi_nm": (MiClassifier, {"base": "nm"}),
    "mi_1nn": (MiClassifier, {"base": "1nn"}),
    "milboost": (MILBoost, {}),
    "miles": (MILES, {}),
}


def make_classifier(kind, **params):
    """Build an unfitted classifier from its kind name and parameters."""
    if kind not in CLASSIFIER_KINDS:
        raise ValueError(f"unknown classifier kind {kind!r}; choose from {sorted(CLASSIFIER_KINDS)}")
    cls, fixed = CLASSIFIER_KINDS[kind]
    clash = set(params) & set(fixed)
    if clash:
        raise ValueError(f"{kind} fixes {sorted(clash)}")
    allowed = set(cls().get_params()) - set(fixed)
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    for key, value in params.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool) and not value > 0:
            raise ValueError(f"{kind}: parameter {key} must be positive")
    return cls(**fixed, **params)


def predict_instances(model, dataset):
    """Instance scores and labels (``score > 0``) in dataset order."""
    scores = model.instance_decision_function(dataset)
    return scores, (scores > 0).astype(int)


def predict_bags(model, dataset):
    """Bag scores and labels under the model's combining rule."""
    scores = model.decision_function(dataset)
    return scores, (scores > model.bag_threshold).astype(int)
