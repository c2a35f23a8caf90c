import numpy as np
import pytest
from scipy.special import expit

from milstab.data import SynthConfig, generate_synthetic
from milstab.evaluation import auc
from milstab.mil import (CLASSIFIER_KINDS, MILES, DegenerateModelError, MiClassifier, MILBoost,
                         SimpleMIL, make_classifier, mi_relabel, miles_embedding,
                         milboost_gradient, milboost_loglik, noisy_or, predict_bags,
                         predict_instances)
from milstab.validation import bag_offsets

TWO_BAGS = ([np.array([[1.0]]), np.array([[-1.0]])], np.array([1, 0]))


def stacked_truth(ds, truth):
    return np.concatenate([truth[b.id] for b in ds.bags])


def test_simple_nm_two_bags():
    m = SimpleMIL(base="nm").fit(*TWO_BAGS)
    assert m.predict_instances([[[0.9]]]).tolist() == [1]
    assert m.predict_instances([[[-0.9]]]).tolist() == [0]


def test_max_rule_bag_negative_when_all_instances_negative():
    m = SimpleMIL(base="nm").fit(*TWO_BAGS)
    bag = np.array([[-0.5], [-2.0]])
    assert np.all(m.instance_decision_function([bag]) < 0)
    assert m.predict([bag]).tolist() == [0]
    mixed = np.array([[-2.0], [0.3]])
    assert m.decision_function([mixed])[0] == m.instance_decision_function([mixed]).max()


@pytest.mark.parametrize("base", ["svm", "nm", "1nn"])
def test_simple_fully_positive_bags_separable(base):
    ds, _ = generate_synthetic(SynthConfig(10, 10, 5, 3, 1.0, 6.0, seed=1))
    m = SimpleMIL(base=base).fit(ds, ds.labels)
    assert auc(m.decision_function(ds), ds.labels) == 1.0


def test_mi_relabel_repair():
    scores = np.array([-3.0, -1.0, -2.0, 0.5, -1.0, 2.0])
    offsets = np.array([0, 3, 6])
    z = mi_relabel(scores, offsets, [1, 0])
    assert z.tolist() == [0, 1, 0, 0, 0, 0]
    z = mi_relabel(scores, np.array([0, 3, 6]), [1, 1])
    assert z.tolist() == [0, 1, 0, 1, 0, 1]


def test_mi_fixed_point_exits_after_one_pass():
    bags = [np.array([[3.0]]), np.array([[2.5]]), np.array([[-3.0]]), np.array([[-2.0]])]
    m = MiClassifier(base="svm").fit(bags, [1, 1, 0, 0])
    assert m.n_iter_ == 1 and m.converged_
    assert m.instance_labels_.tolist() == [1, 1, 0, 0]


def _recovery(base, seeds):
    acc, missed = [], 0
    for seed in seeds:
        ds, truth = generate_synthetic(SynthConfig(10, 10, 5, 3, 0.2, 6.0, seed=seed))
        z = stacked_truth(ds, truth)
        zl = MiClassifier(base=base).fit(ds, ds.labels).instance_labels_
        acc.append(np.mean(zl == z))
        missed += int(np.sum((zl == 0) & (z == 1)))
    return np.mean(acc), missed


@pytest.mark.parametrize("base", ["svm", "nm"])
def test_mi_recovers_witnesses(base):
    # single runs can stall in a local optimum, so average over seeds
    acc, missed = _recovery(base, range(20))
    assert acc >= 0.95
    assert missed == 0


def test_mi_1nn_finds_every_witness():
    # leave-one-out 1-NN keeps clusters of background instances from positive
    # bags positive, so only the witnesses themselves are guaranteed
    acc, missed = _recovery("1nn", range(20))
    assert missed == 0
    assert acc > 0.8


def test_mi_constraints_hold(synth_small):
    ds, _ = synth_small
    m = MiClassifier(base="nm", max_iter=3).fit(ds, ds.labels)
    off = bag_offsets(ds.instances)
    z = m.instance_labels_
    for k, bag in enumerate(ds.bags):
        seg = z[off[k]:off[k + 1]]
        assert seg.any() if bag.label else not seg.any()


def test_noisy_or_values():
    assert noisy_or([0.5, 0.5], [0, 2])[0] == pytest.approx(0.75)
    assert noisy_or([0.1, 0.1], [0, 2])[0] == pytest.approx(0.19)


def test_milboost_gradient_finite_differences(rng):
    sizes = [3, 1, 4]
    off = np.concatenate([[0], np.cumsum(sizes)])
    y = np.array([1, 0, 1])
    f = rng.normal(size=off[-1])
    g = milboost_gradient(f, off, y)
    h = 1e-5
    fd = np.array([(milboost_loglik(f + h * e, off, y) - milboost_loglik(f - h * e, off, y)) / (2 * h)
                   for e in np.eye(len(f))])
    assert np.max(np.abs(g - fd)) < 1e-6


def test_milboost_loglik_matches_direct_formula(rng):
    off = np.array([0, 2, 5])
    y = np.array([1, 0])
    f = rng.normal(size=5)
    P = 1 - np.array([np.prod(1 - expit(f[0:2])), np.prod(1 - expit(f[2:5]))])
    assert milboost_loglik(f, off, y) == pytest.approx(np.log(P[0]) + np.log(1 - P[1]))


def test_milboost_separable_and_monotone():
    ds, _ = generate_synthetic(SynthConfig(10, 10, 5, 3, 0.2, 6.0, seed=2))
    m = MILBoost(n_rounds=50).fit(ds, ds.labels)
    assert auc(m.decision_function(ds), ds.labels) == 1.0
    assert np.all(np.diff(m.loglik_history_) > 0)
    p = m.decision_function(ds)
    assert np.all((p >= 0) & (p <= 1))
    assert m.predict(ds).tolist() == (p > 0.5).astype(int).tolist()


def test_milboost_rejects_zero_rounds():
    with pytest.raises(ValueError):
        MILBoost(n_rounds=0).fit(*TWO_BAGS)


def test_miles_embedding_entries():
    P = np.array([[0.0, 0.0], [3.0, 4.0]])
    S = miles_embedding([np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0.0, 1.0]])], P, gamma=1.0)
    assert S[0, 0] == 1.0
    assert S[1, 0] == pytest.approx(np.exp(-1.0))
    assert S[0, 1] == pytest.approx(np.exp(-np.hypot(2.0, 4.0)))


def test_miles_fit_and_consistency(synth_small, rng):
    ds, _ = synth_small
    m = MILES(lam=0.01, gamma=0.5).fit(ds, ds.labels)
    assert len(m.coef_) == ds.n_instances
    assert m.sparsity_ == np.count_nonzero(m.coef_) / ds.n_instances
    assert auc(m.decision_function(ds), ds.labels) == 1.0
    X = rng.normal(size=(50, ds.d)) * 3
    fi = m.instance_decision_function([X])
    fb = np.array([m.decision_function([x[None, :]])[0] for x in X])
    assert np.array_equal(fi, fb)


def test_miles_sparsity_grows_with_penalty(synth_small):
    ds, _ = synth_small
    nnz = [np.count_nonzero(MILES(lam=lam, gamma=0.5).fit(ds, ds.labels).coef_)
           for lam in (0.001, 0.01, 0.05)]
    assert nnz[0] >= nnz[1] >= nnz[2] >= 1


def test_miles_degenerate_penalty(synth_small):
    ds, _ = synth_small
    with pytest.raises(DegenerateModelError, match="largest usable lam"):
        MILES(lam=1.0, gamma=0.5).fit(ds, ds.labels)


def test_miles_median_gamma(synth_small):
    ds, _ = synth_small
    m = MILES(gamma="median").fit(ds, ds.labels)
    assert m.gamma_ > 0
    with pytest.raises(ValueError):
        MILES(gamma="wide").fit(ds, ds.labels)


def test_make_classifier_validation():
    assert set(CLASSIFIER_KINDS) == {"simple_svm", "simple_nm", "simple_1nn", "mi_svm",
                                     "mi_nm", "mi_1nn", "milboost", "miles"}
    assert make_classifier("mi_svm", C=2.0).get_params()["C"] == 2.0
    with pytest.raises(ValueError, match="unknown classifier"):
        make_classifier("mi_forest")
    with pytest.raises(ValueError, match="fixes"):
        make_classifier("mi_svm", base="nm")
    with pytest.raises(ValueError, match="unknown parameters"):
        make_classifier("milboost", C=1.0)
    with pytest.raises(ValueError, match="positive"):
        make_classifier("simple_svm", C=-1)


@pytest.mark.parametrize("kind", sorted(CLASSIFIER_KINDS))
def test_prediction_contract(kind, synth_small):
    ds, _ = synth_small
    params = {"gamma": 0.5} if kind == "miles" else {}
    m = make_classifier(kind, **params).fit(ds, ds.labels)
    scores, labels = predict_instances(m, ds)
    assert np.array_equal(labels, (scores > 0).astype(int))
    s2, l2 = predict_instances(m, ds)
    assert np.array_equal(scores, s2) and np.array_equal(labels, l2)
    bag_scores, bag_labels = predict_bags(m, ds)
    assert bag_scores.shape == (len(ds),)
    assert np.array_equal(bag_labels, (bag_scores > m.bag_threshold).astype(int))
    if m.combining_rule == "max_score":
        off = bag_offsets(ds.instances)
        implied = np.maximum.reduceat(labels, off[:-1])
        assert np.array_equal(bag_labels, implied)


def test_fit_rejects_single_class():
    with pytest.raises(ValueError, match="both"):
        SimpleMIL().fit([[[1.0]], [[2.0]]], [1, 1])
    with pytest.raises(ValueError):
        MiClassifier().fit([[[1.0]], [[2.0]]], [1, 0, 1])


def test_predict_checks_dimension(synth_small):
    ds, _ = synth_small
    m = SimpleMIL(base="nm").fit(ds, ds.labels)
    with pytest.raises(ValueError, match="features"):
        m.predict([np.zeros((2, ds.d + 1))])
