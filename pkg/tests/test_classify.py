import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import special, stats

import oracles as O
from vinefuse import bicop
from vinefuse.classify import (
    ClassifierBundle,
    ClassModel,
    ConfusionMatrix,
    confusion_matrix,
    evaluate,
    log_posterior,
    predict,
    source_of,
    train,
)
from vinefuse.errors import InsufficientDataError, InvalidInputError
from vinefuse.margins import fit_marginal
from vinefuse.select import INDEPENDENCE_ONLY
from vinefuse.vine import VineEdge, VineModel, VineStructure


def independent_bundle(priors, seed=0):
    rng = np.random.default_rng(seed)
    margs = tuple(fit_marginal(rng.standard_normal(50)) for _ in range(2))
    vine = VineModel.independence(VineStructure.from_edges(2, [VineEdge((0, 1), frozenset())]))
    classes = [ClassModel(f"c{i}", margs, vine, p) for i, p in enumerate(priors)]
    return ClassifierBundle(classes, ("a.x", "b.y"))


@pytest.fixture(scope="module")
def sign_pair():
    x, y = O.gaussian_pair_classes(1000, 0.8, 21)
    return train(x, y), x, y


def test_source_tags():
    assert source_of("imu.f3") == "imu" and source_of("plain") == ""
    assert independent_bundle([0.5, 0.5]).feature_sources == ("a", "b")


def test_uniform_priors_six_classes():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((180, 2))
    y = np.repeat([f"w{i}" for i in range(6)], 30)
    b = train(x, y, INDEPENDENCE_ONLY)
    assert [c.prior for c in b.classes] == [1 / 6] * 6


def test_empirical_priors():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1000, 2))
    y = np.array(["a"] * 300 + ["b"] * 700, dtype=object)
    b = train(x, y, INDEPENDENCE_ONLY, prior_mode="empirical")
    assert [c.prior for c in b.classes] == pytest.approx([0.3, 0.7], abs=1e-15)


def test_class_order_is_first_appearance():
    rng = np.random.default_rng(3)
    y = np.array(["z"] * 40 + ["a"] * 40, dtype=object)
    assert train(rng.standard_normal((80, 2)), y, INDEPENDENCE_ONLY).labels == ("z", "a")


def test_insufficient_class_is_named():
    rng = np.random.default_rng(4)
    y = np.array(["big"] * 40 + ["tiny"] * 10, dtype=object)
    with pytest.raises(InsufficientDataError) as err:
        train(rng.standard_normal((50, 2)), y)
    assert err.value.label == "tiny" and "tiny" in str(err.value)


def test_sign_pair_fitted_taus(sign_pair):
    b, _, _ = sign_pair
    target = O.normal_tau_from_rho(0.8)
    for label, sign in (("pos", 1), ("neg", -1)):
        e = b.class_model(label).vine.trees[0][0]
        assert abs(bicop.param_to_tau(e.copula) - sign * target) < 0.07


def test_equal_posteriors_and_first_class_tie():
    b = independent_bundle([1 / 3] * 3)
    lp = log_posterior(b, [0.2, -0.4])
    assert lp[0] == lp[1] == lp[2]
    assert predict(b, [0.2, -0.4]) == "c0"


def test_prior_ratio():
    b = independent_bundle([0.9, 0.1])
    lp = log_posterior(b, np.array([[0.1, 0.3], [2.0, -1.0]]))
    assert np.allclose(lp[:, 0] - lp[:, 1], math.log(9), atol=1e-12)
    assert predict(b, [0.1, 0.3]) == "c0"


def test_concordant_point_prefers_positive_class(sign_pair):
    b, _, _ = sign_pair
    lp = log_posterior(b, [1.5, 1.5])
    assert lp[b.labels.index("pos")] > lp[b.labels.index("neg")]
    # closed-form Gaussian copula oracle agrees on the sign of the difference
    u = np.full((1, 2), special.ndtr(1.5))
    R = lambda r: np.array([[1, r], [r, 1]])
    assert O.gaussian_copula_logpdf(R(0.8), u)[0] > O.gaussian_copula_logpdf(R(-0.8), u)[0]


def test_sign_pair_accuracy_near_bayes_and_blind_ablation(sign_pair):
    b, x, y = sign_pair
    blind = train(x, y, INDEPENDENCE_ONLY)
    xt, yt = O.gaussian_pair_classes(1000, 0.8, 22)
    acc = np.mean(np.array(predict(b, xt), dtype=object) == yt)
    acc_blind = np.mean(np.array(predict(blind, xt), dtype=object) == yt)
    bayes = O.bayes_accuracy_sign_pair(0.8)
    # three binomial standard errors below the Bayes rate
    assert acc >= bayes - 3 * math.sqrt(bayes * (1 - bayes) / 2000)
    assert acc_blind <= 0.55


def test_bayes_rate_oracle_by_monte_carlo():
    x, y = O.gaussian_pair_classes(100_000, 0.8, 23)
    pos = stats.multivariate_normal([0, 0], [[1, 0.8], [0.8, 1]]).logpdf(x)
    neg = stats.multivariate_normal([0, 0], [[1, -0.8], [-0.8, 1]]).logpdf(x)
    acc = np.mean(np.where(pos > neg, "pos", "neg") == y)
    assert acc == pytest.approx(O.bayes_accuracy_sign_pair(0.8), abs=0.005)


def test_log_posterior_finite_far_from_data(sign_pair):
    b, _, _ = sign_pair
    lp = log_posterior(b, np.array([[1e6, -1e6], [1e-300, 0.0], [-50.0, 50.0]]))
    assert np.all(np.isfinite(lp))


def test_log_posterior_input_contracts(sign_pair):
    b, _, _ = sign_pair
    with pytest.raises(InvalidInputError):
        log_posterior(b, [1.0, 2.0, 3.0])
    with pytest.raises(InvalidInputError):
        log_posterior(b, [np.nan, 1.0])


def test_pseudo_observations_invariant_under_increasing_transform(sign_pair):
    _, x, y = sign_pair
    f = lambda t: np.exp(0.5 * t) + t
    b1 = train(x, y, INDEPENDENCE_ONLY)
    b2 = train(f(x), y, INDEPENDENCE_ONLY)
    q = np.random.default_rng(24).standard_normal((200, 2))
    for c1, c2 in zip(b1.classes, b2.classes):
        assert np.array_equal(c1.pseudo_observations(q), c2.pseudo_observations(f(q)))


def test_predict_deterministic_across_threads(sign_pair):
    b, x, _ = sign_pair
    ref = predict(b, x[:300])
    with ThreadPoolExecutor(4) as pool:
        runs = list(pool.map(lambda _: predict(b, x[:300]), range(8)))
    assert all(r == ref for r in runs)


# ---------------------------------------------------------------- metrics


def test_perfect_predictions():
    labels = ["a", "b", "c"]
    cm = confusion_matrix(labels * 5, labels * 5, labels)
    assert cm.macro_f1 == 1.0 and np.array_equal(cm.counts, 5 * np.eye(3, dtype=int))


def test_stisen_sit_recall():
    labels, counts = O.read_confusion_fixture("stisen_confusion.csv")
    cm = ConfusionMatrix(labels, counts)
    assert cm.recall[0] == pytest.approx(498 / 500)
    assert f"{100 * cm.recall[0]:.1f}" == "99.6"


def test_anguita_laying_precision():
    labels, counts = O.read_confusion_fixture("anguita_confusion.csv")
    assert ConfusionMatrix(labels, counts).precision[-1] == 1.0


def test_stisen_reconstruction():
    # one cell moved from 0 to 18 reproduces every published per-class value
    labels, counts = O.read_confusion_fixture("stisen_confusion.csv")
    counts = counts.copy()
    counts[3, 5] = 18
    cm = ConfusionMatrix(labels, counts)
    assert [round(100 * r, 1) for r in cm.recall] == [99.6, 90.8, 80.4, 81.6, 81.6, 97.2]
    assert [round(100 * p, 1) for p in cm.precision] == [100.0, 100.0, 85.0, 80.3, 77.7, 89.7]
    assert round(100 * cm.macro_f1, 1) == 88.6


def test_macro_f1_matches_hand_computation():
    cm = ConfusionMatrix(("a", "b"), np.array([[8, 2], [1, 9]]))
    p = np.array([8 / 9, 9 / 11])
    r = np.array([0.8, 0.9])
    assert cm.macro_f1 == pytest.approx(np.mean(2 * p * r / (p + r)), abs=1e-15)


def test_zero_denominator_class_contributes_zero():
    cm = ConfusionMatrix(("a", "b", "c"), np.array([[5, 0, 0], [0, 5, 0], [0, 0, 0]]))
    assert cm.macro_f1 == pytest.approx(2 / 3)


def test_single_class_test_set(sign_pair):
    b, x, y = sign_pair
    sel = y == "neg"
    cm = evaluate(b, x[sel], y[sel])
    row_acc = np.mean(np.array(predict(b, x[sel]), dtype=object) == "neg")
    i = b.labels.index("neg")
    assert cm.recall[i] == pytest.approx(row_acc)
    # the other class has recall 0 (no rows) and precision 0
    assert cm.macro_f1 == pytest.approx(2 / 2 * cm.recall[i] / (1 + cm.recall[i]))


def test_evaluate_rejects_unknown_label(sign_pair):
    b, x, _ = sign_pair
    with pytest.raises(InvalidInputError):
        evaluate(b, x[:2], ["pos", "mystery"])


def test_table_layout():
    labels, counts = O.read_confusion_fixture("anguita_confusion.csv")
    lines = ConfusionMatrix(labels, counts).to_table().splitlines()
    assert lines[0].split() == labels + ["Recall"]
    assert lines[-1].split()[0] == "Precision" and lines[-1].split()[-1] == "92.8%"
    assert len(lines) == len(labels) + 2


def test_bundle_round_trip(sign_pair):
    b, x, _ = sign_pair
    back = ClassifierBundle.from_dict(b.to_dict())
    assert np.array_equal(log_posterior(back, x[:100]), log_posterior(b, x[:100]))


def test_priors_must_sum_to_one():
    with pytest.raises(InvalidInputError):
        independent_bundle([0.5, 0.6])
