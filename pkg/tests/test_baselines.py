import numpy as np
import pytest

from udelab.baselines import (
    SelectorSystem,
    TagLookupClassifier,
    ensemble_predict,
    oracle_select_predict,
    select_predict,
    train_domain_classifier,
)
from udelab.datagen import Dataset, generate_circles, split
from udelab.metrics import accuracy, accuracy_from_probs, predict_probs
from udelab.models import build_toy_backbone
from udelab.trainers import TrainConfig


class Constant:
    """Domain classifier that always reports the same P(source)."""

    def __init__(self, p_source):
        self.p = p_source

    def __call__(self, x):
        return np.tile([self.p, 1 - self.p], (len(x), 1))


@pytest.fixture(scope="module")
def pair():
    return build_toy_backbone(0), build_toy_backbone(1)


@pytest.fixture(scope="module")
def x():
    return np.random.default_rng(0).normal(size=(30, 2))


def test_tie_routes_to_source(pair, x):
    g_s, g_da = pair
    out = select_predict(SelectorSystem(Constant(0.5), g_s, g_da), x)
    np.testing.assert_array_equal(out, predict_probs(g_s, x))


def test_always_target_is_adapted_model(pair, x):
    g_s, g_da = pair
    out = select_predict(SelectorSystem(Constant(0.0), g_s, g_da), x)
    np.testing.assert_array_equal(out, predict_probs(g_da, x))


def test_oracle_routes_by_tag(pair, x):
    g_s, g_da = pair
    np.testing.assert_array_equal(oracle_select_predict("source", g_s, g_da, x), predict_probs(g_s, x))
    np.testing.assert_array_equal(oracle_select_predict("target", g_s, g_da, x), predict_probs(g_da, x))
    with pytest.raises(ValueError):
        oracle_select_predict(None, g_s, g_da, x)


def test_oracle_per_row_tags(pair, x):
    g_s, g_da = pair
    tags = np.array(["source", "target"] * 15, dtype=object)
    out = oracle_select_predict(tags, g_s, g_da, x)
    np.testing.assert_array_equal(out[::2], predict_probs(g_s, x)[::2])
    np.testing.assert_array_equal(out[1::2], predict_probs(g_da, x)[1::2])


def test_ensemble_examples(pair, x):
    g_s, g_da = pair
    np.testing.assert_allclose(ensemble_predict(g_s, g_s, x), predict_probs(g_s, x), rtol=0, atol=1e-15)
    np.testing.assert_allclose(ensemble_predict(g_s, g_da, x).sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        ensemble_predict(g_s, build_toy_backbone(0, class_count=3), x)


def test_ensemble_of_opposite_certainties():
    g_a, g_b = build_toy_backbone(0), build_toy_backbone(0)
    for net, bias in ((g_a, [50.0, -50.0]), (g_b, [-50.0, 50.0])):
        head = net.classifier.layers[0]
        head.weight.data[:] = 0.0
        head.bias.data[:] = bias
    np.testing.assert_allclose(ensemble_predict(g_a, g_b, np.zeros((2, 2))), 0.5, atol=1e-12)


def test_selector_validates_members(pair):
    with pytest.raises(ValueError):
        SelectorSystem(Constant(1.0), pair[0], build_toy_backbone(0, input_dim=3))


def test_perfect_selector_equals_oracle(trained, splits):
    g_s, g_da = trained["source"], trained["da"]
    tests = splits.testsets()
    system = SelectorSystem(TagLookupClassifier(list(tests.values())), g_s, g_da)
    for tag, ds in tests.items():
        np.testing.assert_array_equal(select_predict(system, ds), oracle_select_predict(tag, g_s, g_da, ds))


def test_oracle_accuracy_equals_members(trained, splits):
    g_s, g_da = trained["source"], trained["da"]
    src, tgt = splits.source_test, splits.target_test
    assert accuracy_from_probs(oracle_select_predict("source", g_s, g_da, src), src.labels) == accuracy(g_s, src)
    assert accuracy_from_probs(oracle_select_predict("target", g_s, g_da, tgt), tgt.labels) == accuracy(g_da, tgt)


def _domain_heldout_accuracy(clf, a: Dataset, b: Dataset) -> float:
    pa, pb = predict_probs(clf, a), predict_probs(clf, b)
    return 0.5 * (np.mean(pa.argmax(1) == 0) + np.mean(pb.argmax(1) == 1))


def test_domain_classifier_detects_shift(splits):
    cfg = TrainConfig(max_epochs=60, lr=0.001)
    clf = train_domain_classifier(splits.source_train, splits.target_train, cfg)
    assert _domain_heldout_accuracy(clf, splits.source_test, splits.target_test) > 0.5


def test_domain_classifier_near_chance_without_shift():
    a_tr, a_te = split(generate_circles(100, 300, 0.05, seed=10), 0.5, seed=0)
    b_tr, b_te = split(generate_circles(100, 300, 0.05, seed=11, domain="target"), 0.5, seed=0)
    clf = train_domain_classifier(a_tr, b_tr, TrainConfig(max_epochs=30))
    assert abs(_domain_heldout_accuracy(clf, a_te, b_te) - 0.5) < 0.1


def test_domain_classifier_determinism(splits):
    cfg = TrainConfig(max_epochs=3, seed=4)
    a = train_domain_classifier(splits.source_train, splits.target_train, cfg)
    b = train_domain_classifier(splits.source_train, splits.target_train, cfg)
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p.data, q.data)
