# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause


import math
import numpy as np
import pytest
from edgeface_lite import losses
from edgeface_lite.losses import MarginKind, MarginLossConfig, margin_loss, \
    grad_check

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


_suite_checks = ['loralin.x', 'loralin.w1', 'loralin.w2', 'loralin.bias',
                 'normalize', 'cosface.embeddings', 'cosface.weights',
                 'arcface.embeddings', 'arcface.weights']


@pytest.fixture
def instance():
    rng = np.random.default_rng(7)
    emb = rng.normal(size=(4, 8))
    weights = rng.normal(size=(5, 8))
    labels = rng.integers(0, 5, size=4)
    yield emb, weights, labels


def _straight_line(emb, weights, labels, kind, scale, margin):
    total = 0.0
    for e, y in zip(emb, labels):
        logits = list()
        for j, w in enumerate(weights):
            cos = np.dot(e, w) / (np.linalg.norm(e) * np.linalg.norm(w))
            if j == y:
                if kind == 'cosface':
                    cos = cos - margin
                elif math.acos(cos) + margin < math.pi:
                    cos = math.cos(math.acos(cos) + margin)
                else:
                    cos = cos - math.sin(math.pi - margin) * margin
            logits.append(scale * cos)
        peak = max(logits)
        total += peak + math.log(sum(math.exp(v - peak) for v in logits)) - \
            logits[y]
    return total / len(labels)


@pytest.mark.parametrize("kind", ["cosface", "arcface"])
def test_closed_form(kind):
    config = MarginLossConfig(kind, class_count=2, scale=1.0, margin=0.0)
    loss, _ = margin_loss(np.array([[1.0, 0.0]]), np.eye(2), np.array([0]),
                          config)
    assert loss == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)
    assert loss == pytest.approx(0.3133, abs=1e-4)


@pytest.mark.parametrize("kind", ["cosface", "arcface"])
def test_zero_margin_is_normalised_softmax(instance, kind):
    emb, weights, labels = instance
    config = MarginLossConfig(kind, class_count=5, scale=10.0, margin=0.0)
    logits = 10.0 * losses.cosine_logits(emb, weights)
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = -np.mean(np.log(probs[np.arange(4), labels]))
    assert margin_loss(emb, weights, labels, config)[0] == \
        pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kind,margin", [("cosface", 0.35),
                                         ("arcface", 0.5)])
def test_straight_line_recomputation(instance, kind, margin):
    emb, weights, labels = instance
    config = MarginLossConfig(kind, class_count=5, scale=64.0, margin=margin)
    expected = _straight_line(emb, weights, labels, kind, 64.0, margin)
    assert margin_loss(emb, weights, labels, config)[0] == \
        pytest.approx(expected, rel=1e-9)


def test_arcface_fallback():
    config = MarginLossConfig('arcface', class_count=2, scale=1.0,
                              margin=0.5)
    emb = np.array([[-1.0, 0.01]])
    weights = np.array([[1.0, 0.0], [0.0, 1.0]])
    expected = _straight_line(emb, weights, [0], 'arcface', 1.0, 0.5)
    assert margin_loss(emb, weights, np.array([0]), config)[0] == \
        pytest.approx(expected, rel=1e-9)


def test_margin_raises_loss(instance):
    emb, weights, labels = instance
    plain = MarginLossConfig('cosface', 5, scale=64.0, margin=0.0)
    margin = MarginLossConfig('cosface', 5, scale=64.0)
    assert margin_loss(emb, weights, labels, margin)[0] > \
        margin_loss(emb, weights, labels, plain)[0]


def test_default_margins():
    assert MarginLossConfig('cosface', 3).margin == 0.35
    assert MarginLossConfig(MarginKind.ARCFACE, 3).margin == 0.5
    assert MarginLossConfig('arcface', 3).scale == 64.0


@pytest.mark.parametrize("kwargs,message", [
    ({'kind': 'cosface', 'class_count': 3, 'margin': 1.0},
     "cosface margin must be in [0, 1), got 1.0"),
    ({'kind': 'arcface', 'class_count': 3, 'margin': 2.0},
     "arcface margin must be in [0, 1.571), got 2.0"),
    ({'kind': 'cosface', 'class_count': 3, 'scale': 0},
     "Scale must be positive, got 0"),
    ({'kind': 'cosface', 'class_count': 0},
     "Class count must be positive, got 0"),
])
def test_config_validation(kwargs, message):
    with pytest.raises(ValueError) as excinfo:
        MarginLossConfig(**kwargs)
    assert str(excinfo.value) == message


def test_unknown_kind():
    with pytest.raises(ValueError):
        MarginLossConfig('sphereface', 3)


def test_label_range(instance):
    emb, weights, _ = instance
    config = MarginLossConfig('cosface', 5)
    with pytest.raises(ValueError) as excinfo:
        margin_loss(emb, weights, np.array([0, 1, 2, 5]), config)
    assert str(excinfo.value) == "Labels must be in [0, 5)"


def test_class_count_checked(instance):
    emb, weights, labels = instance
    with pytest.raises(ValueError) as excinfo:
        margin_loss(emb, weights, labels, MarginLossConfig('cosface', 4))
    assert str(excinfo.value) == "Expected 4 class weights, got 5"


def test_grad_check_quadratic():
    def fn(p):
        return float(np.sum(p ** 2)), 2 * p

    point = np.arange(1, 7, dtype=np.float64).reshape(2, 3) * 0.5
    assert grad_check(fn, point) < 1e-6
    assert np.array_equal(point, np.arange(1, 7).reshape(2, 3) * 0.5)


def test_grad_check_catches_wrong_gradient():
    def fn(p):
        return float(np.sum(p ** 2)), p

    assert grad_check(fn, np.array([1.0, -2.0])) == pytest.approx(1 / 3)


def test_grad_check_shape():
    with pytest.raises(ValueError) as excinfo:
        grad_check(lambda p: (0.0, np.zeros(3)), np.zeros(2))
    assert str(excinfo.value) == \
        "Gradient shape (3,) does not match point shape (2,)"


def test_gelu_gradient():
    def fn(p):
        return float(np.sum(losses.gelu64(p))), \
            losses.gelu_backward(p, np.ones_like(p))

    assert grad_check(fn, np.array([-2.5, -0.7, 0.3, 1.1, 3.0]),
                      eps=1e-5) < 1e-6


def test_margin_gradients(instance):
    emb, weights, labels = instance
    for kind in MarginKind:
        config = MarginLossConfig(kind, 5, scale=4.0)
        error = grad_check(lambda p: (margin_loss(p, weights, labels,
                                                  config)[0],
                                      margin_loss(p, weights, labels,
                                                  config)[1][0]),
                           emb, eps=1e-6)
        assert error < losses.GRAD_TOLERANCE


def test_gradient_suite():
    worst = losses.gradient_suite(points=20, seed=0)
    assert sorted(worst) == sorted(_suite_checks)
    for name, error in worst.items():
        assert error < losses.GRAD_TOLERANCE, name


def test_normalize_zero_row():
    unit, norms = losses.normalize(np.zeros((1, 4)))
    assert np.array_equal(unit, np.zeros((1, 4)))
    assert norms[0, 0] == losses.NORM_EPS


@pytest.mark.parametrize("kind,margin", [("cosface", 0.35),
                                         ("arcface", 0.5)])
def test_class_permutation_invariant(instance, kind, margin):
    emb, weights, labels = instance
    config = MarginLossConfig(kind, class_count=5, scale=32.0, margin=margin)
    perm = np.array([3, 0, 4, 1, 2])
    relabel = np.argsort(perm)[labels]
    loss, (grad_e, grad_w) = margin_loss(emb, weights, labels, config)
    moved, (moved_e, moved_w) = margin_loss(emb, weights[perm], relabel,
                                            config)
    assert moved == pytest.approx(loss, rel=1e-12)
    assert np.allclose(moved_e, grad_e, rtol=1e-10, atol=1e-14)
    assert np.allclose(moved_w, grad_w[perm], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("scale", [1.0, 4.0, 16.0, 64.0])
def test_scale_enters_logits_linearly(instance, scale):
    emb, weights, labels = instance
    cos = losses.cosine_logits(emb, weights)
    rows = np.arange(len(labels))
    for kind in ("cosface", "arcface"):
        config = MarginLossConfig(kind, class_count=5, scale=scale,
                                  margin=0.0)
        peak = scale * cos.max(axis=1)
        expected = np.mean(peak + np.log(np.exp(
            scale * cos - peak[:, None]).sum(axis=1)) -
            scale * cos[rows, labels])
        assert margin_loss(emb, weights, labels, config)[0] == \
            pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kind,grid", [
    ("cosface", np.linspace(0.0, 0.9, 10)),
    ("arcface", np.linspace(0.0, 1.5, 16)),
])
def test_loss_grows_with_margin(instance, kind, grid):
    emb, weights, labels = instance
    values = [margin_loss(emb, weights, labels,
                          MarginLossConfig(kind, class_count=5, scale=16.0,
                                           margin=float(m)))[0]
              for m in grid]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] > values[0]
