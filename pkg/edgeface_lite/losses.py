# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from dataclasses import dataclass
from typing import Callable, Optional
import enum
import logging
import math
import numpy as np
from scipy.special import logsumexp, softmax
from .tensor import SQRT_2_OVER_PI, GELU_COEFF

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

NORM_EPS = 1e-12
GRAD_TOLERANCE = 1e-4


class MarginKind(enum.Enum):
    COSFACE = 'cosface'
    ARCFACE = 'arcface'


_default_margin = {MarginKind.COSFACE: 0.35, MarginKind.ARCFACE: 0.5}


@dataclass(frozen=True)
class MarginLossConfig:
    """Margin-based softmax over cosine logits

    Attributes
    ----------
    kind : MarginKind
        COSFACE subtracts the margin from the target cosine, ARCFACE adds
        it to the target angle
    scale : float
        Logit scale s
    margin : float
        Defaults to 0.35 (CosFace) or 0.5 (ArcFace)
    class_count : int
    """

    kind: MarginKind
    class_count: int
    scale: float = 64.0
    margin: Optional[float] = None

    def __post_init__(self):
        kind = MarginKind(self.kind)
        object.__setattr__(self, 'kind', kind)
        if self.margin is None:
            object.__setattr__(self, 'margin', _default_margin[kind])
        if self.scale <= 0:
            raise ValueError("Scale must be positive, got {}"
                             .format(self.scale))
        if self.class_count < 1:
            raise ValueError("Class count must be positive, got {}"
                             .format(self.class_count))
        limit = 1.0 if kind is MarginKind.COSFACE else math.pi / 2
        if not 0.0 <= self.margin < limit:
            raise ValueError("{} margin must be in [0, {:.4g}), got {}"
                             .format(kind.value, limit, self.margin))


def normalize(x: np.ndarray, eps: float = NORM_EPS) -> tuple:
    """Row-wise L2 normalisation in float64, returns (unit rows, norms)"""

    x = np.asarray(x, dtype=np.float64)
    norms = np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), eps)
    return x / norms, norms


def l2_normalize_backward(unit: np.ndarray, norms: np.ndarray,
                          grad: np.ndarray) -> np.ndarray:
    """Gradient through x / ||x|| given the forward unit rows and norms"""

    grad = np.asarray(grad, dtype=np.float64)
    return (grad - unit * np.sum(unit * grad, axis=-1, keepdims=True)) / norms


def _target_logit(cos_y: np.ndarray, config: MarginLossConfig) -> tuple:
    """Margin-adjusted target cosine and its derivative"""

    m = config.margin
    if config.kind is MarginKind.COSFACE:
        return cos_y - m, np.ones_like(cos_y)
    sin_y = np.sqrt(np.clip(1.0 - cos_y ** 2, 0.0, None))
    # theta + m must stay below pi, otherwise fall back to cos - m sin m
    main = cos_y > math.cos(math.pi - m)
    phi = np.where(main, cos_y * math.cos(m) - sin_y * math.sin(m),
                   cos_y - math.sin(math.pi - m) * m)
    dphi = np.where(main, math.cos(m) + math.sin(m) * cos_y /
                    np.maximum(sin_y, NORM_EPS), 1.0)
    return phi, dphi


def margin_loss(embeddings, weights, labels, config: MarginLossConfig
                ) -> tuple:
    """Mean margin softmax loss with analytic gradients

    Parameters
    ----------
    embeddings : np.ndarray
        [B, d] un-normalised embeddings
    weights : np.ndarray
        [K, d] un-normalised class centres
    labels : np.ndarray
        [B] integer classes in [0, K)

    Returns
    -------
    tuple
        (loss, (d loss / d embeddings, d loss / d weights))
    """

    embeddings = np.asarray(embeddings, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    labels = np.asarray(labels)
    if embeddings.ndim != 2 or weights.ndim != 2 or \
            embeddings.shape[1] != weights.shape[1]:
        raise ValueError("Embeddings {} and class weights {} must be [B, d] "
                         "and [K, d]".format(embeddings.shape, weights.shape))
    batch, classes = embeddings.shape[0], weights.shape[0]
    if classes != config.class_count:
        raise ValueError("Expected {} class weights, got {}"
                         .format(config.class_count, classes))
    if labels.shape != (batch,) or not np.issubdtype(labels.dtype,
                                                     np.integer):
        raise ValueError("Labels must be {} integers".format(batch))
    if batch and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError("Labels must be in [0, {})".format(classes))
    unit_e, norm_e = normalize(embeddings)
    unit_w, norm_w = normalize(weights)
    cos = np.clip(unit_e @ unit_w.T, -1.0, 1.0)
    rows = np.arange(batch)
    phi, dphi = _target_logit(cos[rows, labels], config)
    logits = config.scale * cos
    logits[rows, labels] = config.scale * phi
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[rows, labels]))
    grad_logits = softmax(logits, axis=1)
    grad_logits[rows, labels] -= 1.0
    grad_cos = config.scale * grad_logits / batch
    grad_cos[rows, labels] *= dphi
    grad_e = l2_normalize_backward(unit_e, norm_e, grad_cos @ unit_w)
    grad_w = l2_normalize_backward(unit_w, norm_w, grad_cos.T @ unit_e)
    return loss, (grad_e, grad_w)


def cosine_logits(embeddings, weights) -> np.ndarray:
    """Plain cosine between every embedding and every class centre"""

    return normalize(embeddings)[0] @ normalize(weights)[0].T


def lowrank_forward(x, w1, w2, bias=None) -> np.ndarray:
    """float64 Y = (X W1^T) W2^T + b"""

    out = (np.asarray(x, dtype=np.float64) @ np.asarray(w1).T) @ \
        np.asarray(w2).T
    return out if bias is None else out + bias


def lowrank_backward(x, w1, w2, grad_out) -> tuple:
    """Returns (d/dx, d/dW1, d/dW2, d/db) of lowrank_forward"""

    x = np.asarray(x, dtype=np.float64)
    hidden = x @ w1.T
    grad_hidden = grad_out @ w2
    return (grad_hidden @ w1, grad_hidden.T @ x, grad_out.T @ hidden,
            grad_out.sum(axis=0))


def gelu64(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(SQRT_2_OVER_PI *
                                    (x + GELU_COEFF * x ** 3)))


def gelu_backward(x, grad) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    t = np.tanh(SQRT_2_OVER_PI * (x + GELU_COEFF * x ** 3))
    dt = (1.0 - t ** 2) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x ** 2)
    return grad * (0.5 * (1.0 + t) + 0.5 * x * dt)


def grad_check(fn: Callable, point, eps: float = 1e-3) -> float:
    """Worst relative error between analytic and central-difference gradient

    Parameters
    ----------
    fn : callable
        Maps an array to (scalar value, gradient of the same shape)
    point : np.ndarray
    eps : float
        Finite difference step

    Returns
    -------
    float
        max_i |a_i - f_i| / max(1e-8, |a_i| + |f_i|)
    """

    point = np.array(point, dtype=np.float64)
    _, analytic = fn(point.copy())
    analytic = np.array(analytic, dtype=np.float64)
    if analytic.shape != point.shape:
        raise ValueError("Gradient shape {} does not match point shape {}"
                         .format(analytic.shape, point.shape))
    numeric = np.empty_like(point)
    flat, out = point.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        upper = fn(point.copy())[0]
        flat[i] = saved - eps
        lower = fn(point.copy())[0]
        flat[i] = saved
        out[i] = (upper - lower) / (2 * eps)
    error = np.abs(analytic - numeric) / \
        np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(error.max()) if error.size else 0.0


def _component(fn: Callable, index: int) -> Callable:
    """Restrict fn -> (value, grads) to one gradient of the tuple"""

    def wrapped(point):
        value, grads = fn(point)
        return value, grads[index]
    return wrapped


def _lowrank_checks(rng: np.random.Generator, eps: float) -> dict:
    x = rng.normal(size=(4, 6))
    w1 = rng.normal(size=(3, 6))
    w2 = rng.normal(size=(5, 3))
    b = rng.normal(size=5)
    target = rng.normal(size=(4, 5))

    def loss(x_, w1_, w2_, b_):
        diff = lowrank_forward(x_, w1_, w2_, b_) - target
        return 0.5 * float(np.sum(diff ** 2)), \
            lowrank_backward(x_, w1_, w2_, diff)

    return {
        'loralin.x': grad_check(
            _component(lambda p: loss(p, w1, w2, b), 0), x, eps),
        'loralin.w1': grad_check(
            _component(lambda p: loss(x, p, w2, b), 1), w1, eps),
        'loralin.w2': grad_check(
            _component(lambda p: loss(x, w1, p, b), 2), w2, eps),
        'loralin.bias': grad_check(
            _component(lambda p: loss(x, w1, w2, p), 3), b, eps),
    }


def _normalize_check(rng: np.random.Generator, eps: float) -> float:
    weights = rng.normal(size=(3, 5))

    def fn(p):
        unit, norms = normalize(p)
        return float(np.sum(weights * unit)), \
            l2_normalize_backward(unit, norms, weights)

    return grad_check(fn, rng.normal(size=(3, 5)), eps)


def _margin_checks(rng: np.random.Generator, kind: MarginKind,
                   eps: float) -> dict:
    config = MarginLossConfig(kind, class_count=5, scale=4.0)
    emb = rng.normal(size=(4, 8))
    weights = rng.normal(size=(5, 8))
    labels = rng.integers(0, 5, size=4)
    return {
        kind.value + '.embeddings': grad_check(_component(
            lambda p: margin_loss(p, weights, labels, config), 0), emb, eps),
        kind.value + '.weights': grad_check(_component(
            lambda p: margin_loss(emb, p, labels, config), 1), weights, eps),
    }


def gradient_suite(points: int = 20, seed: int = 0,
                   eps: float = 1e-6) -> dict:
    """Worst gradient-check error per check over random points"""

    rng = np.random.default_rng(seed)
    worst = dict()
    for _ in range(points):
        results = _lowrank_checks(rng, eps)
        results['normalize'] = _normalize_check(rng, eps)
        for kind in MarginKind:
            results.update(_margin_checks(rng, kind, eps))
        for name, error in results.items():
            worst[name] = max(worst.get(name, 0.0), error)
    for name, error in worst.items():
        logger.debug("gradient check %s: %.3g", name, error)
    return worst
