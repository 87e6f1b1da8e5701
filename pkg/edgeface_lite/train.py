# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from dataclasses import dataclass, field
import csv
import io
import json
import logging
import numpy as np
from .errors import TrainingDiverged, ValidationError
from .loralin import LoRaLinLayer
from .losses import MarginKind, MarginLossConfig, margin_loss, \
    cosine_logits, normalize, lowrank_forward, lowrank_backward, gelu64, \
    gelu_backward

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

TOY_SCALE = 16.0


@dataclass(frozen=True)
class ToyTrainConfig:
    """Synthetic training run: Gaussian blobs on the unit sphere

    The network is input_dim -> hidden -> embedding, two LoRaLin layers at
    rank ratio gamma with a GELU in between, followed by the margin head.
    """

    classes: int = 10
    input_dim: int = 32
    hidden: int = 32
    embedding: int = 16
    samples_per_class: int = 50
    sigma: float = 0.05
    gamma: float = 0.5
    steps: int = 500
    batch: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.9
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("Need at least 2 classes, got {}"
                             .format(self.classes))
        for key in ('input_dim', 'hidden', 'embedding', 'samples_per_class',
                    'steps', 'batch', 'log_every'):
            if getattr(self, key) < 1:
                raise ValueError("{} must be positive, got {}"
                                 .format(key, getattr(self, key)))
        if self.learning_rate < 0 or self.sigma < 0:
            raise ValueError("learning_rate and sigma must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1), got {}"
                             .format(self.momentum))


def load_config(path: str) -> tuple:
    """Read {"train": {...}, "loss": {...}} into the two config objects"""

    with open(path, "r") as file:
        data = json.load(file)
    try:
        train = ToyTrainConfig(**data.get("train", {}))
        loss = dict(data.get("loss", {}))
        loss_config = MarginLossConfig(
            kind=MarginKind(loss.pop("kind", "cosface")),
            class_count=train.classes,
            scale=loss.pop("scale", TOY_SCALE),
            margin=loss.pop("margin", None))
        if loss:
            raise ValueError("Unknown loss keys {}".format(sorted(loss)))
    except (TypeError, ValueError) as err:
        raise ValidationError("Invalid training config {}: {}"
                              .format(path, err)) from err
    return train, loss_config


@dataclass
class TrainHistory:
    """Full-set loss and accuracy after every step"""

    steps: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)

    def append(self, step: int, loss: float, accuracy: float) -> None:
        self.steps.append(step)
        self.loss.append(loss)
        self.accuracy.append(accuracy)

    @property
    def final_accuracy(self) -> float:
        return self.accuracy[-1] if self.accuracy else 0.0

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(['step', 'loss', 'accuracy'])
        for row in zip(self.steps, self.loss, self.accuracy):
            writer.writerow([row[0], "{:.9g}".format(row[1]),
                             "{:.9g}".format(row[2])])
        return buffer.getvalue()


def make_blobs(config: ToyTrainConfig, rng: np.random.Generator) -> tuple:
    """Samples around random unit centres, projected back on the sphere"""

    centres, _ = normalize(rng.normal(size=(config.classes,
                                            config.input_dim)))
    labels = np.repeat(np.arange(config.classes), config.samples_per_class)
    noise = config.sigma * rng.normal(size=(labels.size, config.input_dim))
    samples, _ = normalize(centres[labels] + noise)
    return samples, labels


def _init_params(config: ToyTrainConfig, rng: np.random.Generator) -> dict:
    params = dict()
    for name, (m, n) in (('fc1', (config.input_dim, config.hidden)),
                         ('fc2', (config.hidden, config.embedding))):
        layer = LoRaLinLayer.init(m, n, config.gamma, rng=rng)
        params[name + '.w1'] = layer.w1.astype(np.float64)
        params[name + '.w2'] = layer.w2.astype(np.float64)
        params[name + '.bias'] = layer.bias.astype(np.float64)
    params['head'] = rng.normal(size=(config.classes, config.embedding)) / \
        np.sqrt(config.embedding)
    return params


def _embed(params: dict, x: np.ndarray) -> tuple:
    hidden = lowrank_forward(x, params['fc1.w1'], params['fc1.w2'],
                             params['fc1.bias'])
    active = gelu64(hidden)
    emb = lowrank_forward(active, params['fc2.w1'], params['fc2.w2'],
                          params['fc2.bias'])
    return hidden, active, emb


def _loss_and_grads(params: dict, x: np.ndarray, labels: np.ndarray,
                    loss_config: MarginLossConfig) -> tuple:
    hidden, active, emb = _embed(params, x)
    loss, (grad_emb, grad_head) = margin_loss(emb, params['head'], labels,
                                              loss_config)
    grads = {'head': grad_head}
    grad_active, grads['fc2.w1'], grads['fc2.w2'], grads['fc2.bias'] = \
        lowrank_backward(active, params['fc2.w1'], params['fc2.w2'],
                         grad_emb)
    grad_hidden = gelu_backward(hidden, grad_active)
    _, grads['fc1.w1'], grads['fc1.w2'], grads['fc1.bias'] = \
        lowrank_backward(x, params['fc1.w1'], params['fc1.w2'], grad_hidden)
    return loss, grads


def _accuracy(params: dict, x: np.ndarray, labels: np.ndarray) -> float:
    emb = _embed(params, x)[2]
    predicted = np.argmax(cosine_logits(emb, params['head']), axis=1)
    return float(np.mean(predicted == labels))


def toy_train(config: ToyTrainConfig,
              loss_config: MarginLossConfig = None) -> TrainHistory:
    """SGD with momentum on the blob task, single threaded and seeded

    Raises
    ------
    TrainingDiverged
        When a loss becomes non-finite, with the failing step
    """

    if loss_config is None:
        loss_config = MarginLossConfig(MarginKind.COSFACE, config.classes,
                                       scale=TOY_SCALE)
    if loss_config.class_count != config.classes:
        raise ValueError("Loss expects {} classes, task has {}"
                         .format(loss_config.class_count, config.classes))
    rng = np.random.default_rng(config.seed)
    x, labels = make_blobs(config, rng)
    params = _init_params(config, rng)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    batch = min(config.batch, labels.size)
    history = TrainHistory()
    for step in range(config.steps):
        index = rng.choice(labels.size, size=batch, replace=False)
        with np.errstate(all='ignore'):
            loss, grads = _loss_and_grads(params, x[index], labels[index],
                                          loss_config)
        if not np.isfinite(loss):
            raise TrainingDiverged(step, history)
        for key, grad in grads.items():
            velocity[key] = config.momentum * velocity[key] + grad
            params[key] = params[key] - config.learning_rate * velocity[key]
        with np.errstate(all='ignore'):
            full_loss = margin_loss(_embed(params, x)[2], params['head'],
                                    labels, loss_config)[0]
            accuracy = _accuracy(params, x, labels)
        if not np.isfinite(full_loss):
            raise TrainingDiverged(step, history)
        history.append(step, full_loss, accuracy)
        if step % config.log_every == 0 or step == config.steps - 1:
            logger.info("step %d loss %.4f accuracy %.3f", step, full_loss,
                        accuracy)
    return history
