# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause


import json
import numpy as np
import pytest
from edgeface_lite import train
from edgeface_lite.errors import TrainingDiverged, ValidationError
from edgeface_lite.losses import MarginKind, MarginLossConfig
from edgeface_lite.train import ToyTrainConfig, toy_train

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(json.dumps({
        "train": {"steps": 20, "seed": 3, "gamma": 0.25},
        "loss": {"kind": "arcface", "margin": 0.3}
    }))
    yield str(path)


def test_cosface_converges():
    history = toy_train(ToyTrainConfig(steps=500))
    assert len(history.loss) == 500
    assert history.final_accuracy >= 0.95
    assert history.loss[-1] < history.loss[0]


def test_arcface_converges():
    config = ToyTrainConfig(steps=800)
    loss = MarginLossConfig(MarginKind.ARCFACE, config.classes,
                            scale=train.TOY_SCALE)
    history = toy_train(config, loss)
    assert history.final_accuracy >= 0.95


def test_deterministic():
    config = ToyTrainConfig(steps=30, seed=11)
    first = toy_train(config)
    second = toy_train(config)
    assert first.loss == second.loss
    assert first.accuracy == second.accuracy
    assert toy_train(ToyTrainConfig(steps=30, seed=12)).loss != first.loss


def test_zero_learning_rate():
    history = toy_train(ToyTrainConfig(steps=10, learning_rate=0.0))
    assert len(set(history.loss)) == 1
    assert len(set(history.accuracy)) == 1


def test_divergence():
    with pytest.raises(TrainingDiverged) as excinfo:
        toy_train(ToyTrainConfig(steps=10, learning_rate=1e300))
    err = excinfo.value
    assert err.step <= 1
    assert len(err.history.loss) == err.step
    assert err.exit_code == 3
    assert str(err) == "training diverged at step {}".format(err.step)


def test_blobs():
    config = ToyTrainConfig(classes=4, samples_per_class=6, input_dim=8)
    samples, labels = train.make_blobs(config, np.random.default_rng(0))
    assert samples.shape == (24, 8)
    assert np.allclose(np.linalg.norm(samples, axis=1), 1.0)
    assert list(np.bincount(labels)) == [6, 6, 6, 6]


def test_history_csv():
    history = train.TrainHistory()
    history.append(0, 2.5, 0.1)
    history.append(1, 1.25, 0.5)
    assert history.to_csv() == "step,loss,accuracy\n0,2.5,0.1\n1,1.25,0.5\n"
    assert history.final_accuracy == 0.5
    assert train.TrainHistory().final_accuracy == 0.0


def test_load_config(config_file):
    config, loss = train.load_config(config_file)
    assert config.steps == 20
    assert config.gamma == 0.25
    assert config.batch == 64
    assert loss.kind is MarginKind.ARCFACE
    assert loss.margin == 0.3
    assert loss.scale == train.TOY_SCALE
    assert loss.class_count == config.classes


def test_load_config_rejects_unknown(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"epochs": 3}}))
    with pytest.raises(ValidationError) as excinfo:
        train.load_config(str(path))
    assert str(excinfo.value).startswith(
        "Invalid training config {}: ".format(path))
    assert excinfo.value.exit_code == 2


@pytest.mark.parametrize("kwargs,message", [
    ({'classes': 1}, "Need at least 2 classes, got 1"),
    ({'steps': 0}, "steps must be positive, got 0"),
    ({'momentum': 1.0}, "momentum must be in [0, 1), got 1.0"),
])
def test_config_validation(kwargs, message):
    with pytest.raises(ValueError) as excinfo:
        ToyTrainConfig(**kwargs)
    assert str(excinfo.value) == message


def test_class_count_mismatch():
    with pytest.raises(ValueError) as excinfo:
        toy_train(ToyTrainConfig(steps=1),
                  MarginLossConfig(MarginKind.COSFACE, 7))
    assert str(excinfo.value) == "Loss expects 7 classes, task has 10"
