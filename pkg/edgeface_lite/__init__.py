# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"
__version__ = '1.0.1'

from .backbone import VariantSpec, EdgeFaceModel, build, embed, \
    load_variants
from .loralin import LoRaLinLayer, DenseLinear, rank_for, from_full, \
    layer_cost
from .accounting import CostReport, count, gamma_sweep
from .losses import MarginKind, MarginLossConfig, margin_loss, grad_check
from .train import ToyTrainConfig, toy_train
from .verification import PairList, ScoreSet, score_pairs, kfold_accuracy, \
    tar_at_far, evaluate
from .container import save, load
