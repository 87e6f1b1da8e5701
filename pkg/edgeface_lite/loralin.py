# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Union
import logging
import numpy as np
from .errors import FactorizationError
from .tensor import linear

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

MIN_RANK = 2


def rank_for(in_features: int, out_features: int, gamma: float) -> int:
    """Rank of a LoRaLin layer: max(2, floor(gamma * min(M, N)))"""

    if in_features < 1 or out_features < 1:
        raise ValueError("Layer dimensions must be positive, got {}x{}"
                         .format(in_features, out_features))
    if not 0.0 < gamma <= 1.0:
        raise ValueError("Rank ratio gamma must be in (0, 1], got {}"
                         .format(gamma))
    return max(MIN_RANK, int(gamma * min(in_features, out_features)))


def break_even_rank(in_features: int, out_features: int) -> int:
    """Largest rank for which r * (M + N) < M * N"""

    m, n = in_features, out_features
    return (m * n - 1) // (m + n)


@dataclass(frozen=True)
class LayerCost:
    """Parameter count and multiply-accumulates per input row"""

    params: int
    macs_per_row: int


@dataclass(frozen=True)
class LinearSpec:
    """Weightless description of a linear layer

    gamma None describes the full-rank layer.
    """

    in_features: int
    out_features: int
    gamma: Optional[float] = None
    bias: bool = True

    @property
    def rank(self) -> Optional[int]:
        if self.gamma is None:
            return None
        return rank_for(self.in_features, self.out_features, self.gamma)


def _frozen(array, shape: tuple, name: str) -> np.ndarray:
    array = np.array(array, dtype=np.float32)
    if array.shape != shape:
        raise ValueError("{} must have shape {}, got {}"
                         .format(name, shape, array.shape))
    array.setflags(write=False)
    return array


class DenseLinear:
    """Full-rank linear layer Y = X W^T + b, W is [N, M]"""

    def __init__(self, weight, bias=None):
        weight = np.asarray(weight)
        if weight.ndim != 2:
            raise ValueError("weight must be a matrix, got shape {}"
                             .format(weight.shape))
        self.out_features, self.in_features = weight.shape
        self.weight = _frozen(weight, weight.shape, "weight")
        self.bias = None if bias is None else \
            _frozen(bias, (self.out_features,), "bias")

    @property
    def gamma(self) -> None:
        return None

    def forward(self, x) -> np.ndarray:
        return linear(x, self.weight, self.bias)

    def dense_weight(self) -> np.ndarray:
        return self.weight

    def cost(self) -> LayerCost:
        return layer_cost(self)

    def named_parameters(self, prefix: str):
        yield prefix + ".weight", self.weight
        if self.bias is not None:
            yield prefix + ".bias", self.bias

    def __repr__(self):
        return "DenseLinear({} -> {})".format(self.in_features,
                                              self.out_features)


class LoRaLinLayer:
    """Rank-r factorized linear layer Y = W2 (W1 X) + b

    Attributes
    ----------
    w1 : np.ndarray
        [r, M] projection onto the rank-r subspace, no bias
    w2 : np.ndarray
        [N, r] expansion to the output features
    bias : np.ndarray or None
        [N], owned by the second factor
    """

    def __init__(self, in_features: int, out_features: int, gamma: float,
                 w1, w2, bias=None):
        self.in_features = in_features
        self.out_features = out_features
        self.gamma = gamma
        self.rank = rank_for(in_features, out_features, gamma)
        self.w1 = _frozen(w1, (self.rank, in_features), "w1")
        self.w2 = _frozen(w2, (out_features, self.rank), "w2")
        self.bias = None if bias is None else \
            _frozen(bias, (out_features,), "bias")

    @classmethod
    def init(cls, in_features: int, out_features: int, gamma: float,
             bias: bool = True, rng: np.random.Generator = None):
        """Random layer, factors drawn from N(0, 1 / fan_in)"""

        rng = np.random.default_rng(rng)
        r = rank_for(in_features, out_features, gamma)
        w1 = rng.normal(0.0, 1.0 / np.sqrt(in_features), (r, in_features))
        w2 = rng.normal(0.0, 1.0 / np.sqrt(r), (out_features, r))
        b = np.zeros(out_features) if bias else None
        return cls(in_features, out_features, gamma, w1, w2, b)

    def forward(self, x) -> np.ndarray:
        return linear(linear(x, self.w1), self.w2, self.bias)

    def dense_weight(self) -> np.ndarray:
        return self.w2 @ self.w1

    def cost(self) -> LayerCost:
        return layer_cost(self)

    def named_parameters(self, prefix: str):
        yield prefix + ".lin1.weight", self.w1
        yield prefix + ".lin2.weight", self.w2
        if self.bias is not None:
            yield prefix + ".lin2.bias", self.bias

    def __repr__(self):
        return "LoRaLinLayer({} -> {}, rank={})".format(
            self.in_features, self.out_features, self.rank)


def forward(layer: Union[DenseLinear, LoRaLinLayer], x) -> np.ndarray:
    """Apply a linear layer of either kind to [rows, M]"""

    return layer.forward(x)


def layer_cost(layer: Union[DenseLinear, LoRaLinLayer, LinearSpec]
               ) -> LayerCost:
    """Parameters and MACs per input row

    Full rank costs M*N (+N bias) parameters and M*N MACs per row,
    rank r costs r*(M+N) (+N bias) parameters and r*(M+N) MACs per row.
    """

    m, n = layer.in_features, layer.out_features
    if isinstance(layer, LinearSpec):
        rank, has_bias = layer.rank, layer.bias
    elif isinstance(layer, LoRaLinLayer):
        rank, has_bias = layer.rank, layer.bias is not None
    elif isinstance(layer, DenseLinear):
        rank, has_bias = None, layer.bias is not None
    else:
        raise TypeError("Cannot cost object of type {}"
                        .format(type(layer).__name__))
    macs = m * n if rank is None else rank * (m + n)
    return LayerCost(params=macs + (n if has_bias else 0), macs_per_row=macs)


def from_full(weight, bias, gamma: float, name: str = "linear"
              ) -> LoRaLinLayer:
    """Best rank-r approximation of a dense layer by truncated SVD

    W2 = U_r S_r and W1 = V_r^T, so W2 W1 is the Eckart-Young optimum and
    the Frobenius error equals the norm of the discarded singular values.
    The bias is carried over unchanged.
    """

    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2:
        raise ValueError("weight must be a matrix, got shape {}"
                         .format(weight.shape))
    n, m = weight.shape
    r = rank_for(m, n, gamma)
    try:
        u, s, vt = np.linalg.svd(weight, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise FactorizationError(name) from err
    if r > s.size:
        u = np.pad(u, ((0, 0), (0, r - s.size)))
        vt = np.pad(vt, ((0, r - s.size), (0, 0)))
        s = np.pad(s, (0, r - s.size))
    w2 = u[:, :r] * s[:r]
    w1 = vt[:r]
    layer = LoRaLinLayer(m, n, gamma, w1, w2, bias)
    logger.debug("Factorized %s %dx%d to rank %d", name, n, m, r)
    return layer


def frobenius_error(weight, layer: Union[DenseLinear, LoRaLinLayer]) -> float:
    """||W - W_layer||_F"""

    diff = np.asarray(weight, dtype=np.float64) - \
        np.asarray(layer.dense_weight(), dtype=np.float64)
    return float(np.linalg.norm(diff))
