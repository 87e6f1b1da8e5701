# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Optional, Union
import os
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


SQRT_2_OVER_PI = 0.7978845608028654
GELU_COEFF = 0.044715

_axis_names = {'channel': 1, 'last': -1}
_mac_counter = ContextVar("edgeface_mac_counter", default=None)


def deterministic() -> bool:
    """Return True unless EDGEFACE_DETERMINISTIC is set to 0"""

    return os.environ.get("EDGEFACE_DETERMINISTIC", "1").strip() != "0"


def thread_count() -> int:
    """Worker cap from EDGEFACE_THREADS, defaults to the CPU count"""

    value = os.environ.get("EDGEFACE_THREADS")
    if not value:
        return os.cpu_count() or 1
    threads = int(value)
    if threads < 1:
        raise ValueError("EDGEFACE_THREADS must be positive, got {}"
                         .format(value))
    return threads


class MacCounter:
    """Multiply-accumulate tally of the kernels executed in a context

    Attributes
    ----------
    total : int
        MACs summed over every kernel call
    by_kernel : dict
        MACs per kernel name ('conv2d', 'linear', 'matmul')
    """

    def __init__(self):
        self.total = 0
        self.by_kernel = dict()

    def add(self, kernel: str, macs: int) -> None:
        self.total += int(macs)
        self.by_kernel[kernel] = self.by_kernel.get(kernel, 0) + int(macs)

    def __repr__(self):
        return "MacCounter(total={}, by_kernel={})".format(self.total,
                                                          self.by_kernel)


@contextmanager
def count_macs():
    """Count the MACs of every kernel executed inside the with block

    Counting follows the calling context, kernels run on worker threads
    are not seen.
    """

    counter = MacCounter()
    token = _mac_counter.set(counter)
    try:
        yield counter
    finally:
        _mac_counter.reset(token)


def _tally(kernel: str, macs: int) -> None:
    counter = _mac_counter.get()
    if counter is not None:
        counter.add(kernel, macs)


def _as_f32(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32)


def _check_rank(x: np.ndarray, rank: int, op: str) -> None:
    if x.ndim != rank:
        raise ValueError("{} expects a rank-{} tensor, got shape {}"
                         .format(op, rank, x.shape))


@dataclass(frozen=True, eq=False)
class ConvParams:
    """Convolution weights and geometry

    Attributes
    ----------
    kernel : np.ndarray
        [out_channels, in_channels / groups, kh, kw]
    bias : np.ndarray or None
        [out_channels]
    stride : int
    padding : int
        Zero padding applied symmetrically to height and width
    groups : int
    """

    kernel: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        _check_rank(self.kernel, 4, "ConvParams")
        oc = self.kernel.shape[0]
        if self.groups < 1 or oc % self.groups:
            raise ValueError("conv groups {} do not divide {} output channels"
                             .format(self.groups, oc))
        if self.stride < 1 or self.padding < 0:
            raise ValueError("conv stride must be >= 1 and padding >= 0, got"
                             " stride {} padding {}".format(self.stride,
                                                             self.padding))
        if self.bias is not None and self.bias.shape != (oc,):
            raise ValueError("conv bias shape {} does not match {} output "
                             "channels".format(self.bias.shape, oc))

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1] * self.groups

    def output_size(self, height: int, width: int) -> tuple:
        _, _, kh, kw = self.kernel.shape
        oh = (height + 2 * self.padding - kh) // self.stride + 1
        ow = (width + 2 * self.padding - kw) // self.stride + 1
        return oh, ow

    def macs(self, height: int, width: int) -> int:
        """MACs of one image: OC * OH * OW * in_per_group * kh * kw"""

        oc, icg, kh, kw = self.kernel.shape
        oh, ow = self.output_size(height, width)
        return oc * oh * ow * icg * kh * kw


def conv2d(x, params: ConvParams) -> np.ndarray:
    """Grouped 2D convolution (cross-correlation) of an NCHW tensor"""

    x = _as_f32(x)
    _check_rank(x, 4, "conv2d")
    n, c, h, w = x.shape
    oc, icg, kh, kw = params.kernel.shape
    g, pad, s = params.groups, params.padding, params.stride
    if c != g * icg:
        raise ValueError("conv2d channel mismatch: input has {} channels, "
                         "kernel expects {}".format(c, g * icg))
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ValueError("conv2d spatial mismatch: padded input {}x{} is "
                         "smaller than kernel {}x{}"
                         .format(h + 2 * pad, w + 2 * pad, kh, kw))
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    oh, ow = windows.shape[2:4]
    windows = windows.reshape(n, g, icg, oh, ow, kh, kw)
    kernel = _as_f32(params.kernel).reshape(g, oc // g, icg, kh, kw)
    out = np.einsum("ngihwyx,goiyx->ngohw", windows, kernel, optimize=True)
    out = out.reshape(n, oc, oh, ow)
    if params.bias is not None:
        out = out + _as_f32(params.bias)[None, :, None, None]
    _tally("conv2d", n * oc * oh * ow * icg * kh * kw)
    return out.astype(np.float32, copy=False)


def layer_norm(x, axis: Union[int, str] = 'last', eps: float = 1e-6,
               gain=None, offset=None) -> np.ndarray:
    """Normalize to zero mean and unit (biased) variance along one axis

    Parameters
    ----------
    axis : int or str
        'channel' (axis 1 of NCHW), 'last' or an explicit axis index
    gain, offset : np.ndarray
        Optional affine parameters, length of the normalized axis
    """

    if not eps > 0:
        raise ValueError("layer_norm eps must be positive, got {}"
                         .format(eps))
    x = _as_f32(x)
    axis = _axis_names.get(axis, axis)
    if not isinstance(axis, int):
        raise ValueError("Unknown layer_norm axis {}".format(axis))
    length = x.shape[axis]
    if length == 0:
        raise ValueError("layer_norm over a zero-length axis")
    mean = x.mean(axis=axis, keepdims=True)
    var = np.square(x - mean).mean(axis=axis, keepdims=True)
    y = (x - mean) / np.sqrt(var + np.float32(eps))
    shape = [1] * x.ndim
    shape[axis] = length
    for name, param in (('gain', gain), ('offset', offset)):
        if param is None:
            continue
        if np.shape(param) != (length,):
            raise ValueError("layer_norm {} length {} does not match axis "
                             "length {}".format(name, np.shape(param), length))
    if gain is not None:
        y = y * _as_f32(gain).reshape(shape)
    if offset is not None:
        y = y + _as_f32(offset).reshape(shape)
    return y.astype(np.float32, copy=False)


def softmax(x, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax"""

    return special.softmax(_as_f32(x), axis=axis).astype(np.float32,
                                                         copy=False)


def adaptive_avg_pool_1(x) -> np.ndarray:
    """Global average pool NCHW -> NC11"""

    x = _as_f32(x)
    _check_rank(x, 4, "adaptive_avg_pool_1")
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float32)


def matmul(a, b) -> np.ndarray:
    """Matrix product [..., M, K] x [..., K, N]"""

    a, b = _as_f32(a), _as_f32(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects rank >= 2 operands, got {} and {}"
                         .format(a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ValueError("matmul inner dimension mismatch: {} vs {}"
                         .format(a.shape, b.shape))
    out = np.matmul(a, b)
    batch = int(np.prod(out.shape[:-2], dtype=np.int64))
    _tally("matmul", batch * a.shape[-2] * a.shape[-1] * b.shape[-1])
    return out


def linear(x, weight, bias=None) -> np.ndarray:
    """Y = X W^T + b on the last axis of X; weight is [out, in]"""

    x, weight = _as_f32(x), _as_f32(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ValueError("linear expects {} input features, got shape {}"
                         .format(weight.shape[1] if weight.ndim == 2
                                 else weight.shape, x.shape))
    out = x @ weight.T
    if bias is not None:
        out = out + _as_f32(bias)
    rows = int(np.prod(x.shape[:-1], dtype=np.int64))
    _tally("linear", rows * weight.shape[0] * weight.shape[1])
    return out


def gelu(x) -> np.ndarray:
    """GELU, tanh approximation"""

    x = _as_f32(x)
    inner = np.float32(SQRT_2_OVER_PI) * (x + np.float32(GELU_COEFF) * x ** 3)
    return (np.float32(0.5) * x * (np.float32(1.0) + np.tanh(inner))).astype(
        np.float32, copy=False)


def l2_normalize(v, eps: float = 1e-12, axis: int = -1) -> np.ndarray:
    """Scale to unit L2 norm along axis; vectors with norm < eps become 0"""

    if not eps > 0:
        raise ValueError("l2_normalize eps must be positive, got {}"
                         .format(eps))
    v = _as_f32(v)
    norm = np.sqrt(np.sum(np.square(v), axis=axis, keepdims=True))
    safe = np.where(norm < eps, np.float32(1.0), norm)
    return np.where(norm < eps, np.float32(0.0), v / safe).astype(np.float32,
                                                                  copy=False)
