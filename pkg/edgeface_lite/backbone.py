# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Mapping, Optional, Union
import json
import logging
import math
import os
import numpy as np
from graphviz import Digraph
from scipy.stats import truncnorm
from .errors import ValidationError
from .loralin import DenseLinear, LoRaLinLayer, rank_for, from_full, \
    frobenius_error
from .tensor import ConvParams, conv2d, layer_norm, softmax, matmul, \
    adaptive_avg_pool_1, gelu, l2_normalize, deterministic, thread_count

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

EMBEDDING_DIM = 512
INIT_STD = 0.02
_variants_file = os.path.join(os.path.dirname(__file__), "variants.json")
_seed_mask = (1 << 64) - 1

Linear = Union[DenseLinear, LoRaLinLayer]


@dataclass(frozen=True)
class VariantSpec:
    """Architecture hyper-parameters of one backbone size

    Attributes
    ----------
    stage_channels : tuple
        Channel width of each of the four stages
    stage_depths : tuple
        Number of blocks per stage, the STDA blocks included
    stage_kernel_sizes : tuple
        Depthwise kernel of the convolution blocks per stage
    stda_groups : tuple
        Channel split count used by the STDA block of each stage
    stda_blocks : tuple
        Number of trailing STDA blocks per stage
    attn_heads : int
        Channel attention heads, must divide the width of STDA stages
    """

    name: str
    stage_channels: tuple
    stage_depths: tuple
    stage_kernel_sizes: tuple
    stda_groups: tuple
    attn_heads: int
    stda_blocks: tuple = (0, 1, 1, 1)
    mlp_expansion: float = 4.0
    head_dim: int = EMBEDDING_DIM
    input_side: int = 112
    drop_rate: float = 0.0
    stem_patch: int = 4
    stda_kernel_size: int = 3
    layer_scale_init: float = 1e-6
    norm_eps: float = 1e-6
    aliases: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for key in ('stage_channels', 'stage_depths', 'stage_kernel_sizes',
                    'stda_groups', 'stda_blocks', 'aliases'):
            value = tuple(getattr(self, key))
            object.__setattr__(self, key, value)
            if key != 'aliases' and len(value) != 4:
                raise ValueError("{} needs one entry per stage (4), got {}"
                                 .format(key, len(value)))
        self._validate()

    def _validate(self):
        if self.head_dim != EMBEDDING_DIM:
            raise ValueError("Embedding length must be {}, got {}"
                             .format(EMBEDDING_DIM, self.head_dim))
        kernels = self.stage_kernel_sizes
        if any(k < 1 or k % 2 == 0 for k in kernels):
            raise ValueError("Stage kernel sizes must be odd, got {}"
                             .format(kernels))
        if any(a > b for a, b in zip(kernels, kernels[1:])):
            raise ValueError("Stage kernel sizes must be non-decreasing, got "
                             "{}".format(kernels))
        side = self.input_side // self.stem_patch
        if self.input_side % self.stem_patch or side >> 3 < 1:
            raise ValueError("Input side {} is too small for four stages"
                             .format(self.input_side))
        for i, (ch, depth, nstda) in enumerate(zip(self.stage_channels,
                                                   self.stage_depths,
                                                   self.stda_blocks)):
            if ch < 1 or depth < 1 or not 0 <= nstda <= depth:
                raise ValueError("Stage {} has invalid width {}, depth {} or "
                                 "STDA count {}".format(i, ch, depth, nstda))
            if nstda and ch % self.attn_heads:
                raise ValueError("{} attention heads do not divide stage {} "
                                 "width {}".format(self.attn_heads, i, ch))
            if nstda and min(split_widths(ch, self.stda_groups[i])) < 1:
                raise ValueError("Stage {} width {} cannot be split in {} "
                                 "groups".format(i, ch, self.stda_groups[i]))

    @classmethod
    def from_name(cls, name: str, path: str = None) -> "VariantSpec":
        """Look a variant up by name or alias (s, xs, xxs)"""

        variants = load_variants(path)
        key = name.strip().lower()
        for spec in variants.values():
            if key == spec.name.lower() or key in spec.aliases:
                return spec
        raise ValueError("Unknown variant {}, choose from {}"
                         .format(name, list(variants.keys())))

    def hidden_features(self, channels: int) -> int:
        return int(self.mlp_expansion * channels)

    def to_dict(self) -> dict:
        spec = asdict(self)
        spec.pop('aliases')
        return spec


def load_variants(path: str = None) -> dict:
    """Read the shipped variant table, keyed by variant name"""

    with open(path or _variants_file, "r") as file:
        table = json.load(file)
    return {name: VariantSpec(name=name, **entry)
            for name, entry in table.items()}


def split_widths(channels: int, groups: int) -> tuple:
    """Channel widths of an STDA split: ceil(C / s) each, remainder last"""

    if groups < 1:
        raise ValueError("STDA split count must be positive, got {}"
                         .format(groups))
    width = math.ceil(channels / groups)
    return (width,) * (groups - 1) + (channels - width * (groups - 1),)


def _record(trace: Optional[list], name: str, x: np.ndarray) -> None:
    if trace is not None:
        trace.append((name, tuple(x.shape[1:])))


def _mlp(t: np.ndarray, fc1: Linear, fc2: Linear) -> np.ndarray:
    shape = t.shape
    rows = t.reshape(-1, shape[-1])
    return fc2.forward(gelu(fc1.forward(rows))).reshape(shape[:-1] + (-1,))


def _norm_parameters(prefix: str, gain, offset):
    yield prefix + ".weight", gain
    yield prefix + ".bias", offset


def _conv_parameters(prefix: str, conv: ConvParams):
    yield prefix + ".weight", conv.kernel
    if conv.bias is not None:
        yield prefix + ".bias", conv.bias


@dataclass(frozen=True, eq=False)
class Stem:
    """Patchify convolution followed by channel layer norm"""

    conv: ConvParams
    norm_gain: np.ndarray
    norm_offset: np.ndarray
    eps: float

    def named_parameters(self, prefix: str):
        yield from _conv_parameters(prefix + ".conv", self.conv)
        yield from _norm_parameters(prefix + ".norm", self.norm_gain,
                                    self.norm_offset)


@dataclass(frozen=True, eq=False)
class Downsample:
    """Channel layer norm followed by a 2x2 stride-2 convolution"""

    norm_gain: np.ndarray
    norm_offset: np.ndarray
    conv: ConvParams
    eps: float

    def forward(self, x: np.ndarray) -> np.ndarray:
        return conv2d(layer_norm(x, 'channel', self.eps, self.norm_gain,
                                 self.norm_offset), self.conv)

    def named_parameters(self, prefix: str):
        yield from _norm_parameters(prefix + ".norm", self.norm_gain,
                                    self.norm_offset)
        yield from _conv_parameters(prefix + ".conv", self.conv)


@dataclass(frozen=True, eq=False)
class ConvBlock:
    """Depthwise convolution, layer norm and a residual MLP"""

    dwconv: ConvParams
    norm_gain: np.ndarray
    norm_offset: np.ndarray
    fc1: Linear
    fc2: Linear
    scale: np.ndarray
    eps: float

    def forward(self, x: np.ndarray) -> np.ndarray:
        t = conv2d(x, self.dwconv).transpose(0, 2, 3, 1)
        t = layer_norm(t, 'last', self.eps, self.norm_gain, self.norm_offset)
        t = _mlp(t, self.fc1, self.fc2) * self.scale
        return x + t.transpose(0, 3, 1, 2)

    def linear_layers(self, prefix: str):
        yield prefix + ".mlp.fc1", self.fc1
        yield prefix + ".mlp.fc2", self.fc2

    def named_parameters(self, prefix: str):
        yield from _conv_parameters(prefix + ".dwconv", self.dwconv)
        yield from _norm_parameters(prefix + ".norm", self.norm_gain,
                                    self.norm_offset)
        yield from self.fc1.named_parameters(prefix + ".mlp.fc1")
        yield from self.fc2.named_parameters(prefix + ".mlp.fc2")
        yield prefix + ".gamma", self.scale


@dataclass(frozen=True, eq=False)
class STDABlock:
    """Split transpose depthwise attention block

    The input channels are split in ``len(widths)`` groups. The first groups
    run through cascaded 3x3 depthwise convolutions (each output added to
    the next group), the remaining group passes through. The recombined
    tensor is flattened to tokens and refined by channel attention and an
    MLP, each with a residual connection.
    """

    convs: tuple
    widths: tuple
    xca_norm_gain: np.ndarray
    xca_norm_offset: np.ndarray
    qkv: Linear
    temperature: np.ndarray
    proj: Linear
    xca_scale: np.ndarray
    norm_gain: np.ndarray
    norm_offset: np.ndarray
    fc1: Linear
    fc2: Linear
    scale: np.ndarray
    heads: int
    eps: float

    @property
    def channels(self) -> int:
        return sum(self.widths)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return stda_forward(x, self)

    def linear_layers(self, prefix: str):
        yield prefix + ".xca.qkv", self.qkv
        yield prefix + ".xca.proj", self.proj
        yield prefix + ".mlp.fc1", self.fc1
        yield prefix + ".mlp.fc2", self.fc2

    def named_parameters(self, prefix: str):
        for i, conv in enumerate(self.convs):
            yield from _conv_parameters("{}.convs.{}".format(prefix, i), conv)
        yield from _norm_parameters(prefix + ".norm_xca", self.xca_norm_gain,
                                    self.xca_norm_offset)
        yield prefix + ".gamma_xca", self.xca_scale
        yield from self.qkv.named_parameters(prefix + ".xca.qkv")
        yield prefix + ".xca.temperature", self.temperature
        yield from self.proj.named_parameters(prefix + ".xca.proj")
        yield from _norm_parameters(prefix + ".norm", self.norm_gain,
                                    self.norm_offset)
        yield from self.fc1.named_parameters(prefix + ".mlp.fc1")
        yield from self.fc2.named_parameters(prefix + ".mlp.fc2")
        yield prefix + ".gamma", self.scale


@dataclass(frozen=True, eq=False)
class Stage:
    downsample: Optional[Downsample]
    blocks: tuple

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.downsample is not None:
            x = self.downsample.forward(x)
        for block in self.blocks:
            x = block.forward(x)
        return x


@dataclass(frozen=True, eq=False)
class Head:
    """Global pool, layer norm, flatten, dropout and the embedding layer"""

    norm_gain: np.ndarray
    norm_offset: np.ndarray
    fc: Linear
    drop_rate: float
    eps: float

    def named_parameters(self, prefix: str):
        yield from _norm_parameters(prefix + ".norm", self.norm_gain,
                                    self.norm_offset)
        yield from self.fc.named_parameters(prefix + ".fc")


def _xca(x, block: STDABlock) -> tuple:
    x = np.asarray(x, dtype=np.float32)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != block.channels:
        raise ValueError("xca_attention expects [tokens, {}], got shape {}"
                         .format(block.channels, x.shape))
    n, tokens, c = x.shape
    if block.heads < 1 or c % block.heads:
        raise ValidationError("{} attention heads do not divide {} channels"
                              .format(block.heads, c))
    dh = c // block.heads
    qkv = block.qkv.forward(x.reshape(n * tokens, c))
    q, k, v = qkv.reshape(n, tokens, 3, block.heads, dh).transpose(2, 0, 3,
                                                                    4, 1)
    q = l2_normalize(q, axis=-1)
    k = l2_normalize(k, axis=-1)
    attn = matmul(q, k.swapaxes(-1, -2)) * \
        block.temperature[None, :, None, None]
    attn = softmax(attn, axis=-1)
    out = matmul(attn, v).transpose(0, 3, 1, 2).reshape(n * tokens, c)
    out = block.proj.forward(out).reshape(n, tokens, c)
    if single:
        return out[0], attn[0]
    return out, attn


def xca_attention(x, block: STDABlock) -> np.ndarray:
    """Cross-covariance attention over channels of [tokens, C]

    Queries and keys are L2-normalized along the token axis, so the
    per-head attention map is d_head x d_head and the cost grows linearly
    with the token count.
    """

    return _xca(x, block)[0]


def attention_map(x, block: STDABlock) -> np.ndarray:
    """Softmax channel attention map [heads, d_head, d_head] of [tokens, C]"""

    return _xca(x, block)[1]


def stda_forward(x, block: STDABlock) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    n, c, h, w = x.shape
    if c != block.channels:
        raise ValueError("STDA block expects {} channels, got {}"
                         .format(block.channels, c))
    parts = np.split(x, np.cumsum(block.widths)[:-1], axis=1)
    outs = list()
    for i, conv in enumerate(block.convs):
        sp = parts[i] if i == 0 else sp + parts[i]
        sp = conv2d(sp, conv)
        outs.append(sp)
    outs.extend(parts[len(block.convs):])
    t = np.concatenate(outs, axis=1).reshape(n, c, h * w).transpose(0, 2, 1)
    t = t + block.xca_scale * xca_attention(
        layer_norm(t, 'last', block.eps, block.xca_norm_gain,
                   block.xca_norm_offset), block)
    t = t + block.scale * _mlp(
        layer_norm(t, 'last', block.eps, block.norm_gain, block.norm_offset),
        block.fc1, block.fc2)
    return np.ascontiguousarray(t.transpose(0, 2, 1)).reshape(n, c, h, w)


class _Initializer:
    """Seeded parameter source: truncated normal weights, constant rest"""

    def __init__(self, spec: VariantSpec, seed: int):
        self._rng = np.random.default_rng(int(seed) & _seed_mask)
        self._fill = {'bias': 0.0, 'offset': 0.0, 'gain': 1.0,
                      'temperature': 1.0, 'scale': spec.layer_scale_init}

    def __call__(self, name: str, shape: tuple, kind: str) -> np.ndarray:
        if kind == 'weight':
            return truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=shape,
                                 random_state=self._rng).astype(np.float32)
        return np.full(shape, self._fill[kind], dtype=np.float32)


class _Skeleton:
    """Zero-filled parameters, for shape and cost inspection"""

    def __call__(self, name: str, shape: tuple, kind: str) -> np.ndarray:
        return np.zeros(shape, dtype=np.float32)


class _Loader:
    """Parameter source backed by named tensors"""

    def __init__(self, tensors: Mapping):
        self._tensors = tensors
        self._used = set()

    def __call__(self, name: str, shape: tuple, kind: str) -> np.ndarray:
        if name not in self._tensors:
            raise ValueError("Missing tensor {}".format(name))
        tensor = np.asarray(self._tensors[name], dtype=np.float32)
        if tensor.shape != tuple(shape):
            raise ValueError("Tensor {} has shape {}, expected {}"
                             .format(name, tensor.shape, tuple(shape)))
        self._used.add(name)
        return tensor

    def check_consumed(self) -> None:
        extra = sorted(set(self._tensors) - self._used)
        if extra:
            raise ValueError("Unexpected tensors {}".format(extra))


def _conv(fetch, prefix, in_ch, out_ch, kernel, stride=1, padding=0,
          groups=1) -> ConvParams:
    weight = fetch(prefix + ".weight",
                   (out_ch, in_ch // groups, kernel, kernel), 'weight')
    bias = fetch(prefix + ".bias", (out_ch,), 'bias')
    return ConvParams(weight, bias, stride, padding, groups)


def _norm(fetch, prefix, channels) -> tuple:
    return (fetch(prefix + ".weight", (channels,), 'gain'),
            fetch(prefix + ".bias", (channels,), 'offset'))


def _linear(fetch, prefix, in_features, out_features, gamma) -> Linear:
    if gamma is None:
        return DenseLinear(
            fetch(prefix + ".weight", (out_features, in_features), 'weight'),
            fetch(prefix + ".bias", (out_features,), 'bias'))
    r = rank_for(in_features, out_features, gamma)
    return LoRaLinLayer(
        in_features, out_features, gamma,
        fetch(prefix + ".lin1.weight", (r, in_features), 'weight'),
        fetch(prefix + ".lin2.weight", (out_features, r), 'weight'),
        fetch(prefix + ".lin2.bias", (out_features,), 'bias'))


def _conv_block(fetch, prefix, spec, channels, kernel, gamma) -> ConvBlock:
    hidden = spec.hidden_features(channels)
    dwconv = _conv(fetch, prefix + ".dwconv", channels, channels, kernel,
                   padding=kernel // 2, groups=channels)
    gain, offset = _norm(fetch, prefix + ".norm", channels)
    fc1 = _linear(fetch, prefix + ".mlp.fc1", channels, hidden, gamma)
    fc2 = _linear(fetch, prefix + ".mlp.fc2", hidden, channels, gamma)
    scale = fetch(prefix + ".gamma", (channels,), 'scale')
    return ConvBlock(dwconv, gain, offset, fc1, fc2, scale, spec.norm_eps)


def _stda_block(fetch, prefix, spec, channels, groups, gamma) -> STDABlock:
    widths = split_widths(channels, groups)
    k = spec.stda_kernel_size
    convs = tuple(_conv(fetch, "{}.convs.{}".format(prefix, i), widths[i],
                        widths[i], k, padding=k // 2, groups=widths[i])
                  for i in range(max(1, groups - 1)))
    xca_gain, xca_offset = _norm(fetch, prefix + ".norm_xca", channels)
    xca_scale = fetch(prefix + ".gamma_xca", (channels,), 'scale')
    qkv = _linear(fetch, prefix + ".xca.qkv", channels, 3 * channels, gamma)
    temperature = fetch(prefix + ".xca.temperature", (spec.attn_heads,),
                        'temperature')
    proj = _linear(fetch, prefix + ".xca.proj", channels, channels, gamma)
    gain, offset = _norm(fetch, prefix + ".norm", channels)
    hidden = spec.hidden_features(channels)
    fc1 = _linear(fetch, prefix + ".mlp.fc1", channels, hidden, gamma)
    fc2 = _linear(fetch, prefix + ".mlp.fc2", hidden, channels, gamma)
    scale = fetch(prefix + ".gamma", (channels,), 'scale')
    return STDABlock(convs, widths, xca_gain, xca_offset, qkv, temperature,
                     proj, xca_scale, gain, offset, fc1, fc2, scale,
                     spec.attn_heads, spec.norm_eps)


def _assemble(spec: VariantSpec, gamma: Optional[float], seed: int,
              fetch) -> "EdgeFaceModel":
    c0 = spec.stage_channels[0]
    patch = spec.stem_patch
    stem_conv = _conv(fetch, "stem.conv", 3, c0, patch, stride=patch)
    stem_gain, stem_offset = _norm(fetch, "stem.norm", c0)
    stem = Stem(stem_conv, stem_gain, stem_offset, spec.norm_eps)
    stages = list()
    in_ch = c0
    for i, channels in enumerate(spec.stage_channels):
        prefix = "stage{}".format(i)
        downsample = None
        if i > 0:
            gain, offset = _norm(fetch, prefix + ".downsample.norm", in_ch)
            conv = _conv(fetch, prefix + ".downsample.conv", in_ch, channels,
                         2, stride=2)
            downsample = Downsample(gain, offset, conv, spec.norm_eps)
        depth, nstda = spec.stage_depths[i], spec.stda_blocks[i]
        blocks = list()
        for j in range(depth):
            block_prefix = "{}.block{}".format(prefix, j)
            if j < depth - nstda:
                blocks.append(_conv_block(fetch, block_prefix, spec, channels,
                                          spec.stage_kernel_sizes[i], gamma))
            else:
                blocks.append(_stda_block(fetch, block_prefix, spec, channels,
                                          spec.stda_groups[i], gamma))
        stages.append(Stage(downsample, tuple(blocks)))
        in_ch = channels
    gain, offset = _norm(fetch, "head.norm", in_ch)
    fc = _linear(fetch, "head.fc", in_ch, spec.head_dim, gamma)
    head = Head(gain, offset, fc, spec.drop_rate, spec.norm_eps)
    return EdgeFaceModel(spec, gamma, seed, stem, tuple(stages), head)


def _check_gamma(gamma: Optional[float]) -> None:
    if gamma is not None and not 0.0 < gamma <= 1.0:
        raise ValueError("Rank ratio gamma must be in (0, 1], got {}"
                         .format(gamma))


def build(spec: VariantSpec, gamma: Optional[float] = None,
          seed: int = 0) -> "EdgeFaceModel":
    """Build a seeded model, gamma None keeps every linear layer full rank"""

    _check_gamma(gamma)
    model = _assemble(spec, gamma, seed, _Initializer(spec, seed))
    logger.debug("Built %s gamma=%s seed=%d", spec.name, gamma, seed)
    return model


def skeleton(spec: VariantSpec, gamma: Optional[float] = None
             ) -> "EdgeFaceModel":
    """Zero-weight model with the full structure, for accounting"""

    _check_gamma(gamma)
    return _assemble(spec, gamma, 0, _Skeleton())


def from_parameters(spec: VariantSpec, gamma: Optional[float], seed: int,
                    tensors: Mapping) -> "EdgeFaceModel":
    """Assemble a model from named tensors, every tensor must be used"""

    _check_gamma(gamma)
    loader = _Loader(tensors)
    model = _assemble(spec, gamma, seed, loader)
    loader.check_consumed()
    return model


class EdgeFaceModel:
    """Face embedding backbone

    Parameters are immutable after construction; the model is safe to
    share between threads.

    Attributes
    ----------
    spec : VariantSpec
    gamma : float or None
        Rank ratio of every linear layer, None for full rank
    seed : int
        Seed the parameters were initialised with
    """

    def __init__(self, spec: VariantSpec, gamma: Optional[float], seed: int,
                 stem: Stem, stages: tuple, head: Head):
        self.spec = spec
        self.gamma = gamma
        self.seed = seed
        self.stem = stem
        self.stages = stages
        self.head = head

    def __repr__(self):
        return "EdgeFaceModel({}, gamma={}, seed={})".format(
            self.spec.name, self.gamma, self.seed)

    def _check_images(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        side = self.spec.input_side
        if images.ndim != 4 or images.shape[1:] != (3, side, side):
            raise ValueError("Input must be Nx3x{}x{}, got shape {}"
                             .format(side, side, images.shape))
        if images.shape[0] == 0:
            raise ValueError("Input batch is empty")
        return images

    def _head(self, x: np.ndarray, trace=None) -> np.ndarray:
        x = adaptive_avg_pool_1(x)
        _record(trace, "head.pool", x)
        x = layer_norm(x, 'channel', self.head.eps, self.head.norm_gain,
                       self.head.norm_offset)
        _record(trace, "head.norm", x)
        x = x.reshape(x.shape[0], -1)
        _record(trace, "head.flatten", x)
        # dropout is inactive at inference
        _record(trace, "head.dropout", x)
        x = self.head.fc.forward(x)
        _record(trace, "head.fc", x)
        return x

    def forward(self, images: np.ndarray, trace: list = None) -> np.ndarray:
        """Run validated images through every layer in one pass"""

        x = conv2d(images, self.stem.conv)
        _record(trace, "stem.conv", x)
        x = layer_norm(x, 'channel', self.stem.eps, self.stem.norm_gain,
                       self.stem.norm_offset)
        _record(trace, "stem.norm", x)
        for i, stage in enumerate(self.stages):
            x = stage.forward(x)
            _record(trace, "stage{}".format(i), x)
        return self._head(x, trace)

    def embed(self, images) -> np.ndarray:
        """Embed a batch [N, 3, side, side] to [N, 512]

        Images are processed one at a time so a row never depends on the
        rest of the batch; with EDGEFACE_DETERMINISTIC=0 they are spread
        over EDGEFACE_THREADS workers.
        """

        images = self._check_images(images)

        def one(image):
            return self.forward(image[None])[0]

        if deterministic() or len(images) == 1:
            rows = [one(image) for image in images]
        else:
            with ThreadPoolExecutor(max_workers=thread_count()) as pool:
                rows = list(pool.map(one, images))
        return np.stack(rows).astype(np.float32, copy=False)

    def shape_trace(self, images) -> list:
        """Per-layer output shapes (batch axis dropped)"""

        trace = list()
        self.forward(self._check_images(images), trace)
        return trace

    def named_parameters(self):
        yield from self.stem.named_parameters("stem")
        for i, stage in enumerate(self.stages):
            prefix = "stage{}".format(i)
            if stage.downsample is not None:
                yield from stage.downsample.named_parameters(
                    prefix + ".downsample")
            for j, block in enumerate(stage.blocks):
                yield from block.named_parameters(
                    "{}.block{}".format(prefix, j))
        yield from self.head.named_parameters("head")

    def parameters(self) -> OrderedDict:
        """Every stored tensor by dotted name, in layer order"""

        return OrderedDict(self.named_parameters())

    def linear_layers(self):
        """(name, layer) of every linear layer in layer order"""

        for i, stage in enumerate(self.stages):
            for j, block in enumerate(stage.blocks):
                yield from block.linear_layers("stage{}.block{}".format(i, j))
        yield "head.fc", self.head.fc

    def factorize(self, gamma: float) -> tuple:
        """Replace every linear layer by its truncated SVD at ratio gamma

        Returns
        -------
        tuple
            (new model, OrderedDict layer name -> Frobenius error)
        """

        _check_gamma(gamma)
        tensors = self.parameters()
        errors = OrderedDict()
        for name, layer in self.linear_layers():
            weight = layer.dense_weight()
            lowrank = from_full(weight, layer.bias, gamma, name)
            errors[name] = frobenius_error(weight, lowrank)
            for key, _ in layer.named_parameters(name):
                del tensors[key]
            tensors.update(lowrank.named_parameters(name))
            logger.info("%s: rank %d, error %.6g", name, lowrank.rank,
                        errors[name])
        model = from_parameters(self.spec, gamma, self.seed, tensors)
        return model, errors

    @property
    def graph(self) -> Digraph:
        """Graphviz Digraph of the layer pipeline"""

        graph = Digraph(
            node_attr={'shape': 'box'},
            edge_attr={'color': 'green'},
            graph_attr={'rankdir': 'LR'}
            )
        side = self.spec.input_side // self.spec.stem_patch
        graph.node("input", "input\n3x{0}x{0}".format(self.spec.input_side))
        graph.node("stem", "stem\n{}x{}x{}".format(
            self.spec.stage_channels[0], side, side))
        graph.edge("input", "stem")
        previous = "stem"
        for i, channels in enumerate(self.spec.stage_channels):
            if i > 0:
                side //= 2
            key = "stage{}".format(i)
            graph.node(key, "{}\n{} blocks, k={}\n{}x{}x{}".format(
                key, self.spec.stage_depths[i],
                self.spec.stage_kernel_sizes[i], channels, side, side))
            if self.gamma is not None:
                graph.node(key, _attributes={"color": "blue",
                                             "fillcolor": "cyan",
                                             "style": "filled"})
            graph.edge(previous, key)
            previous = key
        graph.node("head", "head\n{}".format(self.spec.head_dim))
        graph.edge(previous, "head", label="pool")
        return graph


def embed(model: EdgeFaceModel, images) -> np.ndarray:
    return model.embed(images)
