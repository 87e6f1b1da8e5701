# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from dataclasses import dataclass
from typing import Optional, Sequence
import csv
import io
import json
import logging
import numpy as np
import matplotlib.pyplot as plt
from .backbone import VariantSpec, EdgeFaceModel, ConvBlock, STDABlock, \
    skeleton
from .loralin import layer_cost
from .repr_dict import ReprDictCost
from .tensor import ConvParams, count_macs

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

DEFAULT_GAMMAS = (0.2, 0.4, 0.6, 0.8, 1.0)


def _g9(value: float) -> float:
    return float("{:.9g}".format(value))


@dataclass(frozen=True)
class CostRow:
    layer: str
    kind: str
    params: int
    macs: int


@dataclass(frozen=True)
class CostReport:
    """Per-layer parameter and MAC census of one model

    ``mflops`` counts one multiply-accumulate as one operation, the
    multiply-add convention. ``mflops_2x`` counts it as two, the convention
    under which published MFLOPS columns for this family line up.
    """

    rows: tuple

    @property
    def total_params(self) -> int:
        return sum(row.params for row in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(row.macs for row in self.rows)

    @property
    def mparams(self) -> float:
        return self.total_params / 1e6

    @property
    def mmacs(self) -> float:
        return self.total_macs / 1e6

    @property
    def mflops(self) -> float:
        return self.total_macs / 1e6

    @property
    def mflops_2x(self) -> float:
        return 2 * self.total_macs / 1e6

    @property
    def layers(self) -> ReprDictCost:
        """Rows keyed by layer name, renderable in Jupyter"""

        return ReprDictCost({row.layer: {'kind': row.kind,
                                         'params': row.params,
                                         'macs': row.macs}
                             for row in self.rows}, rootname="layers")

    def to_dict(self) -> dict:
        return {
            'rows': [{'layer': row.layer, 'kind': row.kind,
                      'params': row.params, 'macs': row.macs}
                     for row in self.rows],
            'total_params': self.total_params,
            'total_macs': self.total_macs,
            'mparams': _g9(self.mparams),
            'mflops': _g9(self.mflops),
            'mflops_2x': _g9(self.mflops_2x),
            'mmacs': _g9(self.mmacs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(['layer', 'params', 'macs'])
        for row in self.rows:
            writer.writerow([row.layer, row.params, row.macs])
        return buffer.getvalue()


def _conv_row(name: str, conv: ConvParams, n: int, h: int, w: int) -> tuple:
    params = conv.kernel.size + (0 if conv.bias is None else conv.bias.size)
    row = CostRow(name, 'conv', params, n * conv.macs(h, w))
    return row, conv.output_size(h, w)


def _linear_row(name: str, layer, rows: int) -> CostRow:
    cost = layer_cost(layer)
    return CostRow(name, 'linear', cost.params, rows * cost.macs_per_row)


def _norm_row(name: str, channels: int) -> CostRow:
    return CostRow(name, 'norm', 2 * channels, 0)


def _conv_block_rows(prefix: str, block: ConvBlock, n: int, h: int, w: int):
    channels = block.scale.size
    row, _ = _conv_row(prefix + ".dwconv", block.dwconv, n, h, w)
    yield row
    yield _norm_row(prefix + ".norm", channels)
    yield _linear_row(prefix + ".mlp.fc1", block.fc1, n * h * w)
    yield _linear_row(prefix + ".mlp.fc2", block.fc2, n * h * w)
    yield CostRow(prefix + ".gamma", 'scale', channels, 0)


def _stda_block_rows(prefix: str, block: STDABlock, n: int, h: int, w: int):
    channels, tokens = block.channels, n * h * w
    for i, conv in enumerate(block.convs):
        row, _ = _conv_row("{}.convs.{}".format(prefix, i), conv, n, h, w)
        yield row
    yield _norm_row(prefix + ".norm_xca", channels)
    yield CostRow(prefix + ".gamma_xca", 'scale', channels, 0)
    yield _linear_row(prefix + ".xca.qkv", block.qkv, tokens)
    yield CostRow(prefix + ".xca.temperature", 'scale', block.heads, 0)
    # q k^T and attn v, each d_head x d_head x tokens per head
    yield CostRow(prefix + ".xca.attention", 'attention', 0,
                  2 * channels * (channels // block.heads) * tokens)
    yield _linear_row(prefix + ".xca.proj", block.proj, tokens)
    yield _norm_row(prefix + ".norm", channels)
    yield _linear_row(prefix + ".mlp.fc1", block.fc1, tokens)
    yield _linear_row(prefix + ".mlp.fc2", block.fc2, tokens)
    yield CostRow(prefix + ".gamma", 'scale', channels, 0)


def _check_input_shape(model: EdgeFaceModel, input_shape: Sequence) -> tuple:
    side = model.spec.input_side
    shape = tuple(int(d) for d in input_shape)
    if len(shape) != 4 or shape[1:] != (3, side, side) or shape[0] < 1:
        raise ValueError("Input shape must be Nx3x{}x{}, got {}"
                         .format(side, side, tuple(input_shape)))
    return shape


def count(model: EdgeFaceModel, input_shape: Sequence = None) -> CostReport:
    """Analytic census from the layer shapes

    Every stored tensor is counted in exactly one row. Convolutions cost
    OC * OH * OW * in_per_group * kh * kw, linear layers their per-row cost
    times the token count, and channel attention 2 * C * d_head per token;
    normalisation, activations and pooling cost nothing.
    """

    side = model.spec.input_side
    n, _, h, w = _check_input_shape(model, input_shape or (1, 3, side, side))
    rows = list()
    row, (h, w) = _conv_row("stem.conv", model.stem.conv, n, h, w)
    rows.extend([row, _norm_row("stem.norm", model.stem.norm_gain.size)])
    for i, stage in enumerate(model.stages):
        prefix = "stage{}".format(i)
        if stage.downsample is not None:
            rows.append(_norm_row(prefix + ".downsample.norm",
                                  stage.downsample.norm_gain.size))
            row, (h, w) = _conv_row(prefix + ".downsample.conv",
                                    stage.downsample.conv, n, h, w)
            rows.append(row)
        for j, block in enumerate(stage.blocks):
            block_prefix = "{}.block{}".format(prefix, j)
            if isinstance(block, STDABlock):
                rows.extend(_stda_block_rows(block_prefix, block, n, h, w))
            else:
                rows.extend(_conv_block_rows(block_prefix, block, n, h, w))
    rows.append(_norm_row("head.norm", model.head.norm_gain.size))
    rows.append(_linear_row("head.fc", model.head.fc, n))
    return CostReport(tuple(rows))


def measure_macs(model: EdgeFaceModel, input_shape: Sequence = None) -> int:
    """MACs executed by a forward pass of a zero input of that shape"""

    side = model.spec.input_side
    shape = _check_input_shape(model, input_shape or (1, 3, side, side))
    with count_macs() as counter:
        model.forward(np.zeros(shape, dtype=np.float32))
    return counter.total


@dataclass(frozen=True)
class SweepRow:
    """Cost of one rank ratio relative to the full-rank model

    gamma None is the full-rank reference row.
    """

    gamma: Optional[float]
    mparams: float
    mflops: float
    delta_params_pct: float
    delta_flops_pct: float
    mflops_2x: float


def gamma_sweep(spec: VariantSpec, gammas: Sequence = DEFAULT_GAMMAS
                ) -> list:
    """Cost of the full-rank model followed by one row per gamma"""

    reference = count(skeleton(spec))
    rows = [SweepRow(None, reference.mparams, reference.mflops, 0.0, 0.0,
                     reference.mflops_2x)]
    for gamma in gammas:
        report = count(skeleton(spec, gamma))
        rows.append(SweepRow(
            gamma, report.mparams, report.mflops,
            100.0 * (report.total_params - reference.total_params) /
            reference.total_params,
            100.0 * (report.total_macs - reference.total_macs) /
            reference.total_macs,
            report.mflops_2x))
        logger.debug("%s gamma=%s: %.4f MPARAMS %.2f MFLOPS", spec.name,
                     gamma, report.mparams, report.mflops)
    return rows


def sweep_to_csv(rows: Sequence) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(['gamma', 'mparams', 'mflops', 'delta_params_pct',
                     'delta_flops_pct', 'mflops_2x'])
    for row in rows:
        writer.writerow(['default' if row.gamma is None else
                         "{:.9g}".format(row.gamma)] +
                        ["{:.9g}".format(v) for v in
                         (row.mparams, row.mflops, row.delta_params_pct,
                          row.delta_flops_pct, row.mflops_2x)])
    return buffer.getvalue()


def plot_sweep(rows: Sequence, path: str = None, title: str = None):
    """Parameters and FLOPs against gamma, full rank as a dotted line

    Returns the matplotlib Figure; it is saved and closed when a path is
    given.
    """

    reference = [row for row in rows if row.gamma is None]
    sweep = [row for row in rows if row.gamma is not None]
    if not sweep:
        raise ValueError("Sweep has no gamma rows to plot")
    gammas = [row.gamma for row in sweep]
    fig, axs = plt.subplots(1, 2, sharex=True, figsize=(10, 4))
    for ax, key, label in ((axs[0], 'mparams', 'Parameters (M)'),
                           (axs[1], 'mflops', 'Multiply-adds (M)')):
        ax.plot(gammas, [getattr(row, key) for row in sweep], 'b-o',
                label='LoRaLin')
        if reference:
            ax.axhline(getattr(reference[0], key), color='r', linestyle=':',
                       label='full rank')
        ax.set_xlabel('Rank ratio')
        ax.set_ylabel(label)
        ax.grid()
        ax.legend()
    if title:
        fig.suptitle(title)
    if path:
        fig.savefig(path)
        plt.close(fig)
    return fig
