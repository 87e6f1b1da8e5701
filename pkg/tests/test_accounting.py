# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause


import json
import numpy as np
import pytest
from edgeface_lite import accounting, backbone, tensor
from edgeface_lite.accounting import count, gamma_sweep, measure_macs
from edgeface_lite.backbone import VariantSpec, skeleton
from .reference import MINI

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


_published = {"s": (5.44, 461.7), "xs": (2.24, 196.9), "xxs": (1.24, 94.7)}

_census = {"s": (5431752, 229486224),
           "xs": (2238460, 97545628),
           "xxs": (1241624, 46695866)}

_xs_sweep = [(0.2, 723516, 61.81), (0.4, 1240636, 106.18),
             (0.6, 1766332, 152.18), (0.8, 2283452, 196.55),
             (1.0, 2809148, 242.55)]


@pytest.fixture(scope="module")
def xs_sweep():
    yield gamma_sweep(VariantSpec.from_name("xs"))


@pytest.mark.parametrize("variant", ["s", "xs", "xxs"])
def test_census(variant):
    report = count(skeleton(VariantSpec.from_name(variant)))
    params, macs = _census[variant]
    assert report.total_params == params
    assert report.total_macs == macs
    assert report.mflops == pytest.approx(macs / 1e6)
    assert report.mflops_2x == pytest.approx(2 * macs / 1e6)


@pytest.mark.parametrize("variant", ["s", "xs", "xxs"])
def test_census_near_published(variant):
    # published MFLOPS count a multiply-accumulate as two operations
    report = count(skeleton(VariantSpec.from_name(variant)))
    mparams, mflops = _published[variant]
    assert report.mparams == pytest.approx(mparams, rel=0.01)
    assert report.mflops_2x == pytest.approx(mflops, rel=0.02)
    assert report.mflops == pytest.approx(mflops / 2, rel=0.02)


def test_every_tensor_counted_once():
    model = backbone.build(MINI, 0.5, 0)
    report = count(model)
    assert report.total_params == \
        sum(t.size for t in model.parameters().values())
    names = [row.layer for row in report.rows]
    assert len(names) == len(set(names))


def test_spec_structure_counts_without_weights():
    spec = VariantSpec.from_name("xxs")
    assert count(skeleton(spec, 0.6)) == \
        count(backbone.build(spec, 0.6, 3))


@pytest.mark.parametrize("gamma", [None, 0.3, 1.0])
def test_measured_macs_match(gamma):
    model = skeleton(MINI, gamma)
    assert measure_macs(model) == count(model).total_macs
    assert measure_macs(model, (2, 3, 32, 32)) == \
        count(model, (2, 3, 32, 32)).total_macs


def test_input_shape_check():
    with pytest.raises(ValueError) as excinfo:
        count(skeleton(MINI), (1, 3, 28, 28))
    assert str(excinfo.value) == \
        "Input shape must be Nx3x32x32, got (1, 3, 28, 28)"


def test_sweep_values(xs_sweep):
    reference = xs_sweep[0]
    assert reference.gamma is None
    assert reference.mparams == pytest.approx(2.23846)
    for row, (gamma, params, mflops) in zip(xs_sweep[1:], _xs_sweep):
        assert row.gamma == gamma
        assert row.mparams == pytest.approx(params / 1e6)
        assert row.mflops_2x == pytest.approx(mflops, abs=0.005)
        assert row.mflops == pytest.approx(row.mflops_2x / 2)


def test_sweep_monotone(xs_sweep):
    rows = xs_sweep[1:]
    for a, b in zip(rows, rows[1:]):
        assert a.mparams < b.mparams
        assert a.mflops < b.mflops


def test_sweep_savings(xs_sweep):
    row = xs_sweep[3]
    assert row.gamma == 0.6
    assert row.delta_params_pct == pytest.approx(-21.09, abs=0.01)
    assert row.delta_flops_pct == pytest.approx(-22.00, abs=0.01)


def test_sweep_crossover(xs_sweep):
    reference = xs_sweep[0]
    near_full = xs_sweep[4]
    assert near_full.gamma == 0.8
    assert near_full.mparams == pytest.approx(reference.mparams, rel=0.05)
    assert near_full.mflops == pytest.approx(reference.mflops, rel=0.05)
    assert xs_sweep[5].mparams > reference.mparams
    assert xs_sweep[5].mflops > reference.mflops


def test_small_half_rank():
    rows = gamma_sweep(VariantSpec.from_name("s"), [0.5])
    assert rows[1].mparams == pytest.approx(3.64628)
    assert rows[1].mflops_2x == pytest.approx(303.39, abs=0.005)


def test_attention_linear_in_tokens():
    block = skeleton(MINI).stages[1].blocks[0]
    costs = list()
    for tokens in (9, 49, 196):
        with tensor.count_macs() as counter:
            backbone.xca_attention(np.zeros((tokens, 16)), block)
        costs.append(counter.by_kernel["matmul"])
    assert costs[0] == 2 * 16 * 8 * 9
    assert costs[1] * 9 == costs[0] * 49
    assert costs[2] * 9 == costs[0] * 196


def test_layers_view():
    report = count(skeleton(MINI))
    layers = report.layers
    assert layers.params == report.total_params
    assert layers.macs == report.total_macs
    assert layers.linear.macs + layers.conv.macs + layers.attention.macs == \
        report.total_macs
    assert list(layers.attention) == ["stage1.block0.xca.attention",
                                      "stage2.block1.xca.attention",
                                      "stage3.block1.xca.attention"]


def test_report_formats():
    report = count(skeleton(MINI))
    data = json.loads(report.to_json())
    assert data['total_params'] == report.total_params
    assert data['mflops'] == pytest.approx(report.total_macs / 1e6)
    assert data['mflops_2x'] == pytest.approx(2 * report.total_macs / 1e6)
    assert len(data['rows']) == len(report.rows)
    lines = report.to_csv().splitlines()
    assert lines[0] == "layer,params,macs"
    assert lines[1] == "stem.conv,{},{}".format(report.rows[0].params,
                                                 report.rows[0].macs)
    assert len(lines) == len(report.rows) + 1


def test_sweep_csv(xs_sweep):
    lines = accounting.sweep_to_csv(xs_sweep).splitlines()
    assert lines[0] == \
        "gamma,mparams,mflops,delta_params_pct,delta_flops_pct,mflops_2x"
    assert lines[1] == "default,2.23846,97.545628,0,0,195.091256"
    assert lines[4].startswith("0.6,1.766332,76.090396,")
    assert lines[4].endswith(",152.180792")


def test_plot_sweep(xs_sweep, tmp_path):
    path = tmp_path / "sweep.png"
    fig = accounting.plot_sweep(xs_sweep, str(path), title="X-SMALL")
    assert path.exists()
    assert len(fig.axes) == 2
    with pytest.raises(ValueError) as excinfo:
        accounting.plot_sweep(xs_sweep[:1])
    assert str(excinfo.value) == "Sweep has no gamma rows to plot"


def test_full_rank_factors_cost_more():
    rows = gamma_sweep(MINI, [1.0])
    assert rows[0].delta_params_pct == 0.0
    assert np.sign(rows[1].delta_params_pct) == 1.0
