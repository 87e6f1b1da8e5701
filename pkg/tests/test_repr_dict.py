# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause


import pytest
from edgeface_lite import repr_dict

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"

_conv = {
    'stem.conv': {'kind': 'conv', 'params': 1560, 'macs': 235200},
    'stage1.block0.convs.0': {'kind': 'conv', 'params': 320, 'macs': 5184}
}

_linear = {
    'stage1.block0.xca.qkv': {'kind': 'linear', 'params': 12480,
                              'macs': 2396160},
    'head.fc': {'kind': 'linear', 'params': 98816, 'macs': 98304}
}

_attention = {
    'stage1.block0.xca.attention': {'kind': 'attention', 'params': 0,
                                    'macs': 401408}
}

_norm = {
    'stem.norm': {'kind': 'norm', 'params': 64, 'macs': 0}
}


@pytest.fixture
def reprdictionary():
    test_dict = dict(_conv)
    test_dict.update(_linear)
    test_dict.update(_attention)
    test_dict.update(_norm)
    c_dict = repr_dict.ReprDictCost(test_dict, rootname="layers")
    yield c_dict


def test_conv(reprdictionary):
    assert reprdictionary.conv == _conv


def test_linear(reprdictionary):
    assert reprdictionary.linear == _linear


def test_attention(reprdictionary):
    assert reprdictionary.attention == _attention
    assert reprdictionary.attention.params == 0


def test_totals(reprdictionary):
    assert reprdictionary.params == 1560 + 320 + 12480 + 98816 + 64
    assert reprdictionary.macs == 235200 + 5184 + 2396160 + 98304 + 401408
    assert reprdictionary.linear.macs == 2396160 + 98304


def test_global(reprdictionary):
    c_dict = dict(_norm)
    c_dict.update(_attention)
    c_dict.update(_linear)
    c_dict.update(_conv)
    assert reprdictionary == c_dict


def test_repr_json(reprdictionary):
    data, meta = reprdictionary._repr_json_()
    assert meta == {'expanded': False, 'root': 'layers'}
    assert data['head.fc [linear]'] == _linear['head.fc']
    assert 'stem.norm [norm]' in data


def test_item_view(reprdictionary):
    row = reprdictionary['head.fc']
    assert isinstance(row, repr_dict.ReprDictCost)
    data, meta = row._repr_json_()
    assert data == _linear['head.fc']
    assert meta['root'] == "head.fc [linear]"
