# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause


import cv2
import numpy as np
import pytest
from edgeface_lite import image
from edgeface_lite.errors import ValidationError

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


@pytest.fixture
def rgb():
    yield np.random.default_rng(6).integers(0, 256, size=(112, 112, 3),
                                            dtype=np.uint8)


def test_value_mapping():
    pixels = np.array([[[0, 255, 51]]], dtype=np.uint8)
    out = image.to_input(pixels)
    assert out.shape == (3, 1, 1)
    assert out.dtype == np.float32
    assert np.allclose(out[:, 0, 0], [-1.0, 1.0, -0.6], atol=1e-6)


def test_read_ppm(rgb, tmp_path):
    path = str(tmp_path / "face.ppm")
    assert cv2.imwrite(path, cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))
    with open(path, "rb") as file:
        assert file.read(2) == b"P6"
    out = image.read_image(path)
    assert out.shape == (3, 112, 112)
    assert np.array_equal(out, image.to_input(rgb))


def test_ppm_size_checked(tmp_path):
    path = str(tmp_path / "small.ppm")
    cv2.imwrite(path, np.zeros((100, 90, 3), dtype=np.uint8))
    with pytest.raises(ValidationError) as excinfo:
        image.read_image(path)
    assert str(excinfo.value) == \
        "Image {} is 90x100, expected 112x112".format(path)


def test_ppm_depth_checked(tmp_path):
    path = str(tmp_path / "deep.ppm")
    cv2.imwrite(path, np.zeros((112, 112, 3), dtype=np.uint16))
    with pytest.raises(ValidationError) as excinfo:
        image.read_image(path)
    assert str(excinfo.value) == \
        "PPM image {} must have maxval 255".format(path)


def test_ppm_maxval_checked(tmp_path):
    path = tmp_path / "dim.ppm"
    path.write_bytes(b"P6\n112 112\n100\n" + bytes([100]) * 112 * 112 * 3)
    with pytest.raises(ValidationError) as excinfo:
        image.read_image(str(path))
    assert str(excinfo.value) == \
        "PPM image {} must have maxval 255".format(path)
    assert excinfo.value.exit_code == 2


def test_ppm_header_comments(rgb, tmp_path):
    path = tmp_path / "commented.ppm"
    path.write_bytes(b"P6\n# hand written\n112 112\n255\n" + rgb.tobytes())
    assert np.array_equal(image.read_image(str(path)), image.to_input(rgb))


def test_ppm_header_unparsable(tmp_path):
    path = tmp_path / "broken.ppm"
    path.write_bytes(b"P6\n112 112\n")
    with pytest.raises(ValidationError) as excinfo:
        image.read_image(str(path))
    assert str(excinfo.value) == \
        "Cannot parse PPM header of {}".format(path)


def test_read_raw(tmp_path):
    values = np.random.default_rng(1).uniform(-1, 1, size=(3, 112, 112))
    path = str(tmp_path / "face.f32")
    image.write_raw(path, values)
    out = image.read_image(path)
    assert out.dtype == np.float32
    assert np.array_equal(out, values.astype(np.float32))


def test_raw_size_checked(tmp_path):
    path = str(tmp_path / "short.f32")
    image.write_raw(path, np.zeros(10))
    with pytest.raises(ValidationError) as excinfo:
        image.read_image(path)
    assert str(excinfo.value) == "Raw image {} has 40 bytes, expected " \
        "150528 (3x112x112 little-endian f32)".format(path)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        image.read_image(str(tmp_path / "absent.ppm"))
