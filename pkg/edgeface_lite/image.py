# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

import os
import cv2
import numpy as np
from .errors import ValidationError

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


INPUT_SIDE = 112
_raw_bytes = 3 * INPUT_SIDE * INPUT_SIDE * 4
_header_bytes = 1024


def to_input(rgb: np.ndarray) -> np.ndarray:
    """HxWx3 uint8 RGB to a 3xHxW float32 tensor in [-1, 1]"""

    return (np.transpose(rgb, (2, 0, 1)).astype(np.float32) / 127.5 -
            1.0).astype(np.float32)


def _ppm_maxval(path: str, header: bytes) -> int:
    """maxval token of a P6 header, skipping # comments"""

    tokens = list()
    for line in header.split(b"\n"):
        tokens.extend(line.split(b"#", 1)[0].split())
        if len(tokens) >= 4:
            break
    try:
        return int(tokens[3])
    except (IndexError, ValueError):
        raise ValidationError("Cannot parse PPM header of {}".format(path))


def _read_ppm(path: str, header: bytes) -> np.ndarray:
    if _ppm_maxval(path, header) != 255:
        raise ValidationError("PPM image {} must have maxval 255"
                              .format(path))
    frame = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if frame is None:
        raise ValidationError("Cannot decode PPM image {}".format(path))
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValidationError("PPM image {} must be RGB".format(path))
    if frame.shape[:2] != (INPUT_SIDE, INPUT_SIDE):
        raise ValidationError("Image {} is {}x{}, expected {}x{}".format(
            path, frame.shape[1], frame.shape[0], INPUT_SIDE, INPUT_SIDE))
    return to_input(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))


def _read_raw(path: str, size: int) -> np.ndarray:
    if size != _raw_bytes:
        raise ValidationError("Raw image {} has {} bytes, expected {} "
                              "(3x{}x{} little-endian f32)"
                              .format(path, size, _raw_bytes, INPUT_SIDE,
                                      INPUT_SIDE))
    data = np.fromfile(path, dtype="<f4")
    return data.reshape(3, INPUT_SIDE, INPUT_SIDE).astype(np.float32)


def read_image(path: str) -> np.ndarray:
    """Decode a 112x112 face crop to [3, 112, 112] float32

    Binary PPM (P6, maxval 255) is scaled v / 127.5 - 1; any other file
    must hold exactly 3x112x112 little-endian float32 values, used as is.
    No resizing is done.
    """

    size = os.path.getsize(path)
    with open(path, "rb") as file:
        header = file.read(_header_bytes)
    if header[:2] == b"P6":
        return _read_ppm(path, header)
    return _read_raw(path, size)


def write_raw(path: str, array) -> None:
    """Write an array as little-endian float32 values"""

    np.ascontiguousarray(array, dtype="<f4").tofile(path)
