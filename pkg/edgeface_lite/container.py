# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from collections import OrderedDict
import json
import logging
import struct
import zlib
import numpy as np
from .backbone import EdgeFaceModel, VariantSpec, from_parameters
from .errors import BadMagicError, UnsupportedVersionError, TruncatedError, \
    ManifestMismatchError, ChecksumMismatchError

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

MAGIC = b"EDGF"
VERSION = 1
ALIGNMENT = 64
_preamble = struct.Struct("<4sIQ")
_dtype = "<f4"


def _align(offset: int) -> int:
    return -(-offset // ALIGNMENT) * ALIGNMENT


def _manifest(model: EdgeFaceModel, tensors: OrderedDict) -> tuple:
    entries = list()
    chunks = list()
    offset = 0
    for name, tensor in tensors.items():
        data = np.ascontiguousarray(tensor, dtype=_dtype).tobytes()
        offset = _align(offset)
        entries.append(OrderedDict([
            ('name', name),
            ('shape', list(tensor.shape)),
            ('dtype', 'f32'),
            ('offset', offset),
            ('byte_len', len(data)),
            ('crc32', zlib.crc32(data)),
        ]))
        chunks.append((offset, data))
        offset += len(data)
    manifest = OrderedDict([
        ('model', OrderedDict([('variant', model.spec.name),
                               ('gamma', model.gamma),
                               ('seed', model.seed)])),
        ('spec', model.spec.to_dict()),
        ('tensors', entries),
    ])
    return manifest, chunks, offset


def save(model: EdgeFaceModel) -> bytes:
    """Serialize a model to the EDGF container

    Layout: magic, u32 version, u64 header length (little endian), UTF-8
    JSON manifest, zero padding to a 64-byte boundary, then the payload.
    Tensor offsets are relative to the payload and 64-byte aligned.
    """

    manifest, chunks, size = _manifest(model, model.parameters())
    header = json.dumps(manifest, separators=(',', ':')).encode("utf-8")
    start = _align(_preamble.size + len(header))
    blob = bytearray(start + size)
    _preamble.pack_into(blob, 0, MAGIC, VERSION, len(header))
    blob[_preamble.size:_preamble.size + len(header)] = header
    for offset, data in chunks:
        blob[start + offset:start + offset + len(data)] = data
    logger.debug("Saved %d tensors, %d bytes", len(chunks), len(blob))
    return bytes(blob)


def _read_header(blob: bytes) -> tuple:
    if len(blob) < _preamble.size:
        if not MAGIC.startswith(bytes(blob[:len(MAGIC)])):
            raise BadMagicError("Not an EDGF container")
        raise TruncatedError("Container is {} bytes, shorter than its "
                             "preamble".format(len(blob)))
    magic, version, header_len = _preamble.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError("Not an EDGF container, magic is {!r}"
                            .format(magic))
    if version != VERSION:
        raise UnsupportedVersionError("Container version {} is not supported"
                                      .format(version))
    end = _preamble.size + header_len
    if len(blob) < end:
        raise TruncatedError("Container header needs {} bytes, got {}"
                             .format(end, len(blob)))
    try:
        manifest = json.loads(bytes(blob[_preamble.size:end]).decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as err:
        raise ManifestMismatchError("Container manifest is not valid JSON: "
                                    "{}".format(err)) from err
    return manifest, _align(end)


def _read_tensors(blob: bytes, manifest: dict, start: int) -> OrderedDict:
    tensors = OrderedDict()
    previous_end = 0
    for entry in manifest['tensors']:
        name, shape = entry['name'], tuple(entry['shape'])
        if entry['dtype'] != 'f32':
            raise ManifestMismatchError("Tensor {} has unsupported dtype {}"
                                        .format(name, entry['dtype']))
        if entry['offset'] % ALIGNMENT:
            raise ManifestMismatchError("Tensor {} offset {} is not {}-byte "
                                        "aligned".format(name, entry['offset'],
                                                         ALIGNMENT))
        if entry['byte_len'] != 4 * int(np.prod(shape, dtype=np.int64)):
            raise ManifestMismatchError("Tensor {} byte length {} does not "
                                        "match shape {}"
                                        .format(name, entry['byte_len'],
                                                list(shape)))
        if entry['offset'] < previous_end:
            raise ManifestMismatchError("Tensor {} at offset {} overlaps the "
                                        "previous tensor ending at {}"
                                        .format(name, entry['offset'],
                                                previous_end))
        previous_end = entry['offset'] + entry['byte_len']
        begin = start + entry['offset']
        end = begin + entry['byte_len']
        if end > len(blob):
            raise TruncatedError("Tensor {} ends at byte {}, container has "
                                 "{}".format(name, end, len(blob)))
        data = bytes(blob[begin:end])
        if zlib.crc32(data) != entry['crc32']:
            raise ChecksumMismatchError("Tensor {} fails its CRC32 check"
                                        .format(name))
        tensors[name] = np.frombuffer(data, dtype=_dtype).reshape(shape)
    return tensors


def load(blob: bytes) -> EdgeFaceModel:
    """Validate and decode a container; nothing is computed on bad input"""

    manifest, start = _read_header(blob)
    try:
        meta = manifest['model']
        spec = VariantSpec(**manifest['spec'])
        if spec.name != meta['variant']:
            raise ValueError("spec {} does not match variant {}"
                             .format(spec.name, meta['variant']))
        gamma, seed = meta['gamma'], int(meta['seed'])
    except (KeyError, TypeError, ValueError) as err:
        raise ManifestMismatchError("Invalid container manifest: {}"
                                    .format(err)) from err
    try:
        tensors = _read_tensors(blob, manifest, start)
    except (KeyError, TypeError) as err:
        raise ManifestMismatchError("Invalid tensor entry: {}"
                                    .format(err)) from err
    try:
        model = from_parameters(spec, gamma, seed, tensors)
    except ValueError as err:
        raise ManifestMismatchError(str(err)) from err
    logger.debug("Loaded %s gamma=%s seed=%d", spec.name, gamma, seed)
    return model


def save_file(model: EdgeFaceModel, path: str) -> None:
    with open(path, "wb") as file:
        file.write(save(model))


def load_file(path: str) -> EdgeFaceModel:
    with open(path, "rb") as file:
        return load(file.read())
