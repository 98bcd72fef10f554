"""Binary parameter container.

Layout: ``b"RCNS1"``, a little-endian uint32 header length, a UTF-8 JSON
header (manifest plus free-form metadata and the shape of every array),
then each array as contiguous little-endian float64 in header order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"RCNS1"


class FormatError(ValueError):
    pass


def dumps(manifest: dict, arrays, metadata: dict | None = None) -> bytes:
    arrays = [np.ascontiguousarray(a, dtype="<f8") for a in arrays]
    header = {
        "format": 1,
        "manifest": manifest,
        "metadata": metadata or {},
        "shapes": [list(a.shape) for a in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + b"".join(a.tobytes() for a in arrays)


def loads(data: bytes) -> tuple[dict, list[np.ndarray], dict]:
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError("not an RCNS1 parameter file")
    offset = len(MAGIC)
    (size,) = struct.unpack_from("<I", data, offset)
    offset += 4
    header = json.loads(data[offset:offset + size].decode("utf-8"))
    offset += size
    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise FormatError("parameter file is truncated")
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(float))
        offset = end
    if offset != len(data):
        raise FormatError("trailing bytes after parameter data")
    return header["manifest"], arrays, header["metadata"]


def network_to_bytes(network, metadata: dict | None = None) -> bytes:
    return dumps(network.manifest(), network.params, metadata)


def network_from_bytes(data: bytes):
    from .model import network_from_manifest

    manifest, arrays, metadata = loads(data)
    network = network_from_manifest(manifest)
    if len(arrays) != len(network.params):
        raise FormatError("parameter count does not match the layer manifest")
    for p, a in zip(network.params, arrays):
        if p.shape != a.shape:
            raise FormatError(f"parameter shape {a.shape} does not match manifest {p.shape}")
        p[...] = a
    return network, metadata
