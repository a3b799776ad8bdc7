"""Binary model files.

Layout (little-endian)::

    magic   8 bytes  b"SGPPNET\\0"
    version u32
    hlen    u32      length of the JSON header
    header  hlen     UTF-8 JSON: architecture, input shape, dtype, step,
                     encoder conventions, tensor table
    blobs            raw tensors in table order (weights, then Adam m, v)
    crc     u32      CRC32 of everything above
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .layers import LayerSpec, infer_shapes
from .model import NetworkParams

MAGIC = b"SGPPNET\0"
FORMAT_VERSION = 1


class ModelFileError(IOError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelChecksumError(ModelFileError):
    pass


def _tensors(params: NetworkParams):
    for group, ws in (("w", params.weights), ("m", params.m), ("v", params.v)):
        for i, w in enumerate(ws):
            for k in sorted(w):
                yield group, i, k, w[k]


def dumps_model(params: NetworkParams, conventions: dict | None = None) -> bytes:
    table, blobs = [], []
    for group, i, k, a in _tensors(params):
        a = np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))
        table.append({"group": group, "layer": i, "name": k, "shape": list(a.shape),
                      "dtype": a.dtype.str})
        blobs.append(a.tobytes())
    header = {
        "architecture": [L.to_dict() for L in params.arch],
        "input_shape": list(params.input_shape),
        "step": params.step,
        "conventions": conventions or {},
        "tensors": table,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(hb)) + hb + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body))


def loads_model(data: bytes) -> tuple[NetworkParams, dict]:
    """Inverse of :func:`dumps_model`; returns ``(params, conventions)``."""
    if len(data) < len(MAGIC) + 12 or data[:len(MAGIC)] != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"model format version {version}, expected {FORMAT_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelChecksumError("model checksum mismatch (file truncated or corrupted)")
    pos = len(MAGIC) + 8
    header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    arch = [LayerSpec.from_dict(d) for d in header["architecture"]]
    input_shape = tuple(header["input_shape"])
    infer_shapes(arch, input_shape)
    groups = {g: [{} for _ in arch] for g in "wmv"}
    for t in header["tensors"]:
        dt = np.dtype(t["dtype"])
        n = int(np.prod(t["shape"])) * dt.itemsize
        a = np.frombuffer(body, dtype=dt, count=n // dt.itemsize, offset=pos).reshape(t["shape"])
        groups[t["group"]][t["layer"]][t["name"]] = a.astype(dt.newbyteorder("="))
        pos += n
    if pos != len(body):
        raise ModelFileError(f"{len(body) - pos} trailing bytes after tensors")
    params = NetworkParams(arch, input_shape, groups["w"], groups["m"], groups["v"], header["step"])
    return params, header["conventions"]


def save_model(path, params: NetworkParams, conventions: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps_model(params, conventions))


def load_model(path) -> tuple[NetworkParams, dict]:
    return loads_model(Path(path).read_bytes())
