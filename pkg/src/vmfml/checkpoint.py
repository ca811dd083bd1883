"""Binary checkpoint files holding a network, its prototypes and kappa.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic  b"VMFCKPT\\x00"
    8       4     uint32 format version (currently 1)
    12      8     uint64 header length H in bytes
    20      H     UTF-8 JSON header (see below)
    20+H    ...   float64 little-endian payload, tensors concatenated in
                  header order, each in row-major (C) order

The JSON header carries ``layer_widths``, ``activation``, ``seed``,
``kappa``, ``extra`` (free-form run metadata) and ``tensors``: a list of
``{"name": ..., "shape": [...]}`` entries. Tensor order is ``W0, b0, W1, b1,
..., prototypes``; ``Wi`` has shape ``(fan_in, fan_out)`` and ``prototypes``
has shape ``(C, p)``. The file size must equal ``20 + H + 8 * total_elements``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, DataError, TruncatedFile
from .network import Network, NetworkConfig
from .objective import PrototypeSet

MAGIC = b"VMFCKPT\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def save_checkpoint(path, net: Network, protos: PrototypeSet, extra: dict | None = None) -> None:
    tensors = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        tensors.append((f"W{i}", w))
        tensors.append((f"b{i}", b))
    tensors.append(("prototypes", protos.mus))
    header = {
        "layer_widths": list(net.config.layer_widths),
        "activation": net.config.activation,
        "seed": net.config.seed,
        "kappa": protos.kappa,
        "extra": extra or {},
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        f.write(blob)
        for _, t in tensors:
            f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> tuple[Network, PrototypeSet, dict]:
    """Read a checkpoint; returns ``(network, prototypes, header)``."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise TruncatedFile(f"{path}: too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise TruncatedFile(f"{path}: header truncated")
    try:
        header = json.loads(data[_PREFIX.size : start].decode("utf-8"))
        specs = [(str(t["name"]), tuple(int(d) for d in t["shape"])) for t in header["tensors"]]
        config = NetworkConfig(tuple(header["layer_widths"]), header["activation"], header["seed"])
        kappa = float(header["kappa"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed checkpoint header ({exc})") from None
    arrays = {}
    offset = start
    for name, shape in specs:
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise TruncatedFile(f"{path}: tensor {name} truncated")
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes")
    widths = config.layer_widths
    n_layers = len(widths) - 1
    for i in range(n_layers):
        expected = {f"W{i}": (widths[i], widths[i + 1]), f"b{i}": (widths[i + 1],)}
        for name, shape in expected.items():
            if name not in arrays or arrays[name].shape != shape:
                raise DataError(f"{path}: tensor {name} missing or inconsistent with layer widths")
    if "prototypes" not in arrays or arrays["prototypes"].ndim != 2 or arrays["prototypes"].shape[1] != widths[-1]:
        raise DataError(f"{path}: prototypes missing or of the wrong dimension")
    net = Network(config, [arrays[f"W{i}"] for i in range(n_layers)], [arrays[f"b{i}"] for i in range(n_layers)])
    protos = PrototypeSet(arrays["prototypes"], kappa)
    return net, protos, header
