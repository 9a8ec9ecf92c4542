"""Self-describing binary checkpoint container.

Layout: 8-byte magic, a uint32 little-endian header length, a UTF-8 JSON
header (format version, architecture descriptor, step count, optimizer
hyperparameters, ordered tensor directory), then the named tensor payloads
concatenated as little-endian float32 in directory order. Round-trips are
byte-exact: load followed by save reproduces the identical file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"NFCKPT01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    descriptor: dict
    step: int
    optimizer: dict
    tensors: dict[str, np.ndarray]
    extra: dict


def save_checkpoint(path, descriptor: dict, step: int, optimizer: dict,
                    tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    directory = [{"name": name, "shape": list(arr.shape)}
                 for name, arr in tensors.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": descriptor,
        "step": int(step),
        "optimizer": optimizer,
        "extra": extra or {},
        "tensors": directory,
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format version "
                             f"{header.get('format_version')!r}")
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ValueError(f"{path}: truncated payload for {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return Checkpoint(descriptor=header["architecture"], step=header["step"],
                      optimizer=header["optimizer"], tensors=tensors,
                      extra=header.get("extra", {}))
