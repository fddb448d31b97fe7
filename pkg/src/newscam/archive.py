"""Reader and writer for the float32 tensor archive.

Layout, all little-endian::

    u64 N | N bytes UTF-8 JSON manifest | data region

The manifest maps tensor name to ``{"dtype": "f32", "shape": [...],
"offset": int, "nbytes": int}``; offsets are relative to the start of the
data region and tensors are stored row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


class ArchiveError(ValueError):
    pass


def save_archive(path, tensors: dict[str, np.ndarray]):
    manifest = {}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        data = arr.tobytes(order="C")
        manifest[name] = {"dtype": "f32", "shape": list(arr.shape),
                          "offset": offset, "nbytes": len(data)}
        chunks.append(data)
        offset += len(data)
    header = json.dumps(manifest, separators=(",", ":"), sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def read_manifest(path) -> dict:
    with Path(path).open("rb") as fh:
        return _read_header(fh, path)[0]


def _read_header(fh, path):
    raw = fh.read(8)
    if len(raw) != 8:
        raise ArchiveError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", raw)
    blob = fh.read(n)
    if len(blob) != n:
        raise ArchiveError(f"{path}: manifest length {n} exceeds file size")
    try:
        manifest = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: bad manifest: {exc}") from None
    if not isinstance(manifest, dict):
        raise ArchiveError(f"{path}: manifest must be a JSON object")
    return manifest, 8 + n


def load_archive(path, names=None) -> dict[str, np.ndarray]:
    """Load tensors (all, or only ``names``) as float32 arrays."""
    path = Path(path)
    with path.open("rb") as fh:
        manifest, start = _read_header(fh, path)
        fh.seek(0, 2)
        data_size = fh.tell() - start
        out = {}
        for name in manifest if names is None else names:
            if name not in manifest:
                raise ArchiveError(f"{path}: missing tensor {name!r}")
            entry = manifest[name]
            if entry.get("dtype") != "f32":
                raise ArchiveError(f"{path}: tensor {name!r} has unsupported dtype {entry.get('dtype')!r}")
            shape = tuple(int(s) for s in entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
            if nbytes != 4 * count:
                raise ArchiveError(f"{path}: tensor {name!r}: nbytes {nbytes} != 4 * {count}")
            if offset < 0 or offset + nbytes > data_size:
                raise ArchiveError(f"{path}: tensor {name!r} lies outside the data region")
            fh.seek(start + offset)
            buf = fh.read(nbytes)
            out[name] = np.frombuffer(buf, dtype="<f4").reshape(shape)
    return out
