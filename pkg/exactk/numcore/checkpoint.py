"""Flat parameter archive.

Layout (all integers little-endian)::

    b"EXKA" | u32 version | u32 manifest_len | manifest (utf-8 key=value lines)
    u32 record_count
    per record: u16 name_len | name | u8 ndim | u32 * ndim | float64 payload

Names are written in sorted order and the manifest is sorted by key, so equal
contents give equal bytes.
"""

import os
import struct
from typing import Dict, Mapping, Tuple

import numpy as np

from exactk.core.errors import DataError


MAGIC = b"EXKA"
VERSION = 1


def _encode_manifest(manifest: Mapping[str, object]) -> bytes:
    lines = []
    for key in sorted(manifest):
        value = str(manifest[key])
        if "=" in key or "\n" in key or "\n" in value:
            raise DataError(f"manifest entry {key!r} cannot be stored on one line")
        lines.append(f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _decode_manifest(raw: bytes) -> Dict[str, str]:
    manifest: Dict[str, str] = {}
    for line in raw.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            manifest[key] = value
    return manifest


def save_archive(path: str, arrays: Mapping[str, np.ndarray], manifest: Mapping[str, object]) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    text = _encode_manifest(manifest)
    chunks.append(struct.pack("<I", len(text)))
    chunks.append(text)
    chunks.append(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes(order="C"))

    tmp_path = path + ".tmp"
    with open(tmp_path, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp_path, path)


class _Reader:
    def __init__(self, raw: bytes, path: str) -> None:
        self.raw = raw
        self.pos = 0
        self.path = path

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataError(f"{self.path}: archive truncated at byte {self.pos}")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple[int, ...]:
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load_archive(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)

    if reader.read(4) != MAGIC:
        raise DataError(f"{path}: not an exactk archive")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise DataError(f"{path}: unsupported archive version {version}")
    (manifest_len,) = reader.unpack("<I")
    manifest = _decode_manifest(reader.read(manifest_len))

    arrays: Dict[str, np.ndarray] = {}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.read(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        n_values = int(np.prod(shape)) if shape else 1
        payload = reader.read(8 * n_values)
        arrays[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)

    if reader.pos != len(reader.raw):
        raise DataError(f"{path}: {len(reader.raw) - reader.pos} trailing bytes")
    return arrays, manifest
