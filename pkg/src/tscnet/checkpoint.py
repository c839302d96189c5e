"""Binary checkpoint format.

Layout (all integers little-endian uint32):

    magic "TSCN0001"
    per tensor, in model parameter order:
        name_len, name (UTF-8), rank, dims[rank], raw float32 values
    crc32 of every preceding byte

Values are stored as float32 regardless of the model's compute precision.
A checkpoint loads only into a model whose parameter names and shapes
match exactly; mismatches are reported as an explicit diff.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .autodiff import Tensor
from .errors import DataError

MAGIC = b"TSCN0001"


def serialize(params: dict[str, Tensor]) -> bytes:
    chunks = [MAGIC]
    for name, p in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        dims = p.shape
        chunks.append(struct.pack("<I", len(dims)))
        for d in dims:
            chunks.append(struct.pack("<I", d))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save(path: str, params: dict[str, Tensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(params))


def parse(blob: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    if len(blob) < len(MAGIC) + 4:
        raise DataError(f"checkpoint {source} is truncated")
    if blob[:len(MAGIC)] != MAGIC:
        raise DataError(f"checkpoint {source} has bad magic {blob[:8]!r}")
    body, stored_crc = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"checkpoint {source} failed its CRC32 check")

    tensors: dict[str, np.ndarray] = {}
    offset = len(MAGIC)
    end = len(body)
    while offset < end:
        if offset + 4 > end:
            raise DataError(f"checkpoint {source} is malformed (truncated record)")
        (name_len,) = struct.unpack_from("<I", body, offset)
        offset += 4
        name = body[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", body, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", body, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset += 4 * count
        if name in tensors:
            raise DataError(f"checkpoint {source} repeats tensor '{name}'")
        tensors[name] = values
    return tensors


def load(path: str) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    return parse(blob, source=path)


def load_into(path: str, params: dict[str, Tensor]) -> None:
    """Load a checkpoint into existing parameters, verifying the layout."""
    stored = load(path)
    problems = []
    for name in stored:
        if name not in params:
            problems.append(f"unexpected tensor '{name}'")
    for name, p in params.items():
        if name not in stored:
            problems.append(f"missing tensor '{name}' (shape {tuple(p.shape)})")
        elif tuple(stored[name].shape) != tuple(p.shape):
            problems.append(f"shape mismatch for '{name}': checkpoint {stored[name].shape}, model {tuple(p.shape)}")
    if problems:
        raise DataError(f"checkpoint {path} does not match the model:\n  " + "\n  ".join(problems))
    for name, p in params.items():
        p.data = stored[name].astype(p.dtype)
