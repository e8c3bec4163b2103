"""FLO1 trajectory files and their JSON manifests.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic  b"FLO1"
    4       4     version (u32) = 1
    8       4     ndim (u32) = 4
    12      16    dims T, C, H, W (4 x u32)
    28      1     dtype (u8) = 1 -> float64 LE
    29      8*N   payload, row-major, T outermost
    29+8*N  8     footer: payload byte length (u64)

The manifest ``<file>.json`` echoes the generating configuration and stores
the SHA-256 of the whole ``.flo`` file.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__

__all__ = [
    "MAGIC",
    "HEADER_SIZE",
    "FloFormatError",
    "encode_flo",
    "decode_flo",
    "write_flo",
    "read_flo",
    "manifest_path",
    "write_manifest",
    "read_manifest",
    "file_checksum",
]

MAGIC = b"FLO1"
VERSION = 1
NDIM = 4
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sII4IB")
HEADER_SIZE = _HEADER.size
_FOOTER = struct.Struct("<Q")


class FloFormatError(ValueError):
    """Malformed FLO1 content; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def encode_flo(data: np.ndarray) -> bytes:
    data = np.asarray(data)
    if data.ndim != NDIM:
        raise ValueError(f"FLO1 stores 4-d arrays (T, C, H, W), got shape {data.shape}")
    payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, NDIM, *data.shape, DTYPE_F64)
    return header + payload + _FOOTER.pack(len(payload))


def decode_flo(buf: bytes) -> np.ndarray:
    if len(buf) < HEADER_SIZE + _FOOTER.size:
        raise FloFormatError(f"file too short ({len(buf)} bytes)", len(buf))
    magic, version, ndim, t, c, h, w, dtype = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FloFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FloFormatError(f"unsupported version {version}", 4)
    if ndim != NDIM:
        raise FloFormatError(f"ndim must be {NDIM}, got {ndim}", 8)
    if dtype != DTYPE_F64:
        raise FloFormatError(f"unsupported dtype code {dtype}", 28)
    footer_at = len(buf) - _FOOTER.size
    (declared,) = _FOOTER.unpack_from(buf, footer_at)
    actual = footer_at - HEADER_SIZE
    if declared != actual:
        raise FloFormatError(f"footer declares {declared} payload bytes but file holds {actual}", footer_at)
    expected = 8 * t * c * h * w
    if expected != actual:
        raise FloFormatError(f"dims {(t, c, h, w)} imply {expected} payload bytes, found {actual}", 12)
    return np.frombuffer(buf, dtype="<f8", count=t * c * h * w, offset=HEADER_SIZE).reshape(t, c, h, w).copy()


def write_flo(path, data: np.ndarray) -> str:
    """Write ``data`` and return the SHA-256 of the file."""
    buf = encode_flo(data)
    Path(path).write_bytes(buf)
    return hashlib.sha256(buf).hexdigest()


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def read_flo(path, verify: bool = True) -> np.ndarray:
    """Read a FLO1 file, checking the manifest checksum when one exists."""
    buf = Path(path).read_bytes()
    data = decode_flo(buf)
    mpath = manifest_path(path)
    if verify and mpath.exists():
        recorded = read_manifest(path).get("checksum")
        actual = hashlib.sha256(buf).hexdigest()
        if recorded is not None and recorded != actual:
            raise FloFormatError(f"checksum mismatch: manifest {recorded[:12]}..., file {actual[:12]}...")
    return data


def write_manifest(path, config: dict, seed: int | None, checksum: str, **extra) -> Path:
    doc = {
        "tool": "divfree",
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "file": Path(path).name,
        "checksum": checksum,
        "checksum_algorithm": "sha256",
        "seed": seed,
        "config": config,
    }
    doc.update(extra)
    mpath = manifest_path(path)
    mpath.write_text(json.dumps(doc, indent=2, sort_keys=False, default=_jsonable))
    return mpath


def read_manifest(path) -> dict:
    return json.loads(manifest_path(path).read_text())


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
