"""Writer (and verification reader) for the IPFF feature-file layout.

Independent implementation of the interchange contract consumed by the
scoring package; byte layout, little-endian throughout:

    magic ``IPFF`` | u32 version=1 | u32 flags (bit0 labels) | u64 N | u64 d
    | N*d float32 row-major | N int32 labels if flagged
    | u64 checksum = first 8 bytes of unkeyed BLAKE2b over preceding bytes
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"IPFF"
VERSION = 1
FLAG_LABELS = 0x1


def checksum64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def write_ipff(path, features: np.ndarray, labels: np.ndarray | None = None) -> None:
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
        raise ValueError(f"features must be a nonempty 2-D matrix, got {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise ValueError("features contain non-finite values")
    flags = 0
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype="<i4")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels length must equal feature row count")
        flags |= FLAG_LABELS
    body = struct.pack("<4sIIQQ", MAGIC, VERSION, flags,
                       feats.shape[0], feats.shape[1])
    body += feats.tobytes()
    if labels is not None:
        body += labels.tobytes()
    body += checksum64(body).to_bytes(8, "little")
    Path(path).write_bytes(body)


def read_ipff(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Self-check reader; the scoring package's reader is the contract owner."""
    raw = Path(path).read_bytes()
    magic, version, flags, n, d = struct.unpack_from("<4sIIQQ", raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} IPFF file")
    if checksum64(raw[:-8]) != int.from_bytes(raw[-8:], "little"):
        raise ValueError(f"{path}: checksum mismatch")
    offset = struct.calcsize("<4sIIQQ")
    feats = np.frombuffer(raw, dtype="<f4", count=n * d,
                          offset=offset).reshape(n, d).copy()
    labels = None
    if flags & FLAG_LABELS:
        labels = np.frombuffer(raw, dtype="<i4", count=n,
                               offset=offset + 4 * n * d).copy()
    return feats, labels
