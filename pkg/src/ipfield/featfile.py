"""Feature-matrix file formats.

The binary ``IPFF`` layout is the interchange contract with external feature
exporters. All integers and floats are little-endian:

    offset  size     field
    0       4        magic ``IPFF``
    4       4        u32 format version (currently 1)
    8       4        u32 flags; bit 0 = labels present, other bits reserved
    12      8        u64 N (rows)
    20      8        u64 d (columns)
    28      4*N*d    f32 features, row-major
    ...     4*N      i32 labels (present only when flags bit 0 is set)
    end-8   8        u64 checksum: first 8 bytes of unkeyed BLAKE2b over all
                     preceding bytes, read little-endian

Features are stored as 32-bit floats; downstream numerical work promotes to
float64. Each corruption class raises its own exception type so callers can
tell a stale file from a damaged one.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"IPFF"
VERSION = 1
FLAG_LABELS = 0x1
_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("flags", "<u4"),
                    ("n", "<u8"), ("d", "<u8")])
HEADER_SIZE = _HEADER.itemsize  # 28
CHECKSUM_SIZE = 8


class FeatureFileError(Exception):
    """Base class for feature-file read/write failures."""


class BadMagicError(FeatureFileError):
    pass


class UnsupportedVersionError(FeatureFileError):
    pass


class ChecksumMismatchError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class NonFiniteDataError(FeatureFileError):
    pass


class FormatError(FeatureFileError):
    """Structural violations: reserved flag bits, zero dimensions, trailing bytes."""


class CsvFormatError(FeatureFileError):
    """Ragged, non-numeric, or empty CSV input."""


def checksum64(data: bytes) -> int:
    """64-bit checksum used by the IPFF format."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


@dataclass
class FeatureMatrix:
    """N×d feature rows with optional integer labels.

    ``source_tag`` is free-form provenance (dataset + model identity); it is
    not persisted in the binary format.
    """

    data: np.ndarray
    labels: Optional[np.ndarray] = None
    source_tag: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("feature matrix must have at least one row and one column")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (self.data.shape[0],):
                raise ValueError("labels length must equal feature row count")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def write_features(m: FeatureMatrix, path) -> None:
    """Write the matrix to ``path`` in the binary IPFF layout."""
    flags = FLAG_LABELS if m.labels is not None else 0
    header = np.zeros((), dtype=_HEADER)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["flags"] = flags
    header["n"] = m.n
    header["d"] = m.dim
    body = header.tobytes() + np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    if m.labels is not None:
        body += np.ascontiguousarray(m.labels, dtype="<i4").tobytes()
    body += checksum64(body).to_bytes(8, "little")
    Path(path).write_bytes(body)


def read_features(path) -> FeatureMatrix:
    """Read and validate an IPFF file.

    Validation order: magic, version, flags, structural size, checksum,
    finiteness. Any failure raises before a matrix is constructed.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file shorter than magic")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: truncated header ({len(raw)} bytes)")
    header = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER)[0]
    version = int(header["version"])
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    flags = int(header["flags"])
    if flags & ~FLAG_LABELS:
        raise FormatError(f"{path}: reserved flag bits set: {flags:#x}")
    n, d = int(header["n"]), int(header["d"])
    if n < 1 or d < 1:
        raise FormatError(f"{path}: invalid dimensions N={n}, d={d}")
    has_labels = bool(flags & FLAG_LABELS)
    expected = HEADER_SIZE + 4 * n * d + (4 * n if has_labels else 0) + CHECKSUM_SIZE
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes")
    stored = int.from_bytes(raw[-CHECKSUM_SIZE:], "little")
    if checksum64(raw[:-CHECKSUM_SIZE]) != stored:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")
    offset = HEADER_SIZE
    data = np.frombuffer(raw, dtype="<f4", count=n * d, offset=offset)
    data = data.reshape(n, d).copy()
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError(f"{path}: non-finite feature values")
    labels = None
    if has_labels:
        offset += 4 * n * d
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=offset).copy()
    return FeatureMatrix(data=data, labels=labels, source_tag=str(path))


def read_csv_features(path) -> FeatureMatrix:
    """Read a rectangular numeric CSV with a header row.

    A trailing column named ``label`` (case-insensitive) becomes integer
    labels; every other column must parse as a float.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if not header:
        raise CsvFormatError(f"{path}: empty header")
    has_labels = header[-1].lower() == "label"
    width = len(header) - (1 if has_labels else 0)
    if width < 1:
        raise CsvFormatError(f"{path}: no feature columns")
    body = rows[1:]
    if not body:
        raise CsvFormatError(f"{path}: header but no data rows")
    data = np.empty((len(body), width), dtype=np.float64)
    labels = np.empty(len(body), dtype=np.int32) if has_labels else None
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        try:
            data[i] = [float(c) for c in row[:width]]
            if has_labels:
                labels[i] = int(row[-1])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: row {i + 2}: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError(f"{path}: non-finite feature values")
    return FeatureMatrix(data=data, labels=labels, source_tag=str(path))
