"""Binary store of precomputed per-page embedding vectors, one file per modality.

File layout ("PSSE" format, little-endian throughout):

    magic   4 bytes  b"PSSE"
    version u32      1
    dim     u32      columns per row, > 0
    count   u64      number of rows
    keys    count x (u32 byte-length + UTF-8 bytes)
    data    count * dim float32 values, row-major

Visual and textual embeddings live in separate files and may have different
dimensions; the model's projection layers absorb the difference.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"PSSE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@dataclass
class EmbeddingMatrix:
    """Keyed row matrix of float32 embeddings."""

    keys: list[str]
    data: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValidationError(f"embedding data must be 2-D, got {self.data.ndim}-D")
        if self.data.shape[1] == 0:
            raise ValidationError("embedding dimension must be positive")
        if self.data.shape[0] != len(self.keys):
            raise ValidationError(
                f"{len(self.keys)} keys for {self.data.shape[0]} rows"
            )
        self._index = {}
        for i, key in enumerate(self.keys):
            if key in self._index:
                raise ValidationError(f"duplicate embedding key {key!r}")
            self._index[key] = i
        bad = ~np.isfinite(self.data).all(axis=1)
        if bad.any():
            raise ValidationError(f"corrupt embedding {self.keys[int(np.argmax(bad))]!r}")

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def lookup(self, key: str) -> np.ndarray:
        """Return the stored row for ``key``."""
        try:
            return self.data[self._index[key]]
        except KeyError:
            raise ValidationError(f"unknown embedding key {key!r}") from None

    def take(self, keys: list[str]) -> np.ndarray:
        """Stack the rows for ``keys`` in order into an (n, dim) matrix."""
        rows = [self._index.get(k) for k in keys]
        for key, row in zip(keys, rows):
            if row is None:
                raise ValidationError(f"unknown embedding key {key!r}")
        return self.data[np.asarray(rows, dtype=np.intp)]


def write_store(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write the matrix in PSSE format; bit-exact round trip with load_store."""
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, matrix.dim, len(matrix)))
            for key in matrix.keys:
                raw = key.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(matrix.data.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write embedding store {path}: {exc}") from None


def load_store(path: str | Path) -> EmbeddingMatrix:
    """Read a PSSE file, validating the header, keys, and row finiteness."""
    try:
        with open(path, "rb") as fh:
            header = fh.read(_HEADER.size)
            if len(header) != _HEADER.size:
                raise FormatError(f"format error: {path}: truncated header")
            magic, version, dim, count = _HEADER.unpack(header)
            if magic != MAGIC:
                raise FormatError(f"format error: {path}: bad magic {magic!r}")
            if version != VERSION:
                raise FormatError(f"format error: {path}: unsupported version {version}")
            if dim == 0:
                raise FormatError(f"format error: {path}: dimension 0")
            keys = []
            for _ in range(count):
                raw_len = fh.read(4)
                if len(raw_len) != 4:
                    raise FormatError(f"format error: {path}: truncated key table")
                (key_len,) = struct.unpack("<I", raw_len)
                raw = fh.read(key_len)
                if len(raw) != key_len:
                    raise FormatError(f"format error: {path}: truncated key table")
                keys.append(raw.decode("utf-8"))
            payload = fh.read(count * dim * 4)
            if len(payload) != count * dim * 4:
                raise FormatError(f"format error: {path}: truncated payload")
            if fh.read(1):
                raise FormatError(f"format error: {path}: trailing bytes")
    except OSError as exc:
        raise FormatError(f"cannot read embedding store {path}: {exc}") from None
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return EmbeddingMatrix(keys=keys, data=data)
