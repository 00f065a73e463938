"""Little-endian binary IO helpers shared by the file formats.

Every on-disk artifact (checkpoint, normalization stats, corpus) uses the
same conventions: ASCII magic string, 32-bit unsigned counts, 64-bit reals,
all little-endian.  Readers consume exact byte counts and fail loudly on
truncation or trailing garbage.
"""

from __future__ import annotations

import struct

import numpy as np


class FormatError(ValueError):
    """Raised when a binary file does not match its declared layout."""


class Reader:
    """Sequential reader over an in-memory buffer with strict EOF checks."""

    def __init__(self, data: bytes, name: str = "file"):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.name}: truncated (needed {n} bytes at offset "
                f"{self.pos}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes):
        got = self.take(len(expected))
        if got != expected:
            raise FormatError(
                f"{self.name}: bad magic {got!r}, expected {expected!r}"
            )

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def f64_array(self, count: int, shape=None) -> np.ndarray:
        arr = np.frombuffer(self.take(8 * count), dtype="<f8").astype(
            np.float64, copy=True
        )
        return arr if shape is None else arr.reshape(shape)

    def u32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<u4").astype(
            np.int64, copy=True
        )

    def text(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self.name}: invalid UTF-8 string") from exc

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.name}: {len(self.data) - self.pos} trailing bytes"
            )


class Writer:
    """Accumulates the byte layout mirrored by Reader."""

    def __init__(self):
        self.chunks: list[bytes] = []

    def magic(self, m: bytes):
        self.chunks.append(m)

    def u32(self, v: int):
        self.chunks.append(struct.pack("<I", v))

    def i64(self, v: int):
        self.chunks.append(struct.pack("<q", v))

    def f64(self, v: float):
        self.chunks.append(struct.pack("<d", v))

    def f64_array(self, arr: np.ndarray):
        self.chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def u32_array(self, values):
        self.chunks.append(
            np.ascontiguousarray(values, dtype="<u4").tobytes()
        )

    def text(self, s: str):
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self.chunks.append(raw)

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)
