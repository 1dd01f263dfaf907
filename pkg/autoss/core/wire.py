from __future__ import annotations

import struct
from typing import Callable

# Big-endian framing shared by the index, embedding, VO and bundle files.


def u8(v: int) -> bytes:
    return struct.pack(">B", v)


def u32(v: int) -> bytes:
    return struct.pack(">I", v)


def u64(v: int) -> bytes:
    return struct.pack(">Q", v)


def f64(v: float) -> bytes:
    return struct.pack(">d", v)


def lp_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return u32(len(raw)) + raw


def lp_bytes(b: bytes) -> bytes:
    return u32(len(b)) + b


class ByteReader:
    """
    Cursor over a byte string. Every read is bounds-checked and failures go
    through `error(message, offset)` so each file format raises its own error type.
    """

    def __init__(self, data: bytes, error: Callable[[str, int], Exception]) -> None:
        self._data = data
        self._pos = 0
        self._error = error

    @property
    def pos(self) -> int:
        return self._pos

    def at_end(self) -> bool:
        return self._pos == len(self._data)

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def fail(self, message: str) -> Exception:
        return self._error(message, self._pos)

    def raw(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise self.fail(f"truncated input: need {n} bytes")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def peek_u8(self) -> int:
        if self._pos >= len(self._data):
            raise self.fail("truncated input: need 1 byte")
        return self._data[self._pos]

    def u8(self) -> int:
        return self.raw(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.raw(8))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self.raw(8))[0]

    def lp_bytes(self) -> bytes:
        return self.raw(self.u32())

    def lp_str(self) -> str:
        start = self._pos
        raw = self.lp_bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise self._error("invalid UTF-8 string", start)

    def expect_end(self) -> None:
        if not self.at_end():
            raise self.fail(f"{self.remaining()} trailing bytes")
