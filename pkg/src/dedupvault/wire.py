"""Canonical binary encoding primitives shared by the wire format and the stores.

Fixed field order, fixed-width big-endian integers, u32-length-prefixed
variable byte strings, u16-count-prefixed lists.
"""

from __future__ import annotations

import struct

MAX_VAR_BYTES = 128 * 1024 * 1024


class CodecError(ValueError):
    pass


class MalformedFrame(CodecError):
    pass


class UnknownVersion(CodecError):
    pass


class UnknownTag(CodecError):
    pass


class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">B", v))
        return self

    def u16(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">H", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">Q", v))
        return self

    def fixed(self, b: bytes, n: int) -> "Writer":
        if len(b) != n:
            raise CodecError(f"expected {n} bytes, got {len(b)}")
        self._parts.append(bytes(b))
        return self

    def var(self, b: bytes) -> "Writer":
        if len(b) > MAX_VAR_BYTES:
            raise CodecError("byte string too long")
        self.u32(len(b))
        self._parts.append(bytes(b))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self._b = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> memoryview:
        if n < 0 or self._pos + n > len(self._b):
            raise MalformedFrame("truncated input")
        out = self._b[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def fixed(self, n: int) -> bytes:
        return bytes(self._take(n))

    def var(self) -> bytes:
        n = self.u32()
        if n > MAX_VAR_BYTES:
            raise MalformedFrame("byte string too long")
        return bytes(self._take(n))

    def remaining(self) -> int:
        return len(self._b) - self._pos

    def done(self) -> None:
        if self.remaining():
            raise MalformedFrame(f"{self.remaining()} trailing bytes")
