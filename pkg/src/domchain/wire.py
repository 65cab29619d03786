"""Canonical byte framing for everything that gets hashed, signed, or stored.

Every multi-field structure is encoded as a sequence of length-prefixed
fields (4-byte big-endian length, then the raw bytes). The encoding is
canonical: encoding the decoded value reproduces the input byte for byte.
"""

from __future__ import annotations

import struct

from .errors import DecodeError

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_F64 = struct.Struct(">d")


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def put_u32(self, value: int) -> "Writer":
        self._buf += _U32.pack(value)
        return self

    def put_u64(self, value: int) -> "Writer":
        self._buf += _U64.pack(value)
        return self

    def put_f64(self, value: float) -> "Writer":
        self._buf += _F64.pack(value)
        return self

    def put_block(self, data: bytes) -> "Writer":
        """Length-prefixed byte field."""
        self._buf += _U32.pack(len(data))
        self._buf += data
        return self

    def put_str(self, text: str) -> "Writer":
        return self.put_block(text.encode("utf-8"))

    def getvalue(self) -> bytes:
        return bytes(self._buf)


class Reader:
    """Cursor over a byte string; every failure carries the offending offset."""

    def __init__(self, data: bytes):
        self._data = data
        self.offset = 0

    def _take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self._data):
            raise DecodeError(
                f"truncated input: wanted {size} bytes, {len(self._data) - self.offset} left",
                offset=self.offset,
            )
        chunk = self._data[self.offset:end]
        self.offset = end
        return chunk

    def read_u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def read_u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def read_f64(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def read_block(self) -> bytes:
        size = self.read_u32()
        return self._take(size)

    def read_str(self) -> str:
        raw = self.read_block()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid utf-8: {exc}", offset=self.offset - len(raw)) from exc

    def expect_end(self) -> None:
        if self.offset != len(self._data):
            raise DecodeError(
                f"{len(self._data) - self.offset} trailing bytes", offset=self.offset
            )
