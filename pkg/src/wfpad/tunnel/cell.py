"""Fixed-size plaintext cells.

Every cell is 517 bytes: a type byte, a big-endian 2-byte payload length and
a 514-byte body that is zero beyond the payload. Signal cells carry their
signal kind as a one-byte payload.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from ..kernel import CELL_PAYLOAD, SignalKind

BODY_SIZE = CELL_PAYLOAD
CELL_SIZE = 3 + BODY_SIZE
_HEADER = struct.Struct(">BH")


class CellError(ValueError):
    pass


class BadLength(CellError):
    pass


class BadType(CellError):
    pass


class NonZeroPadding(CellError):
    pass


class CellType(enum.IntEnum):
    PAYLOAD = 0
    DUMMY = 1
    SIGNAL = 2


@dataclass(frozen=True)
class Cell:
    type: CellType
    payload: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "type", CellType(self.type))
        if len(self.payload) > BODY_SIZE:
            raise BadLength(f"payload of {len(self.payload)} bytes exceeds {BODY_SIZE}")
        if self.type is CellType.DUMMY and self.payload:
            raise CellError("dummy cells carry no payload")
        if self.type is CellType.SIGNAL:
            if len(self.payload) != 1:
                raise CellError("signal cells carry exactly one kind byte")
            SignalKind(self.payload[0])

    @classmethod
    def data(cls, payload: bytes) -> "Cell":
        return cls(CellType.PAYLOAD, bytes(payload))

    @classmethod
    def dummy(cls) -> "Cell":
        return cls(CellType.DUMMY)

    @classmethod
    def signal(cls, kind: SignalKind) -> "Cell":
        return cls(CellType.SIGNAL, bytes([int(kind)]))

    @property
    def signal_kind(self) -> SignalKind:
        if self.type is not CellType.SIGNAL:
            raise CellError("not a signal cell")
        return SignalKind(self.payload[0])


def encode_cell(cell: Cell) -> bytes:
    return _HEADER.pack(cell.type, len(cell.payload)) + cell.payload.ljust(BODY_SIZE, b"\0")


def decode_cell(data: bytes) -> Cell:
    if len(data) != CELL_SIZE:
        raise BadLength(f"cell must be {CELL_SIZE} bytes, got {len(data)}")
    type_byte, length = _HEADER.unpack_from(data)
    if type_byte not in CellType._value2member_map_:
        raise BadType(f"unknown cell type {type_byte}")
    if length > BODY_SIZE:
        raise BadLength(f"payload length {length} exceeds {BODY_SIZE}")
    body = data[3:]
    if body[length:].count(0) != BODY_SIZE - length:
        raise NonZeroPadding("non-zero bytes after the payload")
    try:
        return Cell(CellType(type_byte), bytes(body[:length]))
    except ValueError as exc:
        if isinstance(exc, CellError):
            raise
        raise BadType(str(exc)) from None
