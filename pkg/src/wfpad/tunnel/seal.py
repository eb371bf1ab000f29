"""Record sealing: one authenticated-encryption record per cell.

The nonce of each record is its per-direction sequence number, so records
cannot be reordered, replayed or dropped without the receiver noticing.
"""
from __future__ import annotations

import abc

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .cell import CELL_SIZE


class AuthenticationFailure(Exception):
    pass


class Sealer(abc.ABC):
    """One direction of a session. ``overhead`` bytes are added per record."""

    overhead: int = 0

    @property
    def record_size(self) -> int:
        return CELL_SIZE + self.overhead

    @abc.abstractmethod
    def seal(self, plaintext: bytes) -> bytes:
        ...

    @abc.abstractmethod
    def open(self, record: bytes) -> bytes:
        ...


class AeadSealer(Sealer):
    """ChaCha20-Poly1305 with a 96-bit big-endian sequence-number nonce."""

    overhead = 16

    def __init__(self, key: bytes):
        self._aead = ChaCha20Poly1305(key)
        self._seal_seq = 0
        self._open_seq = 0

    @staticmethod
    def _nonce(seq: int) -> bytes:
        return seq.to_bytes(12, "big")

    def seal(self, plaintext: bytes) -> bytes:
        if len(plaintext) != CELL_SIZE:
            raise ValueError(f"plaintext must be {CELL_SIZE} bytes")
        record = self._aead.encrypt(self._nonce(self._seal_seq), plaintext, None)
        self._seal_seq += 1
        return record

    def open(self, record: bytes) -> bytes:
        if len(record) != self.record_size:
            raise AuthenticationFailure("record has the wrong length")
        try:
            plaintext = self._aead.decrypt(self._nonce(self._open_seq), record, None)
        except InvalidTag:
            raise AuthenticationFailure(f"record {self._open_seq} failed authentication") from None
        self._open_seq += 1
        return plaintext
