"""Session handshake.

Client hello (70 bytes): magic ``WFDP``, version, defense id, SHA-256 of the
canonical parameter block, 32-byte client nonce. Bridge reply (65 bytes):
version, 32-byte bridge nonce, HMAC-SHA256 proof over both nonces and the
parameter hash keyed with the shared secret. A bridge that rejects a hello
just closes the connection; a client holding the wrong secret fails on the
proof, and a bridge facing one fails on the first sealed record.
"""
from __future__ import annotations

import asyncio
import hashlib
import hmac
import os
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..config import BridgeConfig, DefenseSpec
from .seal import AeadSealer

MAGIC = b"WFDP"
VERSION = 1
NONCE_SIZE = 32
HELLO_SIZE = 4 + 1 + 1 + 32 + NONCE_SIZE
REPLY_SIZE = 1 + NONCE_SIZE + 32
_PROOF_LABEL = b"wfpad bridge proof"


class HandshakeError(Exception):
    pass


class AuthFailure(HandshakeError):
    pass


class ParamMismatch(HandshakeError):
    pass


@dataclass(frozen=True)
class ClientHello:
    defense_id: int
    param_hash: bytes
    nonce: bytes
    version: int = VERSION

    def encode(self) -> bytes:
        return MAGIC + bytes([self.version, self.defense_id]) + self.param_hash + self.nonce

    @classmethod
    def decode(cls, data: bytes) -> "ClientHello":
        if len(data) != HELLO_SIZE or data[:4] != MAGIC:
            raise HandshakeError("not a client hello")
        return cls(data[5], data[6:38], data[38:], data[4])


@dataclass(frozen=True)
class BridgeReply:
    nonce: bytes
    proof: bytes
    version: int = VERSION

    def encode(self) -> bytes:
        return bytes([self.version]) + self.nonce + self.proof

    @classmethod
    def decode(cls, data: bytes) -> "BridgeReply":
        if len(data) != REPLY_SIZE:
            raise HandshakeError("short bridge reply")
        return cls(data[1:33], data[33:], data[0])


@dataclass(frozen=True)
class SessionKeys:
    client_to_bridge: bytes
    bridge_to_client: bytes

    def sealers(self, is_client: bool):
        """(sealer for sending, sealer for receiving) on one side."""
        send, recv = self.client_to_bridge, self.bridge_to_client
        if not is_client:
            send, recv = recv, send
        return AeadSealer(send), AeadSealer(recv)


def bridge_proof(secret: bytes, client_nonce: bytes, bridge_nonce: bytes,
                 param_hash: bytes) -> bytes:
    return hmac.new(secret, _PROOF_LABEL + client_nonce + bridge_nonce + param_hash,
                    hashlib.sha256).digest()


def derive_keys(secret: bytes, client_nonce: bytes, bridge_nonce: bytes) -> SessionKeys:
    okm = HKDF(algorithm=hashes.SHA256(), length=64, salt=client_nonce + bridge_nonce,
               info=b"wfpad session keys").derive(secret)
    return SessionKeys(okm[:32], okm[32:])


def make_hello(spec: DefenseSpec, nonce: bytes = None) -> ClientHello:
    return ClientHello(spec.defense_id, spec.param_hash(), nonce or os.urandom(NONCE_SIZE))


def accept_hello(data: bytes, config: BridgeConfig, nonce: bytes = None):
    """Bridge side: validate a hello, return (reply, keys)."""
    hello = ClientHello.decode(data)
    if hello.version != VERSION:
        raise HandshakeError(f"unsupported version {hello.version}")
    spec = config.defense
    if hello.defense_id != spec.defense_id or not hmac.compare_digest(hello.param_hash,
                                                                      spec.param_hash()):
        raise ParamMismatch("defense parameters differ")
    nonce = nonce or os.urandom(NONCE_SIZE)
    proof = bridge_proof(config.secret, hello.nonce, nonce, hello.param_hash)
    return BridgeReply(nonce, proof), derive_keys(config.secret, hello.nonce, nonce)


def finish_hello(hello: ClientHello, data: bytes, secret: bytes) -> SessionKeys:
    """Client side: check the bridge reply and derive session keys."""
    reply = BridgeReply.decode(data)
    if reply.version != VERSION:
        raise HandshakeError(f"unsupported version {reply.version}")
    expected = bridge_proof(secret, hello.nonce, reply.nonce, hello.param_hash)
    if not hmac.compare_digest(expected, reply.proof):
        raise AuthFailure("bridge proof does not match the shared secret")
    return derive_keys(secret, hello.nonce, reply.nonce)


async def client_handshake(reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                           spec: DefenseSpec, secret: bytes) -> SessionKeys:
    hello = make_hello(spec)
    writer.write(hello.encode())
    await writer.drain()
    try:
        data = await reader.readexactly(REPLY_SIZE)
    except asyncio.IncompleteReadError:
        raise HandshakeError("bridge closed the connection during the handshake") from None
    return finish_hello(hello, data, secret)


async def bridge_handshake(reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                           config: BridgeConfig) -> SessionKeys:
    try:
        data = await reader.readexactly(HELLO_SIZE)
    except asyncio.IncompleteReadError:
        raise HandshakeError("client closed the connection during the handshake") from None
    reply, keys = accept_hello(data, config)
    writer.write(reply.encode())
    await writer.drain()
    return keys
