"""Minimal SOCKS5: no authentication, CONNECT only."""
from __future__ import annotations

import asyncio
import ipaddress
import struct
from typing import Tuple

SUCCEEDED = 0
GENERAL_FAILURE = 1
NOT_ALLOWED = 2
NETWORK_UNREACHABLE = 3
HOST_UNREACHABLE = 4
CONNECTION_REFUSED = 5
COMMAND_NOT_SUPPORTED = 7
ADDRESS_NOT_SUPPORTED = 8


class SocksError(Exception):
    def __init__(self, message: str, reply: int = GENERAL_FAILURE):
        super().__init__(message)
        self.reply = reply


async def _read_address(reader: asyncio.StreamReader, atyp: int) -> str:
    if atyp == 1:
        return str(ipaddress.IPv4Address(await reader.readexactly(4)))
    if atyp == 4:
        return str(ipaddress.IPv6Address(await reader.readexactly(16)))
    if atyp == 3:
        n = (await reader.readexactly(1))[0]
        return (await reader.readexactly(n)).decode("idna")
    raise SocksError(f"address type {atyp}", ADDRESS_NOT_SUPPORTED)


def _encode_address(host: str) -> bytes:
    try:
        ip = ipaddress.ip_address(host)
    except ValueError:
        name = host.encode("idna")
        return bytes([3, len(name)]) + name
    return bytes([1 if ip.version == 4 else 4]) + ip.packed


async def accept_connect(reader: asyncio.StreamReader,
                         writer: asyncio.StreamWriter) -> Tuple[str, int]:
    """Server side up to the CONNECT request; the caller sends the reply."""
    try:
        ver, n = await reader.readexactly(2)
        if ver != 5:
            raise SocksError(f"SOCKS version {ver}")
        methods = await reader.readexactly(n)
        if 0 not in methods:
            writer.write(b"\x05\xff")
            raise SocksError("client offers no acceptable auth method")
        writer.write(b"\x05\x00")
        ver, cmd, _, atyp = await reader.readexactly(4)
        if cmd != 1:
            send_reply(writer, COMMAND_NOT_SUPPORTED)
            raise SocksError(f"command {cmd}", COMMAND_NOT_SUPPORTED)
        try:
            host = await _read_address(reader, atyp)
        except SocksError as exc:
            send_reply(writer, exc.reply)
            raise
        port = struct.unpack(">H", await reader.readexactly(2))[0]
    except asyncio.IncompleteReadError:
        raise SocksError("client hung up during negotiation") from None
    return host, port


def send_reply(writer: asyncio.StreamWriter, reply: int) -> None:
    writer.write(bytes([5, reply, 0, 1]) + bytes(4) + bytes(2))


async def connect(reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                  host: str, port: int) -> None:
    """Client side: ask the proxy for a CONNECT; raise on a non-zero reply."""
    writer.write(b"\x05\x01\x00")
    if await reader.readexactly(2) != b"\x05\x00":
        raise SocksError("proxy refused the auth method")
    writer.write(b"\x05\x01\x00" + _encode_address(host) + struct.pack(">H", port))
    ver, rep, _, atyp = await reader.readexactly(4)
    await _read_address(reader, atyp)
    await reader.readexactly(2)
    if rep != SUCCEEDED:
        raise SocksError(f"proxy replied {rep}", rep)
