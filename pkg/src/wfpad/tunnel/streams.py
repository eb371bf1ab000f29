"""Application streams carried in Payload cells.

In single-stream mode one session carries one stream and a payload is the
whole cell body. In multiplexed mode every payload starts with a 2-byte
stream id, leaving 512 bytes of data per cell.

Per stream, the first client payload is the open request (host length,
host, port), the first bridge payload is a one-byte SOCKS reply code, and an
empty payload ends that direction. These control payloads are logged as
``C``; everything else is application data.
"""
from __future__ import annotations

import asyncio
import struct
from typing import Callable, Dict, Optional, Tuple

from .cell import BODY_SIZE
from .session import DefenseSession


class StreamError(ValueError):
    pass


def encode_open(host: str, port: int) -> bytes:
    name = host.encode("idna")
    if not 0 < len(name) < 256:
        raise StreamError("host name must be 1..255 bytes")
    return bytes([len(name)]) + name + struct.pack(">H", port)


def decode_open(body: bytes) -> Tuple[str, int]:
    if not body or len(body) != 1 + body[0] + 2:
        raise StreamError("malformed open request")
    n = body[0]
    return body[1:1 + n].decode("idna"), struct.unpack(">H", body[1 + n:])[0]


class Stream:
    def __init__(self, mux: "StreamMux", stream_id: int):
        self.mux = mux
        self.id = stream_id
        self.inbox: asyncio.Queue = asyncio.Queue()
        self.status: asyncio.Future = asyncio.get_running_loop().create_future()
        self.local_closed = False
        self.remote_closed = False

    @property
    def finished(self) -> bool:
        return self.local_closed and self.remote_closed

    async def read(self) -> bytes:
        """Next chunk of data, or b"" once the peer finished sending."""
        return await self.inbox.get()

    def write(self, data: bytes) -> None:
        if self.local_closed:
            raise StreamError("write after close")
        step = self.mux.chunk_size
        for i in range(0, len(data), step):
            self.mux.send(self.id, data[i:i + step], "R")

    def close(self) -> None:
        if not self.local_closed:
            self.local_closed = True
            self.mux.send(self.id, b"", "C")

    def _remote_eof(self) -> None:
        if not self.remote_closed:
            self.remote_closed = True
            self.inbox.put_nowait(b"")


class StreamMux:
    def __init__(self, session: DefenseSession, multiplex: bool = False,
                 on_open: Optional[Callable[[Stream, str, int], None]] = None):
        self.session = session
        self.multiplex = multiplex
        self.on_open = on_open
        self.chunk_size = BODY_SIZE - 2 if multiplex else BODY_SIZE
        self.streams: Dict[int, Stream] = {}
        self._next_id = 0
        session.on_payload = self.dispatch
        prev_close = session.on_close

        def closed(s):
            for stream in self.streams.values():
                stream._remote_eof()
                if not stream.status.done():
                    stream.status.set_result(None)
            if prev_close:
                prev_close(s)
        session.on_close = closed

    def send(self, stream_id: int, body: bytes, kind: str) -> None:
        prefix = struct.pack(">H", stream_id) if self.multiplex else b""
        self.session.send_payload(prefix + body, kind)

    def open(self, host: str, port: int) -> Stream:
        """Client side: start a stream; await ``stream.status`` for the reply code."""
        if not self.multiplex and self.streams:
            raise StreamError("single-stream session already has a stream")
        stream = Stream(self, self._next_id)
        self._next_id += 1
        self.streams[stream.id] = stream
        self.send(stream.id, encode_open(host, port), "C")
        return stream

    def reply(self, stream: Stream, code: int) -> None:
        """Bridge side: answer an open request."""
        self.send(stream.id, bytes([code]), "C")

    def dispatch(self, payload: bytes) -> str:
        if self.multiplex:
            if len(payload) < 2:
                raise StreamError("payload without stream id")
            stream_id, body = struct.unpack(">H", payload[:2])[0], payload[2:]
        else:
            stream_id, body = 0, payload
        stream = self.streams.get(stream_id)
        is_client = self.session.machine.is_client
        if stream is None:
            if is_client or (not self.multiplex and self.streams):
                return "C"  # stray payload for an unknown stream
            stream = Stream(self, stream_id)
            self.streams[stream_id] = stream
            host, port = decode_open(body)
            if self.on_open:
                self.on_open(stream, host, port)
            return "C"
        if is_client and not stream.status.done():
            stream.status.set_result(body[0] if body else 1)
            return "C"
        if not body:
            stream._remote_eof()
            return "C"
        stream.inbox.put_nowait(body)
        return "R"


async def pump_in(reader: asyncio.StreamReader, stream: Stream) -> None:
    """Socket -> stream, closing the stream at EOF."""
    try:
        while True:
            data = await reader.read(65536)
            if not data:
                break
            stream.write(data)
    except (ConnectionError, OSError):
        pass
    finally:
        stream.close()


async def pump_out(stream: Stream, writer: asyncio.StreamWriter) -> None:
    """Stream -> socket, half-closing the socket when the stream ends."""
    try:
        while True:
            data = await stream.read()
            if not data:
                break
            writer.write(data)
            await writer.drain()
        if writer.can_write_eof():
            writer.write_eof()
    except (ConnectionError, OSError):
        pass
