"""SOCKS-facing client proxy and destination-dialing bridge proxy."""
from __future__ import annotations

import asyncio
import errno
import logging
import socket
from typing import List, Optional, Tuple

import numpy as np

from ..config import BridgeConfig
from ..kernel import DefenseState, Side
from . import socks
from .capture import WireCapture
from .handshake import HandshakeError, bridge_handshake, client_handshake
from .session import DefenseSession
from .streams import Stream, StreamMux, pump_in, pump_out

log = logging.getLogger(__name__)

#: Seconds without peer data or dummies before an idle client session closes.
CLIENT_LINGER = 1.0
DIAL_TIMEOUT = 10.0


class BridgeUnreachable(ConnectionError):
    pass


def parse_address(text: str, default_host: str = "127.0.0.1") -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ValueError(f"address {text!r} needs a port")
    return (host.strip("[]") or default_host), int(port)


def _session_rng(seed: Optional[int], side: Side, index: int):
    if seed is None:
        return None
    return np.random.default_rng([seed, 0 if side is Side.CLIENT else 1, index])


def reply_code(exc: BaseException) -> int:
    """SOCKS reply code for a failed destination dial."""
    if isinstance(exc, ConnectionRefusedError):
        return socks.CONNECTION_REFUSED
    if isinstance(exc, (socket.gaierror, asyncio.TimeoutError)):
        return socks.HOST_UNREACHABLE
    if isinstance(exc, OSError) and exc.errno == errno.ENETUNREACH:
        return socks.NETWORK_UNREACHABLE
    if isinstance(exc, OSError) and exc.errno == errno.EHOSTUNREACH:
        return socks.HOST_UNREACHABLE
    return socks.GENERAL_FAILURE


class _Proxy:
    side: Side

    def __init__(self, config: BridgeConfig, seed: Optional[int] = None):
        self.config = config
        self.seed = seed
        self.captures: List[WireCapture] = []
        self.sessions: List[DefenseSession] = []
        self.server: Optional[asyncio.base_events.Server] = None
        self._tasks = set()

    def _spawn(self, coro) -> asyncio.Task:
        task = asyncio.get_running_loop().create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)
        return task

    def _new_session(self, reader, writer, keys, origin=None) -> DefenseSession:
        index = len(self.sessions)
        machine = self.config.defense.make_machine(self.side, _session_rng(self.seed, self.side, index))
        capture = WireCapture(self.side.value)
        session = DefenseSession(machine, reader, writer, keys, capture, origin=origin)
        self.sessions.append(session)
        self.captures.append(capture)
        return session

    @property
    def port(self) -> int:
        return self.server.sockets[0].getsockname()[1]

    async def start(self, host: str, port: int) -> "_Proxy":
        self.server = await asyncio.start_server(self._handle, host, port)
        return self

    async def close(self) -> None:
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()
        for session in self.sessions:
            session.close()
        for task in list(self._tasks):
            task.cancel()

    def write_captures(self, path) -> None:
        with open(path, "a", encoding="utf-8") as out:
            for i, capture in enumerate(self.captures):
                capture.dump(out, session=i)

    async def _handle(self, reader, writer):
        raise NotImplementedError


class BridgeProxy(_Proxy):
    """Accepts client sessions and dials the destinations they request."""

    side = Side.BRIDGE

    async def _handle(self, reader, writer) -> None:
        try:
            keys = await bridge_handshake(reader, writer, self.config)
        except (HandshakeError, ConnectionError, OSError) as exc:
            # reject without saying why
            log.info("bridge rejected a client: %s", exc)
            writer.close()
            return
        session = self._new_session(reader, writer, keys)
        mux = StreamMux(session, self.config.multiplex)
        mux.on_open = lambda stream, host, port: self._spawn(self._serve_stream(mux, stream, host, port))
        session.start()
        await session.closed.wait()

    async def _serve_stream(self, mux: StreamMux, stream: Stream, host: str, port: int) -> None:
        try:
            dest_reader, dest_writer = await asyncio.wait_for(
                asyncio.open_connection(host, port), DIAL_TIMEOUT)
        except (OSError, asyncio.TimeoutError) as exc:
            log.info("destination %s:%d unreachable: %s", host, port, exc)
            mux.reply(stream, reply_code(exc))
            stream.local_closed = True
            return
        mux.reply(stream, socks.SUCCEEDED)
        try:
            await asyncio.gather(pump_in(dest_reader, stream), pump_out(stream, dest_writer))
        finally:
            dest_writer.close()


class ClientProxy(_Proxy):
    """Local SOCKS5 listener tunnelling each CONNECT through the bridge."""

    side = Side.CLIENT

    def __init__(self, config: BridgeConfig, bridge: Tuple[str, int], seed: Optional[int] = None,
                 linger: float = CLIENT_LINGER):
        super().__init__(config, seed)
        self.bridge = bridge
        self.linger = linger
        self._shared: Optional[Tuple[DefenseSession, StreamMux]] = None
        self._shared_lock = asyncio.Lock()

    async def connect_session(self, origin=None) -> Tuple[DefenseSession, StreamMux]:
        try:
            reader, writer = await asyncio.wait_for(asyncio.open_connection(*self.bridge), DIAL_TIMEOUT)
        except (OSError, asyncio.TimeoutError) as exc:
            raise BridgeUnreachable(f"cannot reach bridge {self.bridge[0]}:{self.bridge[1]}: {exc}") from None
        try:
            keys = await client_handshake(reader, writer, self.config.defense, self.config.secret)
        except BaseException:
            writer.close()
            raise
        session = self._new_session(reader, writer, keys, origin)
        mux = StreamMux(session, self.config.multiplex)
        session.start()
        return session, mux

    async def _session_for_stream(self) -> Tuple[DefenseSession, StreamMux]:
        if not self.config.multiplex:
            return await self.connect_session()
        async with self._shared_lock:
            if self._shared is None or self._shared[0].closed.is_set():
                self._shared = await self.connect_session()
            return self._shared

    async def open_stream(self, host: str, port: int) -> Tuple[Stream, DefenseSession, int]:
        session, mux = await self._session_for_stream()
        stream = mux.open(host, port)
        code = await stream.status
        return stream, session, socks.GENERAL_FAILURE if code is None else code

    async def _handle(self, reader, writer) -> None:
        try:
            host, port = await socks.accept_connect(reader, writer)
        except socks.SocksError as exc:
            log.info("SOCKS negotiation failed: %s", exc)
            writer.close()
            return
        try:
            stream, session, code = await self.open_stream(host, port)
        except BridgeUnreachable as exc:
            log.warning("%s", exc)
            socks.send_reply(writer, socks.GENERAL_FAILURE)
            writer.close()
            return
        except HandshakeError as exc:
            log.warning("handshake with bridge failed: %s", exc)
            socks.send_reply(writer, socks.NOT_ALLOWED)
            writer.close()
            return
        socks.send_reply(writer, code)
        if code != socks.SUCCEEDED:
            writer.close()
            stream.local_closed = True
            if not self.config.multiplex:
                await self.linger_close(session)
            return
        try:
            await asyncio.gather(pump_in(reader, stream), pump_out(stream, writer))
        finally:
            writer.close()
        if not self.config.multiplex:
            await self.linger_close(session)

    async def linger_close(self, session: DefenseSession, poll: float = 0.05) -> None:
        """Close once the defense has stopped and the bridge went quiet."""
        loop = asyncio.get_running_loop()
        while not session.closed.is_set():
            idle = loop.time() - session.last_peer_activity
            if session.state is DefenseState.STOP and idle >= self.linger:
                session.close()
                break
            await asyncio.sleep(poll)
