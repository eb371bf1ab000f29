"""Replay an undefended trace through a local client/bridge pair.

A script application connects through the client proxy's SOCKS port to a
script destination behind the bridge. Once the CONNECT succeeds both share a
time origin: the application writes each outgoing packet's bytes at its
timestamp and the destination writes each incoming packet's bytes at its
timestamp. Both proxies capture every wire record.
"""
from __future__ import annotations

import asyncio
import os
from dataclasses import dataclass, field
from typing import List, Optional

from ..config import BridgeConfig, DefenseSpec
from ..trace import Direction, Trace
from . import socks
from .capture import WireCapture
from .proxy import BridgeProxy, ClientProxy

#: Lateness beyond which a scripted write counts as a schedule overrun.
OVERRUN_LIMIT = 0.010


@dataclass(frozen=True)
class ScheduleOverrun:
    side: str
    scheduled: float
    late_by: float


@dataclass
class ReplayResult:
    script: Trace
    client: WireCapture
    bridge: WireCapture
    origin: float
    overruns: List[ScheduleOverrun] = field(default_factory=list)
    app_received: int = 0
    destination_received: int = 0

    def defended_trace(self) -> Trace:
        """The client-side wire view, on the script's time axis."""
        return self.client.to_trace(self.origin)


async def _sleep_until(loop, target: float) -> None:
    delay = target - loop.time()
    if delay > 0:
        await asyncio.sleep(delay)


async def _drain(reader: asyncio.StreamReader) -> int:
    total = 0
    while True:
        data = await reader.read(65536)
        if not data:
            return total
        total += len(data)


async def replay_async(script: Trace, spec: DefenseSpec, seed: Optional[int] = None,
                       secret: Optional[bytes] = None, host: str = "127.0.0.1",
                       linger: float = 1.0, timeout: float = 600.0) -> ReplayResult:
    loop = asyncio.get_running_loop()
    config = BridgeConfig(spec, secret or os.urandom(32))
    overruns: List[ScheduleOverrun] = []
    gate = loop.create_future()
    received = {"app": 0, "destination": 0}

    async def play(writer, packets, side: str, origin: float) -> None:
        for p in packets:
            target = origin + p.timestamp
            await _sleep_until(loop, target)
            late = loop.time() - target
            if late > OVERRUN_LIMIT:
                overruns.append(ScheduleOverrun(side, p.timestamp, late))
            writer.write(bytes(p.size))
        await writer.drain()

    async def destination(reader, writer) -> None:
        origin = await gate
        drain = loop.create_task(_drain(reader))
        try:
            await play(writer, script.direction(Direction.IN), "destination", origin)
            writer.write_eof()
            received["destination"] = await drain
        except (ConnectionError, OSError):
            pass
        finally:
            writer.close()

    dest_server = await asyncio.start_server(destination, host, 0)
    dest_port = dest_server.sockets[0].getsockname()[1]
    bridge = await BridgeProxy(config, seed).start(host, 0)
    client = await ClientProxy(config, (host, bridge.port), seed, linger=linger).start(host, 0)
    origin = loop.time()
    try:
        if not len(script):
            session, _ = await client.connect_session()
            session.close()
        else:
            reader, writer = await asyncio.open_connection(host, client.port)
            await socks.connect(reader, writer, host, dest_port)
            origin = loop.time()
            gate.set_result(origin)
            app_drain = loop.create_task(_drain(reader))
            await play(writer, script.direction(Direction.OUT), "app", origin)
            writer.write_eof()
            received["app"] = await asyncio.wait_for(app_drain, timeout)
            writer.close()
        await asyncio.wait_for(_settle(client, bridge), timeout)
    finally:
        await client.close()
        await bridge.close()
        dest_server.close()
        await dest_server.wait_closed()
    return ReplayResult(script, client.captures[0], _bridge_capture(bridge), origin,
                        overruns, received["app"], received["destination"])


def _bridge_capture(bridge: BridgeProxy) -> WireCapture:
    return bridge.captures[0] if bridge.captures else WireCapture("bridge")


async def _settle(client: ClientProxy, bridge: BridgeProxy) -> None:
    while not client.sessions:
        await asyncio.sleep(0.01)
    await client.sessions[0].closed.wait()
    while bridge.sessions and not all(s.closed.is_set() for s in bridge.sessions):
        await asyncio.sleep(0.01)


def replay(script: Trace, spec: DefenseSpec, seed: Optional[int] = None, **kwargs) -> ReplayResult:
    """Blocking wrapper around :func:`replay_async`."""
    return asyncio.run(replay_async(script, spec, seed, **kwargs))
