"""One defense session over one sealed connection.

The session owns a FIFO of outgoing payload cells. Every queued payload is
announced to the machine as a real cell; each ``SendReal`` the machine emits
pops the FIFO head. Timers run on the event loop at absolute deadlines
computed from the event that armed them, so periodic schedules do not drift.
All machine calls happen on the loop thread, one at a time.
"""
from __future__ import annotations

import asyncio
import logging
from collections import deque
from typing import Callable, Optional

from ..kernel import (
    ALL_TIMERS, ArmTimer, CancelTimer, DefenseMachine, DefenseState, EnterState,
    KernelError, PeerSignal, RealPacketQueued, SendDummy, SendReal, SendSignal,
    TimerFired, WindowTick,
)
from ..randomwt import DuplexRole, SendWhileWalkie, SwitchRole
from .capture import WireCapture
from .cell import Cell, CellType, decode_cell, encode_cell
from .handshake import SessionKeys
from .seal import AuthenticationFailure

log = logging.getLogger(__name__)


class DefenseSession:
    def __init__(self, machine: DefenseMachine, reader: asyncio.StreamReader,
                 writer: asyncio.StreamWriter, keys: SessionKeys,
                 capture: Optional[WireCapture] = None,
                 on_payload: Optional[Callable[[bytes], str]] = None,
                 on_close: Optional[Callable[["DefenseSession"], None]] = None,
                 origin: Optional[float] = None):
        self.machine = machine
        self.reader = reader
        self.writer = writer
        self.send_sealer, self.recv_sealer = keys.sealers(machine.is_client)
        self.record_size = self.send_sealer.record_size
        self.capture = capture if capture is not None else WireCapture(machine.side.value)
        self.on_payload = on_payload
        self.on_close = on_close
        self.loop = asyncio.get_running_loop()
        self.origin = self.loop.time() if origin is None else origin
        self.role = getattr(machine, "role", None)
        self.fifo = deque()
        self.error: Optional[BaseException] = None
        self.closed = asyncio.Event()
        self.last_peer_activity = self.loop.time()
        self._timers = {}
        self._tasks = []

    # -- time

    def now(self) -> float:
        return max(self.loop.time() - self.origin, self.machine.last_t)

    # -- lifecycle

    def start(self) -> None:
        self._apply(0.0, self.machine.open(self.now()))
        self._tasks.append(self.loop.create_task(self._read_loop()))
        if self.machine.is_client:
            self._schedule_tick(1)

    def close(self) -> None:
        if self.closed.is_set():
            return
        self.closed.set()
        for handle in self._timers.values():
            handle.cancel()
        self._timers.clear()
        for task in self._tasks:
            if task is not asyncio.current_task():
                task.cancel()
        self.writer.close()
        if self.on_close is not None:
            self.on_close(self)

    def fail(self, exc: BaseException) -> None:
        log.warning("%s session torn down: %s", self.machine.side.value, exc)
        self.error = exc
        self.close()

    @property
    def state(self) -> DefenseState:
        return self.machine.state

    # -- outgoing

    def send_payload(self, payload: bytes, kind: str = "R") -> None:
        """Queue one payload cell and tell the machine a real cell is waiting."""
        if self.closed.is_set():
            return
        self.fifo.append((bytes(payload), kind))
        self._step(RealPacketQueued(self.now(), self.machine.direction))

    def _write(self, cell: Cell, kind: str) -> None:
        if self.closed.is_set():
            return
        if self.role is DuplexRole.WALKIE:
            raise SendWhileWalkie(f"{self.machine.side.value} sent while Walkie")
        record = self.send_sealer.seal(encode_cell(cell))
        self.writer.write(record)
        self.capture.record(self.loop.time(), self.machine.direction, len(record), kind, True)

    # -- machine plumbing

    def _step(self, event) -> None:
        if self.closed.is_set():
            return
        try:
            self._apply(event.t, self.machine.step(event))
        except KernelError as exc:
            self.fail(exc)

    def _apply(self, t: float, actions) -> None:
        for action in actions:
            if isinstance(action, SendReal):
                payload, kind = self.fifo.popleft()
                self._write(Cell.data(payload), kind)
            elif isinstance(action, SendDummy):
                self._write(Cell.dummy(), "D")
            elif isinstance(action, SendSignal):
                self._write(Cell.signal(action.kind), "S")
            elif isinstance(action, ArmTimer):
                self._cancel_timer(action.timer_id)
                deadline = t + action.delay
                self._timers[action.timer_id] = self.loop.call_at(
                    self.origin + deadline, self._fire, action.timer_id, deadline)
            elif isinstance(action, CancelTimer):
                if action.timer_id == ALL_TIMERS:
                    for timer_id in list(self._timers):
                        self._cancel_timer(timer_id)
                else:
                    self._cancel_timer(action.timer_id)
            elif isinstance(action, EnterState):
                self.capture.mark(self.loop.time(), action.state)
            elif isinstance(action, SwitchRole):
                self.role = action.role

    def _cancel_timer(self, timer_id) -> None:
        handle = self._timers.pop(timer_id, None)
        if handle is not None:
            handle.cancel()

    def _fire(self, timer_id, deadline: float) -> None:
        self._timers.pop(timer_id, None)
        self._step(TimerFired(max(deadline, self.machine.last_t), timer_id))

    def _schedule_tick(self, k: int) -> None:
        deadline = k * self.machine.kernel.tick_interval
        self._timers[("tick", k)] = self.loop.call_at(self.origin + deadline, self._tick, k, deadline)

    def _tick(self, k: int, deadline: float) -> None:
        self._timers.pop(("tick", k), None)
        self._step(WindowTick(max(deadline, self.machine.last_t)))
        if not self.closed.is_set():
            self._schedule_tick(k + 1)

    # -- incoming

    async def _read_loop(self) -> None:
        try:
            while True:
                record = await self.reader.readexactly(self.record_size)
                cell = decode_cell(self.recv_sealer.open(record))
                self._on_cell(cell, len(record))
                if self.closed.is_set():
                    return
        except asyncio.IncompleteReadError:
            self.close()
        except (AuthenticationFailure, ValueError, ConnectionError, OSError) as exc:
            self.fail(exc)

    def _on_cell(self, cell: Cell, length: int) -> None:
        peer = self.machine.direction.opposite
        t_loop = self.loop.time()
        if cell.type is CellType.PAYLOAD:
            self.last_peer_activity = t_loop
            kind = self.on_payload(cell.payload) if self.on_payload else "R"
            self.capture.record(t_loop, peer, length, kind or "R", False)
            self._step(RealPacketQueued(self.now(), peer))
        elif cell.type is CellType.DUMMY:
            self.last_peer_activity = t_loop
            self.capture.record(t_loop, peer, length, "D", False)
        else:
            self.capture.record(t_loop, peer, length, "S", False)
            self._step(PeerSignal(self.now(), cell.signal_kind))
