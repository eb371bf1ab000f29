"""Deterministic discrete-event driver for defense machines.

Runs a client machine and a bridge machine against each other in virtual
time, with a fixed one-way latency between them. Timers, window ticks and
signal delivery all go through one heap ordered by (time, sequence), so a
run is a pure function of its inputs and RNG seeds.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Iterable, List, Optional

from .kernel import (
    ALL_TIMERS, ArmTimer, CancelTimer, DefenseMachine, DefenseState, EnterState,
    PeerSignal, RealPacketQueued, SendDummy, SendReal, SendSignal, SignalKind,
    TimerFired, WindowTick,
)
from .trace import Direction, Kind, Packet, Trace


@dataclass(frozen=True)
class Emission:
    t: float
    side: str          # "client" or "bridge"
    kind: str          # "real", "dummy" or "signal"
    size: int = 0
    signal: Optional[SignalKind] = None


@dataclass(frozen=True)
class StateChange:
    t: float
    side: str
    state: DefenseState


class _Endpoint:
    def __init__(self, machine: DefenseMachine):
        self.machine = machine
        self.timer_gen = {}
        self.gen = 0


class PairSimulation:
    """Client/bridge pair exchanging cells over a fixed-latency link."""

    def __init__(self, client: DefenseMachine, bridge: DefenseMachine,
                 latency: float = 0.0, tick: bool = True):
        self.latency = latency
        self.tick = tick
        self.ends = {"client": _Endpoint(client), "bridge": _Endpoint(bridge)}
        self.emissions: List[Emission] = []
        self.states: List[StateChange] = []
        self.actions: List[tuple] = []
        self._heap = []
        self._seq = itertools.count()

    def _push(self, t: float, side: str, event) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), side, event))

    def schedule(self, side: str, events: Iterable) -> None:
        for event in events:
            self._push(event.t, side, event)

    def _apply(self, t: float, side: str, actions) -> None:
        end = self.ends[side]
        peer = "bridge" if side == "client" else "client"
        for action in actions:
            self.actions.append((t, side, action))
            if isinstance(action, SendReal):
                self.emissions.append(Emission(t, side, "real", action.size))
                self._push(t + self.latency, peer,
                           RealPacketQueued(t + self.latency, end.machine.direction, action.size))
            elif isinstance(action, SendDummy):
                self.emissions.append(Emission(t, side, "dummy"))
            elif isinstance(action, SendSignal):
                self.emissions.append(Emission(t, side, "signal", signal=action.kind))
                self._push(t + self.latency, peer, PeerSignal(t + self.latency, action.kind))
            elif isinstance(action, ArmTimer):
                end.gen += 1
                end.timer_gen[action.timer_id] = end.gen
                self._push(t + action.delay, side, ("timer", action.timer_id, end.gen))
            elif isinstance(action, CancelTimer):
                if action.timer_id == ALL_TIMERS:
                    end.timer_gen.clear()
                else:
                    end.timer_gen.pop(action.timer_id, None)
            elif isinstance(action, EnterState):
                self.states.append(StateChange(t, side, action.state))

    def run(self, until: float) -> "PairSimulation":
        for side, end in self.ends.items():
            self._apply(0.0, side, end.machine.open(0.0))
        if self.tick:
            interval = self.ends["client"].machine.kernel.tick_interval
            k = 1
            while k * interval <= until:
                self._push(k * interval, "client", WindowTick(k * interval))
                k += 1
        while self._heap:
            t, _, side, event = heapq.heappop(self._heap)
            if t > until:
                break
            end = self.ends[side]
            if isinstance(event, tuple):
                _, timer_id, gen = event
                if end.timer_gen.get(timer_id) != gen:
                    continue
                del end.timer_gen[timer_id]
                event = TimerFired(t, timer_id)
            self._apply(t, side, end.machine.step(event))
        return self

    def to_trace(self, cell_size: int = 514) -> Trace:
        """Observer view of the run; signal cells are counted as dummies."""
        packets = []
        for e in self.emissions:
            direction = Direction.OUT if e.side == "client" else Direction.IN
            kind = Kind.REAL if e.kind == "real" else Kind.DUMMY
            size = e.size if e.kind == "real" else cell_size
            packets.append(Packet(e.t, direction, size, kind))
        return Trace(packets)


def emulate(trace: Trace, client: DefenseMachine, bridge: DefenseMachine,
            latency: float = 0.0, linger: float = 30.0) -> PairSimulation:
    """Feed an undefended trace through a machine pair in virtual time.

    Outgoing packets are queued at the client at their timestamps, incoming
    packets at the bridge. The run continues ``linger`` seconds past the last
    packet so padding can finish.
    """
    sim = PairSimulation(client, bridge, latency)
    for p in trace.real():
        side = "client" if p.direction is Direction.OUT else "bridge"
        sim.schedule(side, [RealPacketQueued(p.timestamp, p.direction, p.size)])
    end = trace[-1].timestamp if len(trace) else 0.0
    return sim.run(end + linger)
