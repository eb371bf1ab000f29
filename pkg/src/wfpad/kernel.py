"""Shared state-machine engine for the padding defenses.

Every defense is a :class:`DefenseMachine` that consumes :data:`Event` values
in non-decreasing time order and returns a list of :data:`Action` values for
the runtime (tunnel or event simulator) to carry out. Machines never touch
sockets or clocks themselves, so the same object drives both the loopback
tunnel and the deterministic tests.

Client machines move through Stop -> Ready -> Start (-> Padding) on their own,
using a sliding count of real packets. Bridge machines only follow the
client's StartPad/StopPad signals.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .trace import Direction

#: Application bytes carried by one cell.
CELL_PAYLOAD = 514

#: Timer id that matches every armed timer in :class:`CancelTimer`.
ALL_TIMERS = "*"


class KernelError(Exception):
    pass


class TimeRegression(KernelError):
    def __init__(self, t: float, last: float):
        super().__init__(f"time went backwards: {t} < {last}")


class IllegalEvent(KernelError):
    def __init__(self, state, event):
        self.state = state
        self.event = event
        super().__init__(f"{event!r} is illegal in state {state.name}")


class DefenseState(enum.Enum):
    STOP = "Stop"
    READY = "Ready"
    START = "Start"
    PADDING = "Padding"


class SignalKind(enum.IntEnum):
    START_PAD = 1
    STOP_PAD = 2
    END_BURST = 3


class Side(enum.Enum):
    CLIENT = "client"
    BRIDGE = "bridge"

    @property
    def direction(self) -> Direction:
        """Direction of the cells this side sends."""
        return Direction.OUT if self is Side.CLIENT else Direction.IN


# -- events -----------------------------------------------------------------

@dataclass(frozen=True)
class RealPacketQueued:
    """A real cell seen by the machine.

    When ``direction`` is the machine's own sending direction the cell is
    waiting to be sent; otherwise it was just received from the peer and only
    feeds the window counter.
    """
    t: float
    direction: Direction
    size: int = CELL_PAYLOAD


@dataclass(frozen=True)
class WindowTick:
    t: float


@dataclass(frozen=True)
class TimerFired:
    t: float
    timer_id: object


@dataclass(frozen=True)
class PeerSignal:
    t: float
    kind: SignalKind


Event = Union[RealPacketQueued, WindowTick, TimerFired, PeerSignal]


# -- actions ----------------------------------------------------------------

@dataclass(frozen=True)
class SendReal:
    size: int = CELL_PAYLOAD


@dataclass(frozen=True)
class SendDummy:
    pass


@dataclass(frozen=True)
class SendSignal:
    kind: SignalKind


@dataclass(frozen=True)
class ArmTimer:
    timer_id: object
    delay: float


@dataclass(frozen=True)
class CancelTimer:
    timer_id: object


@dataclass(frozen=True)
class EnterState:
    state: DefenseState


Action = Union[SendReal, SendDummy, SendSignal, ArmTimer, CancelTimer, EnterState]


# -- sliding window -----------------------------------------------------------

class WindowCounter:
    """Counts real packets with timestamps in ``(t - window, t]``."""

    def __init__(self, window: float = 1.0):
        if window <= 0:
            raise ValueError("window must be positive")
        self.window = window
        self._events = deque()
        self._last = float("-inf")

    def _advance(self, t: float) -> None:
        if t < self._last:
            raise TimeRegression(t, self._last)
        self._last = t
        cutoff = t - self.window
        events = self._events
        while events and events[0] <= cutoff:
            events.popleft()

    def record(self, t: float) -> None:
        self._advance(t)
        self._events.append(t)

    def query(self, t: float) -> int:
        self._advance(t)
        return len(self._events)

    def __len__(self) -> int:
        return len(self._events)


def window_update(counter: WindowCounter, t: float) -> int:
    return counter.query(t)


# -- engine -------------------------------------------------------------------

@dataclass(frozen=True)
class KernelConfig:
    window: float = 1.0
    start_threshold: int = 2
    stop_threshold: int = 1
    tick_interval: float = 0.1

    def __post_init__(self):
        if self.window <= 0 or self.tick_interval <= 0:
            raise ValueError("window and tick_interval must be positive")
        if self.stop_threshold >= self.start_threshold:
            raise ValueError("stop_threshold must be below start_threshold")


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class DefenseMachine:
    """Base engine holding the transitions all three defenses share.

    Subclasses fill in the hooks ``_begin_padding``, ``_on_quiet`` and
    ``_on_timer`` and may override ``_forward_real``.
    """

    name = "none"

    def __init__(self, side: Side, kernel: Optional[KernelConfig] = None, rng=None):
        self.side = side
        self.kernel = kernel or KernelConfig()
        self.rng = as_rng(rng)
        self.state = DefenseState.STOP
        self.counter = WindowCounter(self.kernel.window)
        self.entered_at = 0.0
        self.last_t = 0.0
        self._armed = set()

    @property
    def direction(self) -> Direction:
        return self.side.direction

    @property
    def is_client(self) -> bool:
        return self.side is Side.CLIENT

    # helpers used by subclasses; they keep the armed-timer set honest
    def _arm(self, timer_id, delay: float) -> ArmTimer:
        self._armed.add(timer_id)
        return ArmTimer(timer_id, delay)

    def _cancel(self, timer_id) -> CancelTimer:
        if timer_id == ALL_TIMERS:
            self._armed.clear()
        else:
            self._armed.discard(timer_id)
        return CancelTimer(timer_id)

    def _enter(self, state: DefenseState, t: float) -> EnterState:
        self.state = state
        self.entered_at = t
        return EnterState(state)

    def _dwelled(self, t: float) -> bool:
        # the window count is only meaningful once a full window has passed
        # since the current state was entered
        return t - self.entered_at >= self.kernel.window

    def open(self, t: float) -> List[Action]:
        """Called once by the runtime when the session is established."""
        self.last_t = t
        return []

    def step(self, event: Event) -> List[Action]:
        t = event.t
        if t < self.last_t:
            raise TimeRegression(t, self.last_t)
        self.last_t = t
        if isinstance(event, RealPacketQueued):
            self.counter.record(t)
            return self._on_real(event)
        if isinstance(event, WindowTick):
            if not self.is_client:
                self.counter.query(t)
                return []
            return self._on_tick(event)
        if isinstance(event, TimerFired):
            if event.timer_id not in self._armed:
                return []  # stale: cancelled before it fired
            self._armed.discard(event.timer_id)
            return self._on_timer(event)
        if isinstance(event, PeerSignal):
            return self._on_signal(event)
        raise TypeError(f"not a kernel event: {event!r}")

    # -- shared transitions

    def _forward_real(self, event: RealPacketQueued) -> List[Action]:
        if event.direction is self.direction:
            return [SendReal(event.size)]
        return []

    def _on_real(self, event: RealPacketQueued) -> List[Action]:
        if not self.is_client:
            return self._forward_real(event)
        state = self.state
        if state is DefenseState.STOP:
            actions = self._forward_real(event)
            actions.append(self._enter(DefenseState.READY, event.t))
            actions.extend(self._on_ready(event.t))
            return actions
        if state is DefenseState.READY:
            actions = self._forward_real(event)
            if self.counter.query(event.t) >= self.kernel.start_threshold:
                actions.extend(self._enter_start(event.t))
            return actions
        return self._forward_real(event)

    def _on_tick(self, event: WindowTick) -> List[Action]:
        t = event.t
        n = self.counter.query(t)
        state = self.state
        if state is DefenseState.READY:
            if n >= self.kernel.start_threshold:
                return self._enter_start(t)
            if n <= self.kernel.stop_threshold and self._dwelled(t):
                return [self._enter(DefenseState.STOP, t)]
        elif state is DefenseState.START:
            if n <= self.kernel.stop_threshold and self._dwelled(t):
                return self._on_quiet(t)
        return []

    def _enter_start(self, t: float) -> List[Action]:
        actions = [SendSignal(SignalKind.START_PAD), self._enter(DefenseState.START, t)]
        actions.extend(self._begin_padding(t))
        return actions

    def _on_signal(self, event: PeerSignal) -> List[Action]:
        if self.is_client:
            raise IllegalEvent(self.state, event)
        return self.bridge_mirror(event)

    def bridge_mirror(self, event: PeerSignal) -> List[Action]:
        """Bridge reaction to a StartPad/StopPad signal from the client."""
        kind, state = event.kind, self.state
        if kind is SignalKind.START_PAD:
            if state is not DefenseState.STOP:
                raise IllegalEvent(state, event)
            actions: List[Action] = [self._enter(DefenseState.START, event.t)]
            actions.extend(self._begin_padding(event.t))
            return actions
        if kind is SignalKind.STOP_PAD:
            if state is DefenseState.STOP:
                return []
            return self._bridge_stop(event.t)
        raise IllegalEvent(state, event)

    def _bridge_stop(self, t: float) -> List[Action]:
        return [self._cancel(ALL_TIMERS), self._enter(DefenseState.STOP, t)]

    # -- hooks

    def _on_ready(self, t: float) -> List[Action]:
        return []

    def _begin_padding(self, t: float) -> List[Action]:
        return []

    def _on_quiet(self, t: float) -> List[Action]:
        return [self._cancel(ALL_TIMERS), SendSignal(SignalKind.STOP_PAD),
                self._enter(DefenseState.STOP, t)]

    def _on_timer(self, event: TimerFired) -> List[Action]:
        return []


class NoDefense(DefenseMachine):
    """Pass-through machine: forwards real cells, never pads or signals."""

    name = "none"

    def _on_real(self, event: RealPacketQueued) -> List[Action]:
        return self._forward_real(event)

    def _on_tick(self, event: WindowTick) -> List[Action]:
        return []

    def _on_signal(self, event: PeerSignal) -> List[Action]:
        raise IllegalEvent(self.state, event)


def step(machine: DefenseMachine, event: Event) -> List[Action]:
    return machine.step(event)
