"""Random-WT: half-duplex turn taking with padded real bursts and fake bursts."""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import List, Optional

from .kernel import (
    Action, DefenseMachine, DefenseState, IllegalEvent, KernelError, PeerSignal,
    RealPacketQueued, SendDummy, SendReal, SendSignal, SignalKind, TimerFired, as_rng,
)
from .trace import Direction

TALKIE_TIMER = "talkie"

#: A real burst ends when upstream stays silent this long.
BURST_QUANTUM = 0.010


class SendWhileWalkie(KernelError):
    pass


class DuplexRole(enum.Enum):
    TALKIE = "talkie"
    WALKIE = "walkie"


class BurstKind(enum.Enum):
    REAL_PADDED = "real"
    FAKE = "fake"


@dataclass(frozen=True)
class SwitchRole:
    role: DuplexRole


@dataclass(frozen=True)
class Burst:
    direction: Direction
    real_count: int
    dummy_count: int
    kind: BurstKind

    def __post_init__(self):
        if self.kind is BurstKind.FAKE and self.real_count != 0:
            raise ValueError("fake bursts carry no real cells")
        if self.kind is BurstKind.REAL_PADDED and self.real_count < 1:
            raise ValueError("a real burst needs at least one real cell")

    @property
    def size(self) -> int:
        return self.real_count + self.dummy_count


@dataclass(frozen=True)
class RandomWtConfig:
    n_real_out: int = 4
    n_real_in: int = 45
    n_fake_out: int = 8
    n_fake_in: int = 90
    p_fake: float = 0.4
    t_talkie: float = 0.5

    def __post_init__(self):
        if min(self.n_real_out, self.n_real_in, self.n_fake_out, self.n_fake_in) < 0:
            raise ValueError("padding maxima must be >= 0")
        if not 0 <= self.p_fake <= 1:
            raise ValueError("p_fake must lie in [0, 1]")
        if not self.t_talkie > 0:
            raise ValueError("t_talkie must be positive")

    def n_real(self, side: Direction) -> int:
        return self.n_real_out if side is Direction.OUT else self.n_real_in

    def n_fake(self, side: Direction) -> int:
        return self.n_fake_out if side is Direction.OUT else self.n_fake_in

    def to_params(self) -> dict:
        return {
            "randomwt.n_real_out": self.n_real_out,
            "randomwt.n_real_in": self.n_real_in,
            "randomwt.n_fake_out": self.n_fake_out,
            "randomwt.n_fake_in": self.n_fake_in,
            "randomwt.p_fake": self.p_fake,
            "randomwt.t_talkie_ms": self.t_talkie * 1000,
        }

    @classmethod
    def from_params(cls, params: dict) -> "RandomWtConfig":
        d = cls()
        return cls(
            n_real_out=int(params.get("randomwt.n_real_out", d.n_real_out)),
            n_real_in=int(params.get("randomwt.n_real_in", d.n_real_in)),
            n_fake_out=int(params.get("randomwt.n_fake_out", d.n_fake_out)),
            n_fake_in=int(params.get("randomwt.n_fake_in", d.n_fake_in)),
            p_fake=float(params.get("randomwt.p_fake", d.p_fake)),
            t_talkie=float(params.get("randomwt.t_talkie_ms", d.t_talkie * 1000)) / 1000,
        )


def pad_real_burst(real_count: int, side: Direction, config: RandomWtConfig, rng) -> Burst:
    rng = as_rng(rng)
    dummies = int(rng.integers(0, config.n_real(side), endpoint=True))
    return Burst(side, real_count, dummies, BurstKind.REAL_PADDED)


def maybe_fake_burst(side: Direction, config: RandomWtConfig, rng) -> Optional[Burst]:
    rng = as_rng(rng)
    if rng.random() >= config.p_fake:
        return None
    size = int(rng.integers(0, config.n_fake(side), endpoint=True))
    return Burst(side, 0, size, BurstKind.FAKE)


class RandomWtMachine(DefenseMachine):
    """Random-WT state machine (Stop, Ready, Start) plus the duplex token.

    The client starts as Talkie. A Talkie sends its real cells immediately
    and re-arms :data:`TALKIE_TIMER` for one burst quantum after each; when
    the timer fires the burst is over, so it is padded (Start only) and the
    token passed with an EndBurst signal. A Talkie that receives the token
    with nothing to send may send one fake burst (Start only); otherwise it
    waits ``t_talkie`` before handing the token back.

    Walkie endpoints buffer real cells and defer their own StartPad/StopPad
    signals until they hold the token again.
    """

    name = "randomwt"

    def __init__(self, side, config: RandomWtConfig = None, kernel=None, rng=None):
        super().__init__(side, kernel, rng)
        self.config = config or RandomWtConfig()
        self.role = DuplexRole.TALKIE if self.is_client else DuplexRole.WALKIE
        self.pending = deque()
        self.burst_real = 0
        self._deferred_signals = []

    def open(self, t: float) -> List[Action]:
        super().open(t)
        if self.role is DuplexRole.TALKIE:
            return [self._arm(TALKIE_TIMER, self.config.t_talkie)]
        return []

    def ensure_may_send(self) -> None:
        if self.role is not DuplexRole.TALKIE:
            raise SendWhileWalkie(f"{self.side.value} tried to send while Walkie")

    def _signal(self, kind: SignalKind) -> List[Action]:
        if self.role is DuplexRole.TALKIE:
            return [SendSignal(kind)]
        self._deferred_signals.append(kind)
        return []

    def _forward_real(self, event: RealPacketQueued) -> List[Action]:
        if event.direction is not self.direction:
            return []
        if self.role is DuplexRole.WALKIE:
            self.pending.append(event.size)
            return []
        self.burst_real += 1
        return [SendReal(event.size), self._arm(TALKIE_TIMER, BURST_QUANTUM)]

    def _enter_start(self, t: float) -> List[Action]:
        actions = self._signal(SignalKind.START_PAD)
        actions.append(self._enter(DefenseState.START, t))
        return actions

    def _on_quiet(self, t: float) -> List[Action]:
        actions = self._signal(SignalKind.STOP_PAD)
        actions.append(self._enter(DefenseState.STOP, t))
        return actions

    def _bridge_stop(self, t: float) -> List[Action]:
        # the duplex timer is protocol state, not padding: keep it
        return [self._enter(DefenseState.STOP, t)]

    def _on_signal(self, event: PeerSignal) -> List[Action]:
        if event.kind is SignalKind.END_BURST:
            return self._take_token(event)
        return super()._on_signal(event)

    def _hand_over(self) -> List[Action]:
        self.role = DuplexRole.WALKIE
        self.burst_real = 0
        return [SendSignal(SignalKind.END_BURST), SwitchRole(DuplexRole.WALKIE)]

    def _take_token(self, event: PeerSignal) -> List[Action]:
        if self.role is DuplexRole.TALKIE:
            raise IllegalEvent(self.state, event)
        self.role = DuplexRole.TALKIE
        actions: List[Action] = [SwitchRole(DuplexRole.TALKIE)]
        actions.extend(SendSignal(k) for k in self._deferred_signals)
        self._deferred_signals.clear()
        if self.pending:
            actions.extend(SendReal(size) for size in self.pending)
            self.burst_real = len(self.pending)
            self.pending.clear()
            actions.append(self._arm(TALKIE_TIMER, BURST_QUANTUM))
            return actions
        if self.state is DefenseState.START:
            fake = maybe_fake_burst(self.direction, self.config, self.rng)
            if fake is not None:
                actions.extend(SendDummy() for _ in range(fake.dummy_count))
                actions.extend(self._hand_over())
                return actions
        actions.append(self._arm(TALKIE_TIMER, self.config.t_talkie))
        return actions

    def _on_timer(self, event: TimerFired) -> List[Action]:
        if event.timer_id != TALKIE_TIMER or self.role is not DuplexRole.TALKIE:
            return []
        return self.talkie_timeout(event.t)

    def talkie_timeout(self, t: float) -> List[Action]:
        """End of the current turn: pad the finished real burst, pass the token."""
        actions: List[Action] = []
        if self.burst_real and self.state is DefenseState.START:
            burst = pad_real_burst(self.burst_real, self.direction, self.config, self.rng)
            actions.extend(SendDummy() for _ in range(burst.dummy_count))
        actions.extend(self._hand_over())
        return actions


def talkie_timeout(machine: RandomWtMachine, t: float) -> List[Action]:
    return machine.talkie_timeout(t)


def randomwt_transition(machine: RandomWtMachine, event) -> List[Action]:
    return machine.step(event)
