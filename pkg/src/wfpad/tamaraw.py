"""Tamaraw: constant-rate cells in both directions, padded to a multiple of L."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import List

from .kernel import (
    Action, DefenseMachine, DefenseState, PeerSignal,
    RealPacketQueued, SendDummy, SendReal, SendSignal, SignalKind, TimerFired,
)

SLOT_TIMER = "slot"


@dataclass(frozen=True)
class TamarawConfig:
    rho_out: float = 0.012  # seconds between client cells
    rho_in: float = 0.004   # seconds between bridge cells
    L: int = 200

    def __post_init__(self):
        if not (self.rho_out > 0 and self.rho_in > 0):
            raise ValueError("rho_out and rho_in must be positive")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")

    def to_params(self) -> dict:
        return {
            "tamaraw.rho_out_ms": self.rho_out * 1000,
            "tamaraw.rho_in_ms": self.rho_in * 1000,
            "tamaraw.L": self.L,
        }

    @classmethod
    def from_params(cls, params: dict) -> "TamarawConfig":
        d = cls()
        return cls(
            rho_out=float(params.get("tamaraw.rho_out_ms", d.rho_out * 1000)) / 1000,
            rho_in=float(params.get("tamaraw.rho_in_ms", d.rho_in * 1000)) / 1000,
            L=int(params.get("tamaraw.L", d.L)),
        )


class TamarawMachine(DefenseMachine):
    """Tamaraw state machine (Stop, Ready, Start, Padding).

    ``n_total`` counts the cells this side sent since the episode began: the
    Stop->Ready transition on the client, StartPad receipt on the bridge.
    In Start and Padding real cells wait in ``queue`` for the next slot.
    """

    name = "tamaraw"

    def __init__(self, side, config: TamarawConfig = None, kernel=None, rng=None):
        super().__init__(side, kernel, rng)
        self.config = config or TamarawConfig()
        self.n_total = 0
        self.queue = deque()

    @property
    def rho(self) -> float:
        return self.config.rho_out if self.is_client else self.config.rho_in

    def _shaping(self) -> bool:
        return self.state in (DefenseState.START, DefenseState.PADDING)

    def _forward_real(self, event: RealPacketQueued) -> List[Action]:
        if event.direction is not self.direction:
            return []
        if self._shaping():
            self.queue.append(event.size)
            return []
        if self.state is DefenseState.READY:
            self.n_total += 1
        return [SendReal(event.size)]

    def _on_ready(self, t: float) -> List[Action]:
        self.n_total = 0
        return []

    def _on_real(self, event: RealPacketQueued) -> List[Action]:
        if self.is_client and self.state is DefenseState.PADDING:
            self._forward_real(event)
            return [self._enter(DefenseState.START, event.t)]
        return super()._on_real(event)

    def _begin_padding(self, t: float) -> List[Action]:
        if not self.is_client:
            self.n_total = 0
        # first slot fires the moment Start is entered
        return [self._arm(SLOT_TIMER, 0.0)]

    def _on_quiet(self, t: float) -> List[Action]:
        return [self._enter(DefenseState.PADDING, t)]

    def _on_timer(self, event: TimerFired) -> List[Action]:
        if event.timer_id != SLOT_TIMER or not self._shaping():
            return []
        return self.tick(event.t)

    def tick(self, t: float) -> List[Action]:
        """One slot boundary: send a real cell if one is queued, else a dummy."""
        cell = SendReal(self.queue.popleft()) if self.queue else SendDummy()
        self.n_total += 1
        if (self.state is DefenseState.PADDING and not self.queue
                and self.n_total % self.config.L == 0):
            actions = [cell, self._enter(DefenseState.STOP, t)]
            if self.is_client:
                actions.append(SendSignal(SignalKind.STOP_PAD))
            return actions
        return [cell, self._arm(SLOT_TIMER, self.rho)]

    def bridge_mirror(self, event: PeerSignal) -> List[Action]:
        # StopPad makes the bridge finish its own mod-L padding instead of
        # halting, since each side pads its count independently
        if event.kind is SignalKind.STOP_PAD:
            if self.state is DefenseState.START:
                return [self._enter(DefenseState.PADDING, event.t)]
            return []
        if event.kind is SignalKind.START_PAD and self.state is DefenseState.PADDING:
            return [self._enter(DefenseState.START, event.t)]
        return super().bridge_mirror(event)


def tamaraw_tick(machine: TamarawMachine, t: float) -> List[Action]:
    return machine.tick(t)


def tamaraw_transition(machine: TamarawMachine, event) -> List[Action]:
    return machine.step(event)
