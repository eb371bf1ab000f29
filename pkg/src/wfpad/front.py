"""FRONT: zero-delay padding with Rayleigh-distributed dummy times."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .kernel import Action, DefenseMachine, DefenseState, SendDummy, TimerFired, as_rng
from .trace import Direction


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class FrontConfig:
    n_out: int = 3000
    n_in: int = 3000
    w_min: float = 1.0
    w_max: float = 13.0

    def __post_init__(self):
        if self.n_out < 1 or self.n_in < 1:
            raise ValueError("n_out and n_in must be >= 1")
        if not 0 < self.w_min <= self.w_max:
            raise ValueError("need 0 < w_min <= w_max")

    def max_dummies(self, side: Direction) -> int:
        return self.n_out if side is Direction.OUT else self.n_in

    def to_params(self) -> dict:
        return {
            "front.n_out": self.n_out,
            "front.n_in": self.n_in,
            "front.w_min_s": self.w_min,
            "front.w_max_s": self.w_max,
        }

    @classmethod
    def from_params(cls, params: dict) -> "FrontConfig":
        d = cls()
        return cls(
            n_out=int(params.get("front.n_out", d.n_out)),
            n_in=int(params.get("front.n_in", d.n_in)),
            w_min=float(params.get("front.w_min_s", d.w_min)),
            w_max=float(params.get("front.w_max_s", d.w_max)),
        )


@dataclass(frozen=True)
class FrontSchedule:
    w: float
    times: np.ndarray  # sorted offsets in seconds from schedule creation

    def __len__(self) -> int:
        return len(self.times)


def rayleigh_sample(w: float, u: float) -> float:
    """Inverse Rayleigh CDF: the time ``t`` with ``P(T <= t) = u`` for scale ``w``."""
    if not 0 < u < 1:
        raise DomainError(f"u must lie in (0, 1), got {u}")
    if not w > 0:
        raise DomainError(f"w must be positive, got {w}")
    return w * math.sqrt(-2.0 * math.log1p(-u))


def rayleigh_times(w: float, u: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rayleigh_sample` for uniforms in ``[0, 1)``."""
    if not w > 0:
        raise DomainError(f"w must be positive, got {w}")
    return w * np.sqrt(-2.0 * np.log1p(-np.asarray(u, dtype=float)))


def front_schedule(side: Direction, config: FrontConfig, rng) -> FrontSchedule:
    rng = as_rng(rng)
    n = int(rng.integers(1, config.max_dummies(side), endpoint=True))
    w = float(rng.uniform(config.w_min, config.w_max))
    times = np.sort(rayleigh_times(w, rng.random(n)))
    return FrontSchedule(w, times)


class FrontMachine(DefenseMachine):
    """FRONT state machine (Stop, Ready, Start).

    Entering Start draws a fresh schedule and arms one timer per dummy;
    stopping cancels them all, so unsent dummies are dropped.
    """

    name = "front"

    def __init__(self, side, config: FrontConfig = None, kernel=None, rng=None):
        super().__init__(side, kernel, rng)
        self.config = config or FrontConfig()
        self.schedule = None

    def _begin_padding(self, t: float) -> List[Action]:
        self.schedule = front_schedule(self.direction, self.config, self.rng)
        return [self._arm(("dummy", i), float(dt))
                for i, dt in enumerate(self.schedule.times)]

    def _on_timer(self, event: TimerFired) -> List[Action]:
        timer_id = event.timer_id
        if (self.state is DefenseState.START and isinstance(timer_id, tuple)
                and timer_id[0] == "dummy"):
            return [SendDummy()]
        return []


def front_transition(machine: FrontMachine, event) -> List[Action]:
    return machine.step(event)
