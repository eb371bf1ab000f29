"""Trace-level simulation of Tamaraw, FRONT and Random-WT.

Each simulator takes an undefended trace of real packets and returns the
defended trace an observer would record. Dummy cells get ``cell_size``
bytes; real packets keep their own size.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .front import FrontConfig, front_schedule
from .kernel import CELL_PAYLOAD, as_rng
from .randomwt import RandomWtConfig, maybe_fake_burst, pad_real_burst
from .slots import assign_slots
from .tamaraw import TamarawConfig
from .trace import Direction, Kind, Packet, Trace


class NotHalfDuplex(ValueError):
    pass


class SimulationStrategy(enum.Enum):
    OPTIMISTIC = "optimistic"
    PESSIMISTIC = "pessimistic"


def _require_real(trace: Trace) -> None:
    if any(not p.is_real for p in trace):
        raise ValueError("simulators take undefended traces of real packets only")


# -- Tamaraw -------------------------------------------------------------------

def _pad_to(n: int, L: int) -> int:
    return -(-n // L) * L


def simulate_tamaraw(trace: Trace, config: TamarawConfig = None,
                     strategy: SimulationStrategy = SimulationStrategy.OPTIMISTIC,
                     cell_size: int = CELL_PAYLOAD) -> Trace:
    """Assign every real packet to a constant-rate slot and fill the rest.

    Both directions run slot grids from t=0 with period ``rho_in``/``rho_out``.
    A packet takes the earliest free slot of its direction at or after its
    original time; the pessimistic strategy also waits for every earlier
    packet of the opposite direction. Each direction then sends dummies in
    every unused slot up to its last real packet and keeps going until its
    cell count is a multiple of ``L``.
    """
    config = config or TamarawConfig()
    strategy = SimulationStrategy(strategy)
    _require_real(trace)
    if not len(trace):
        return Trace()
    packets = trace.packets
    times = np.fromiter((p.timestamp for p in packets), float, len(packets))
    outgoing = np.fromiter((p.direction is Direction.OUT for p in packets), bool, len(packets))
    slots = assign_slots(times, outgoing, config.rho_out, config.rho_in,
                         strategy is SimulationStrategy.PESSIMISTIC)

    result: List[tuple] = []
    for direction, rho, mask in ((Direction.OUT, config.rho_out, outgoing),
                                 (Direction.IN, config.rho_in, ~outgoing)):
        idx = np.flatnonzero(mask)
        if not len(idx):
            continue
        dir_slots = slots[idx]
        total = _pad_to(int(dir_slots[-1]) + 1, config.L)
        real_at = dict(zip(dir_slots.tolist(), idx.tolist()))
        for k in range(total):
            i = real_at.get(k)
            if i is None:
                result.append((k * rho, 1, k, Packet(k * rho, direction, cell_size, Kind.DUMMY)))
            else:
                result.append((k * rho, 0, i, Packet(k * rho, direction, packets[i].size)))
    # equal times: real packets first, in input order, then dummies
    result.sort(key=lambda r: r[:3])
    return Trace(r[3] for r in result)


# -- FRONT ---------------------------------------------------------------------

def simulate_front(trace: Trace, config: FrontConfig = None, rng=None,
                   cell_size: int = CELL_PAYLOAD) -> Trace:
    """Merge per-side FRONT schedules into the unmodified real trace.

    Scheduled times after the last real packet are dropped, as the defense
    stops when the load ends.
    """
    config = config or FrontConfig()
    rng = as_rng(rng)
    _require_real(trace)
    if not len(trace):
        return Trace()
    end = trace[-1].timestamp
    packets = list(trace.packets)
    for side in (Direction.OUT, Direction.IN):
        schedule = front_schedule(side, config, rng)
        kept = schedule.times[schedule.times <= end]
        packets.extend(Packet(float(t), side, cell_size, Kind.DUMMY) for t in kept)
    return Trace(packets)


# -- Random-WT -----------------------------------------------------------------

@dataclass(frozen=True)
class FakeRttModel:
    """Normal(tau, 0.1 * tau) fake RTT, clamped at zero.

    With ``literal_variance`` the spread is a variance (std = sqrt(0.1 tau));
    otherwise it is used directly as the standard deviation.
    """
    tau: float
    literal_variance: bool = True

    @property
    def std(self) -> float:
        spread = 0.1 * self.tau
        return math.sqrt(spread) if self.literal_variance else spread

    def sample(self, rng) -> float:
        if self.tau <= 0:
            return 0.0
        return max(0.0, float(as_rng(rng).normal(self.tau, self.std)))


def split_bursts(trace: Trace) -> List[List[Packet]]:
    """Maximal runs of same-direction packets, in order."""
    bursts: List[List[Packet]] = []
    for p in trace:
        if bursts and bursts[-1][0].direction is p.direction:
            bursts[-1].append(p)
        else:
            bursts.append([p])
    return bursts


def check_half_duplex(bursts: List[List[Packet]]) -> None:
    for prev, nxt in zip(bursts, bursts[1:]):
        if nxt[0].timestamp <= prev[-1].timestamp:
            raise NotHalfDuplex(
                f"{nxt[0].direction.name} burst at {nxt[0].timestamp} overlaps the "
                f"{prev[-1].direction.name} burst ending at {prev[-1].timestamp}")


def burst_rtts(bursts: List[List[Packet]]) -> List[float]:
    """RTT to use at each inter-burst gap.

    An RTT is measured from the last packet of an outgoing burst to the first
    packet of the incoming burst after it. Gap ``i`` uses the latest RTT
    measured at or before it, or the first one in the trace if none is.
    """
    measured = [None] * (len(bursts) - 1) if bursts else []
    for i in range(len(measured)):
        if bursts[i][0].direction is Direction.OUT:
            measured[i] = bursts[i + 1][0].timestamp - bursts[i][-1].timestamp
    first = next((m for m in measured if m is not None), 0.0)
    rtts, latest = [], None
    for m in measured:
        if m is not None:
            latest = m
        rtts.append(first if latest is None else latest)
    return rtts


def simulate_randomwt(trace: Trace, config: RandomWtConfig = None, rng=None,
                      cell_size: int = CELL_PAYLOAD, cell_gap: float = 0.0,
                      literal_variance: bool = True) -> Trace:
    """Pad real bursts and insert fake request/response pairs.

    Tail dummies share the timestamp of their burst's last real packet. In
    each gap between real bursts a fake pair is inserted with probability
    ``p_fake``: a fake burst from the side about to speak, then a fake reply
    ``tau_fake`` later. Everything after the pair shifts by ``tau_fake`` plus
    ``cell_gap`` seconds per fake cell.
    """
    config = config or RandomWtConfig()
    rng = as_rng(rng)
    _require_real(trace)
    bursts = split_bursts(trace)
    check_half_duplex(bursts)
    rtts = burst_rtts(bursts)

    out: List[Packet] = []
    shift = 0.0
    for i, burst in enumerate(bursts):
        direction = burst[0].direction
        out.extend(Packet(p.timestamp + shift, direction, p.size) for p in burst)
        end = burst[-1].timestamp + shift
        padded = pad_real_burst(len(burst), direction, config, rng)
        out.extend(Packet(end, direction, cell_size, Kind.DUMMY)
                   for _ in range(padded.dummy_count))
        if i == len(bursts) - 1:
            break
        speaker = bursts[i + 1][0].direction
        fake = maybe_fake_burst(speaker, config, rng)
        if fake is None:
            continue
        n_reply = int(rng.integers(0, config.n_fake(direction), endpoint=True))
        tau_fake = FakeRttModel(rtts[i], literal_variance).sample(rng)
        t = end
        for _ in range(fake.dummy_count):
            out.append(Packet(t, speaker, cell_size, Kind.DUMMY))
            t += cell_gap
        t += tau_fake
        for _ in range(n_reply):
            out.append(Packet(t, direction, cell_size, Kind.DUMMY))
            t += cell_gap
        shift += tau_fake + (fake.dummy_count + n_reply) * cell_gap
    return Trace(out)


def expected_randomwt_dummies(trace: Trace, config: RandomWtConfig = None) -> float:
    """Expected dummy-cell count that :func:`simulate_randomwt` adds to ``trace``."""
    config = config or RandomWtConfig()
    bursts = split_bursts(trace)
    total = 0.0
    for i, burst in enumerate(bursts):
        direction = burst[0].direction
        total += config.n_real(direction) / 2
        if i < len(bursts) - 1:
            total += config.p_fake * (config.n_fake(direction) + config.n_fake(direction.opposite)) / 2
    return total
