"""Trace data model, the tab-separated trace file format, and overhead metrics.

A trace file has one packet per line::

    <timestamp>\t<signed-size>[\t<R|D>]

A positive size is an outgoing (client-sent) packet, a negative size an
incoming one. The optional third column marks the packet as real (``R``,
the default) or dummy (``D``). Blank lines and lines starting with ``#``
are ignored.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union


class TraceError(ValueError):
    """Base class for trace parsing and metric errors."""


class MalformedLine(TraceError):
    def __init__(self, lineno: int, line: str, reason: str = "malformed line"):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line!r}")


class NegativeTimestamp(TraceError):
    def __init__(self, lineno: int, value: float):
        self.lineno = lineno
        super().__init__(f"line {lineno}: negative timestamp {value}")


class NoRealPackets(TraceError):
    pass


class EmptyInput(TraceError):
    pass


class ZeroBaselineBytes(TraceError):
    pass


class ZeroBaselineTime(TraceError):
    pass


class Direction(enum.IntEnum):
    OUT = 1
    IN = -1

    @property
    def opposite(self) -> "Direction":
        return Direction.IN if self is Direction.OUT else Direction.OUT


class Kind(enum.Enum):
    REAL = "R"
    DUMMY = "D"


@dataclass(frozen=True)
class Packet:
    timestamp: float
    direction: Direction
    size: int
    kind: Kind = Kind.REAL

    def __post_init__(self):
        if not self.timestamp >= 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        if self.size <= 0:
            raise ValueError(f"size must be > 0, got {self.size}")

    @property
    def is_real(self) -> bool:
        return self.kind is Kind.REAL


class Trace(Sequence[Packet]):
    """Immutable, timestamp-sorted packet sequence. Ties keep input order."""

    __slots__ = ("_packets",)

    def __init__(self, packets: Iterable[Packet] = ()):
        # sorted() is stable, so equal timestamps keep their insertion order
        self._packets = tuple(sorted(packets, key=lambda p: p.timestamp))

    def __len__(self) -> int:
        return len(self._packets)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return Trace(self._packets[index])
        return self._packets[index]

    def __iter__(self) -> Iterator[Packet]:
        return iter(self._packets)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return self._packets == other._packets

    def __hash__(self) -> int:
        return hash(self._packets)

    def __repr__(self) -> str:
        return f"Trace({len(self._packets)} packets)"

    @property
    def packets(self) -> tuple:
        return self._packets

    def real(self) -> "Trace":
        return Trace(p for p in self._packets if p.is_real)

    def direction(self, direction: Direction) -> "Trace":
        return Trace(p for p in self._packets if p.direction is direction)


def parse_trace(text: Union[bytes, str]) -> Trace:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    packets = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise MalformedLine(lineno, raw, "expected 2 or 3 tab-separated fields")
        try:
            timestamp = float(fields[0])
            signed = int(fields[1])
        except ValueError:
            raise MalformedLine(lineno, raw, "non-numeric field") from None
        if not math.isfinite(timestamp):
            raise MalformedLine(lineno, raw, "non-finite timestamp")
        if timestamp < 0:
            raise NegativeTimestamp(lineno, timestamp)
        if signed == 0:
            raise MalformedLine(lineno, raw, "zero size carries no direction")
        kind = Kind.REAL
        if len(fields) == 3:
            try:
                kind = Kind(fields[2])
            except ValueError:
                raise MalformedLine(lineno, raw, "kind must be R or D") from None
        direction = Direction.OUT if signed > 0 else Direction.IN
        packets.append(Packet(timestamp, direction, abs(signed), kind))
    return Trace(packets)


def serialize_trace(trace: Trace) -> str:
    lines = []
    for p in trace:
        sign = "+" if p.direction is Direction.OUT else "-"
        lines.append(f"{p.timestamp!r}\t{sign}{p.size}\t{p.kind.value}")
    return "".join(line + "\n" for line in lines)


def read_trace(path) -> Trace:
    with open(path, "rb") as f:
        return parse_trace(f.read())


def write_trace(path, trace: Trace) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_trace(trace))


def trace_bytes(trace: Trace) -> int:
    return sum(p.size for p in trace)


def load_time(trace: Trace) -> float:
    """Timestamp of the last real packet; trailing dummies do not count."""
    for p in reversed(trace.packets):
        if p.is_real:
            return p.timestamp
    raise NoRealPackets("trace contains no real packets")


@dataclass(frozen=True)
class OverheadReport:
    data_overhead: float
    time_overhead: float
    per_trace: tuple


def overhead_ratios(undefended: Trace, defended: Trace) -> tuple:
    base_bytes = trace_bytes(undefended)
    if base_bytes == 0:
        raise ZeroBaselineBytes("undefended trace has zero bytes")
    base_time = load_time(undefended)
    if base_time == 0:
        raise ZeroBaselineTime("undefended load time is 0")
    data = (trace_bytes(defended) - base_bytes) / base_bytes
    time = (load_time(defended) - base_time) / base_time
    return data, time


def compute_overhead(pairs: Iterable[tuple]) -> OverheadReport:
    """Mean-of-ratios data and time overhead over (undefended, defended) pairs."""
    per_trace = tuple(overhead_ratios(u, d) for u, d in pairs)
    if not per_trace:
        raise EmptyInput("no trace pairs given")
    n = len(per_trace)
    data = math.fsum(r[0] for r in per_trace) / n
    time = math.fsum(r[1] for r in per_trace) / n
    return OverheadReport(data, time, per_trace)
