"""Wire capture: one line per sealed record a session sent or received.

Kinds are logged from the session's own knowledge: ``R`` application data,
``C`` stream control payloads, ``D`` dummies, ``S`` signals. State changes of
the local defense machine are kept alongside as markers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, TextIO

from ..kernel import CELL_PAYLOAD, DefenseState
from ..trace import Direction, Kind, Packet, Trace

KINDS = ("R", "C", "D", "S")


@dataclass(frozen=True)
class WireRecord:
    t: float
    direction: Direction
    length: int
    kind: str
    sent: bool


@dataclass(frozen=True)
class StateMarker:
    t: float
    state: DefenseState
    index: int = 0      # number of records logged before the change


@dataclass
class WireCapture:
    """Records of one session; times are absolute event-loop seconds."""
    side: str
    records: List[WireRecord] = field(default_factory=list)
    markers: List[StateMarker] = field(default_factory=list)

    def record(self, t: float, direction: Direction, length: int, kind: str, sent: bool) -> None:
        self.records.append(WireRecord(t, direction, length, kind, sent))

    def mark(self, t: float, state: DefenseState) -> None:
        self.markers.append(StateMarker(t, state, len(self.records)))

    def lengths(self) -> set:
        return {r.length for r in self.records}

    def sent(self, kinds=KINDS) -> List[WireRecord]:
        return [r for r in self.records if r.sent and r.kind in kinds]

    def episodes(self, begin: DefenseState) -> List[List[WireRecord]]:
        """Records between each Stop -> ``begin`` change and the next Stop.

        Episodes that returned to Stop straight from Ready are skipped, as
        they never padded.
        """
        out, start, prev = [], None, DefenseState.STOP
        for m in self.markers:
            if prev is DefenseState.STOP and m.state is begin:
                start = m.index
            elif m.state is DefenseState.STOP and start is not None:
                if prev is not DefenseState.READY:
                    out.append(self.records[start:m.index])
                start = None
            prev = m.state
        return out

    def to_trace(self, origin: float = 0.0, unit: int = CELL_PAYLOAD) -> Trace:
        """Observer trace: application data is real, everything else dummy.

        Records from before ``origin`` (stream setup) are placed at time zero.
        """
        return Trace(
            Packet(max(0.0, r.t - origin), r.direction, unit,
                   Kind.REAL if r.kind == "R" else Kind.DUMMY)
            for r in self.records)

    def dump(self, out: TextIO, session: Optional[int] = None) -> None:
        if session is not None:
            out.write(f"# session {session} {self.side}\n")
        pending = list(self.markers)
        for i, r in enumerate(self.records + [None]):
            while pending and pending[0].index <= i:
                m = pending.pop(0)
                out.write(f"# {m.t!r} state {m.state.value}\n")
            if r is not None:
                sign = "+" if r.direction is Direction.OUT else "-"
                out.write(f"{r.t!r}\t{sign}{r.length}\t{r.kind}\t{'sent' if r.sent else 'recv'}\n")


def parse_captures(text: str) -> List[WireCapture]:
    """Inverse of :meth:`WireCapture.dump` for one or more sessions."""
    captures: List[WireCapture] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("# session"):
            captures.append(WireCapture(line.split()[3]))
            continue
        if not captures:
            captures.append(WireCapture("unknown"))
        cap = captures[-1]
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 3 and parts[1] == "state":
                cap.mark(float(parts[0]), DefenseState(parts[2]))
            continue
        ts, signed, kind, how = line.split("\t")
        direction = Direction.OUT if signed.startswith("+") else Direction.IN
        cap.record(float(ts), direction, int(signed[1:]), kind, how == "sent")
    return captures
