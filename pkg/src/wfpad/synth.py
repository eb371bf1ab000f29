"""Synthetic page loads and the bundled mini-corpus.

Loads are request/response bursts: a short outgoing burst, one round trip,
then a longer incoming burst. Half-duplex loads keep bursts strictly
separated in time; full-duplex loads let the next request start while the
previous response is still arriving.
"""
from __future__ import annotations

from importlib import resources
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .kernel import CELL_PAYLOAD, as_rng
from .trace import Direction, Packet, Trace, parse_trace, serialize_trace

MINICORPUS_SEED = 20240611
MINICORPUS_SIZE = 24


def synthetic_load(rng=None, n_packets: Optional[int] = None, duration: Optional[float] = None,
                   half_duplex: bool = True, rtt: float = 0.05, cell_gap: float = 0.002,
                   size: int = CELL_PAYLOAD) -> Trace:
    """Generate one load, stopping at ``n_packets`` packets or ``duration`` seconds.

    At least one bound must be given. Timestamps are rounded to microseconds
    so the serialized form stays short.
    """
    if n_packets is None and duration is None:
        raise ValueError("need n_packets or duration")
    if n_packets is not None and n_packets < 1:
        raise ValueError("n_packets must be positive")
    rng = as_rng(rng)
    packets: List[Tuple[float, Direction]] = []
    t = 0.0

    def full() -> bool:
        return ((n_packets is not None and len(packets) >= n_packets)
                or (duration is not None and t > duration))

    while not full():
        n_out = int(rng.geometric(0.5))
        n_in = int(rng.geometric(1 / 20))
        for _ in range(n_out):
            packets.append((t, Direction.OUT))
            t += float(rng.exponential(cell_gap)) + 1e-6
        if full():
            break
        t += rtt * float(rng.lognormal(0.0, 0.3))
        response_start = t
        for _ in range(n_in):
            packets.append((t, Direction.IN))
            t += float(rng.exponential(cell_gap)) + 1e-6
            if full():
                break
        if half_duplex:
            t += rtt * float(rng.lognormal(-1.0, 0.5)) + 1e-6
        else:
            # next request overlaps the tail of this response
            t = response_start + (t - response_start) * float(rng.uniform(0.3, 1.0))

    if n_packets is not None:
        packets = packets[:n_packets]
    if duration is not None:
        packets = [p for p in packets if p[0] <= duration] or packets[:1]
    return Trace(Packet(round(ts, 6), d, size) for ts, d in packets)


def random_traces(count: int, seed: int, min_packets: int = 20,
                  max_packets: int = 2000) -> Iterator[Trace]:
    """Seeded stream of loads with uniformly drawn lengths and duplex mode."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(min_packets, max_packets, endpoint=True))
        yield synthetic_load(rng, n_packets=n, half_duplex=bool(rng.random() < 0.5))


def build_minicorpus(seed: int = MINICORPUS_SEED, size: int = MINICORPUS_SIZE) -> List[Trace]:
    """The traces shipped as the mini-corpus: half are half-duplex."""
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(size):
        n = int(rng.integers(60, 400, endpoint=True))
        corpus.append(synthetic_load(rng, n_packets=n, half_duplex=i % 2 == 0))
    return corpus


def minicorpus_names(size: int = MINICORPUS_SIZE) -> List[str]:
    return [f"load{i:02d}.trace" for i in range(size)]


def load_minicorpus() -> List[Trace]:
    """Read the bundled mini-corpus traces in name order."""
    root = resources.files("wfpad") / "data" / "minicorpus"
    return [parse_trace(root.joinpath(name).read_text()) for name in minicorpus_names()]


def minicorpus_dir():
    """Filesystem path of the bundled mini-corpus directory."""
    return resources.files("wfpad") / "data" / "minicorpus"


def write_minicorpus(directory) -> None:
    from pathlib import Path
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, trace in zip(minicorpus_names(), build_minicorpus()):
        (directory / name).write_text(serialize_trace(trace))
