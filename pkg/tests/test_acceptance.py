"""Acceptance gate: ten criteria, each reported as one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or as part of the full
suite; the lines are repeated in the terminal summary.
"""
import asyncio
import math
import time

import numpy as np
import pytest

from fsm_fixtures import FIXTURES, check
from oracles import canonical, oracle_tamaraw
from wfpad.config import DefenseSpec
from wfpad.front import FrontConfig, front_schedule, rayleigh_times
from wfpad.kernel import DefenseState
from wfpad.randomwt import RandomWtConfig, maybe_fake_burst, pad_real_burst
from wfpad.simulator import (
    SimulationStrategy, expected_randomwt_dummies, simulate_front, simulate_randomwt,
    simulate_tamaraw,
)
from wfpad.synth import load_minicorpus, random_traces, synthetic_load
from wfpad.tamaraw import TamarawConfig
from wfpad.trace import Direction, Kind, Packet, Trace, compute_overhead, trace_bytes
from wfpad.tunnel.cell import Cell, SignalKind, decode_cell, encode_cell
from wfpad.tunnel.replay import replay, replay_async
from wfpad.tunnel.seal import AeadSealer, AuthenticationFailure

OUT, IN = Direction.OUT, Direction.IN
OPT, PES = SimulationStrategy.OPTIMISTIC, SimulationStrategy.PESSIMISTIC

RESULTS = []


def report(number: int, ok: bool, title: str, detail: str) -> None:
    line = f"[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def tamaraw_loopback():
    """One 30 s synthetic load replayed through a Tamaraw client/bridge pair."""
    return replay(synthetic_load(6, duration=30.0), DefenseSpec("tamaraw"), seed=6)


def test_1_rayleigh_sampling():
    start = time.perf_counter()
    w = 5.0
    u = np.random.default_rng(1).random(100_000)
    direct = float(np.mean(rayleigh_times(w, u) <= w))
    # the same check through the defense's own schedule draw
    rng = np.random.default_rng(2)
    cfg = FrontConfig(n_out=3000, w_min=w, w_max=w)
    pooled, n = 0, 0
    while n < 100_000:
        times = front_schedule(OUT, cfg, rng).times
        pooled += int(np.sum(times <= w))
        n += len(times)
    scheduled = pooled / n
    elapsed = time.perf_counter() - start
    ok = all(0.3835 <= f <= 0.4035 for f in (direct, scheduled)) and elapsed < 5
    report(1, ok, "Rayleigh fraction <= w in [0.3835, 0.4035]",
           f"sampler {direct:.4f}, schedule {scheduled:.4f} over {n} draws, {elapsed:.2f} s")


def test_2_tamaraw_invariants():
    start = time.perf_counter()
    cfg = TamarawConfig()
    rho = {OUT: cfg.rho_out, IN: cfg.rho_in}
    problems = []
    traces = list(random_traces(200, seed=2, min_packets=20, max_packets=2000))
    for index, trace in enumerate(traces):
        for strategy in (OPT, PES):
            out = simulate_tamaraw(trace, cfg, strategy)
            for d in (OUT, IN):
                cells = [p for p in out if p.direction is d]
                if [p.timestamp for p in cells] != [i * rho[d] for i in range(len(cells))]:
                    problems.append(f"trace {index} {strategy.value} {d.name}: off-grid cell")
                if len(cells) % cfg.L:
                    problems.append(f"trace {index} {strategy.value} {d.name}: count {len(cells)}")
            # defended reals in input order: same index in both lists
            placed = _placed(trace, out)
            if any(b.timestamp < a.timestamp for a, b in placed):
                problems.append(f"trace {index} {strategy.value}: real moved earlier")
            for d in (OUT, IN):
                times = [b.timestamp for a, b in placed if a.direction is d]
                if any(y <= x for x, y in zip(times, times[1:])):
                    problems.append(f"trace {index} {strategy.value}: {d.name} order broken")
            if strategy is PES:
                times = [b.timestamp for _, b in placed]
                if any(y < x for x, y in zip(times, times[1:])):
                    problems.append(f"trace {index}: pessimistic global order broken")
    elapsed = time.perf_counter() - start
    sizes = [len(t) for t in traces]
    ok = not problems and elapsed < 30 and min(sizes) >= 20 and max(sizes) <= 2000
    report(2, ok, "Tamaraw simulator invariants on 200 synthetic traces",
           f"{len(problems)} violations {problems[:3]}, {min(sizes)}-{max(sizes)} packets, "
           f"{elapsed:.1f} s")


def _placed(trace, defended):
    """Pair each input packet with its defended copy (per-direction FIFO)."""
    queues = {d: [p for p in defended if p.is_real and p.direction is d] for d in (OUT, IN)}
    seen = {OUT: 0, IN: 0}
    pairs = []
    for p in trace:
        pairs.append((p, queues[p.direction][seen[p.direction]]))
        seen[p.direction] += 1
    return pairs


def test_3_strategy_dominance():
    violations = []
    corpus = load_minicorpus()
    for index, trace in enumerate(corpus):
        opt = compute_overhead([(trace, simulate_tamaraw(trace, strategy=OPT))])
        pes = compute_overhead([(trace, simulate_tamaraw(trace, strategy=PES))])
        if pes.time_overhead < opt.time_overhead or pes.data_overhead < opt.data_overhead:
            violations.append(index)
    report(3, not violations, "pessimistic >= optimistic on every mini-corpus trace",
           f"{len(violations)} violations over {len(corpus)} traces")


def test_4_oracle_equivalence():
    rng = np.random.default_rng(4)
    cfg = TamarawConfig()
    mismatches, checked = [], 0
    for index in range(50):
        n = int(rng.integers(1, 31))
        times = np.round(rng.uniform(0, 0.3, n), 4)
        trace = Trace(Packet(float(t), OUT if rng.random() < 0.4 else IN, 514) for t in times)
        for strategy in (OPT, PES):
            checked += 1
            if canonical(simulate_tamaraw(trace, cfg, strategy)) != oracle_tamaraw(trace, cfg, strategy):
                mismatches.append((index, strategy.value))
    report(4, not mismatches, "simulate_tamaraw matches brute-force slot oracle",
           f"{checked - len(mismatches)}/{checked} exact matches (50 traces x 2 strategies)")


def test_5_front_zero_delay():
    corpus = load_minicorpus()
    altered = 0
    for seed in range(5):
        for index, trace in enumerate(corpus):
            defended = simulate_front(trace, rng=[seed, index])
            altered += [p for p in defended if p.is_real] != list(trace)

    async def run_all():
        return await asyncio.gather(*(replay_async(t, DefenseSpec("front"), seed=i)
                                      for i, t in enumerate(corpus)))
    results = asyncio.run(run_all())
    loopback = compute_overhead([(r.script, r.defended_trace()) for r in results])
    overruns = sum(len(r.overruns) for r in results)
    ok = altered == 0 and loopback.time_overhead <= 0.05
    report(5, ok, "FRONT zero-delay in simulation and loopback",
           f"{altered} altered traces over 5 seeds; loopback time overhead "
           f"{loopback.time_overhead:.4f} (data {loopback.data_overhead:.2f}, "
           f"{overruns} late scripted writes)")


def _padding_gaps(capture):
    """Gaps between consecutive outgoing records sent in Start/Padding, per episode."""
    gaps = []
    state, marks, mi, last = DefenseState.STOP, capture.markers, 0, None
    for i, record in enumerate(capture.records):
        while mi < len(marks) and marks[mi].index <= i:
            state = marks[mi].state
            mi += 1
            if state not in (DefenseState.START, DefenseState.PADDING):
                last = None
        if record.sent and state in (DefenseState.START, DefenseState.PADDING):
            if last is not None:
                gaps.append(record.t - last)
            last = record.t
    return np.array(gaps)


def test_6_tamaraw_loopback(tamaraw_loopback):
    result = tamaraw_loopback
    gaps = _padding_gaps(result.client)
    within = float(np.mean(np.abs(gaps - 0.012) <= 0.005)) if len(gaps) else 0.0
    counts = {}
    for capture, begin in ((result.client, DefenseState.READY), (result.bridge, DefenseState.START)):
        counts[capture.side] = [sum(1 for r in records if r.sent and r.kind != "S")
                                for records in capture.episodes(begin)]
    mod_ok = all(c and all(n % 200 == 0 for n in c) for c in counts.values())
    ok = within >= 0.95 and mod_ok
    report(6, ok, "Tamaraw loopback: gaps within 12+-5 ms and counts = 0 mod 200",
           f"{within:.4f} of {len(gaps)} gaps within bound; per-episode cells {counts}; "
           f"{len(result.overruns)} late scripted writes")


def test_7_randomwt_statistics():
    cfg = RandomWtConfig()
    rng = np.random.default_rng(7)
    lines, ok = [], True
    for d in (OUT, IN):
        n_max = cfg.n_real(d)
        mean = float(np.mean([pad_real_burst(1, d, cfg, rng).dummy_count for _ in range(100_000)]))
        good = abs(mean - n_max / 2) <= 0.015 * n_max
        ok &= good
        lines.append(f"{d.name} pad mean {mean:.3f} (N={n_max})")
    freq = sum(maybe_fake_burst(OUT, cfg, rng) is not None for _ in range(100_000)) / 100_000
    ok &= abs(freq - cfg.p_fake) <= 0.005
    lines.append(f"fake frequency {freq:.4f}")

    corpus = load_minicorpus()
    # fake bursts of up to 90 cells make one draw noisy; average a few runs
    simulated = float(np.mean([
        compute_overhead([(t, simulate_randomwt(t, cfg, [run, i]))
                          for i, t in enumerate(corpus)]).data_overhead
        for run in range(5)]))
    analytic = float(np.mean([expected_randomwt_dummies(t, cfg) * 514 / trace_bytes(t)
                              for t in corpus]))
    rel = abs(simulated - analytic) / analytic
    ok &= rel <= 0.05
    lines.append(f"corpus DO {simulated:.4f} vs analytic {analytic:.4f} ({rel:.2%} apart)")
    report(7, ok, "Random-WT padding statistics and corpus overhead", "; ".join(lines))


def test_8_wire_uniformity_and_integrity(tamaraw_loopback):
    lengths = tamaraw_loopback.client.lengths() | tamaraw_loopback.bridge.lengths()
    rng = np.random.default_rng(8)
    sender, receiver = AeadSealer(bytes(32)), AeadSealer(bytes(32))
    round_trips = 0
    for _ in range(10_000):
        kind = int(rng.integers(0, 3))
        if kind == 0:
            cell = Cell.data(rng.bytes(int(rng.integers(0, 515))))
        elif kind == 1:
            cell = Cell.dummy()
        else:
            cell = Cell.signal(SignalKind(int(rng.integers(1, 4))))
        raw = encode_cell(cell)
        round_trips += decode_cell(receiver.open(sender.seal(raw))) == cell
    undetected = 0
    for cell in (Cell.dummy(), Cell.data(b"abc"), Cell.signal(SignalKind.STOP_PAD)):
        record = AeadSealer(bytes(32)).seal(encode_cell(cell))
        for i in range(len(record)):
            for mask in (0x01, 0x80):
                bad = bytearray(record)
                bad[i] ^= mask
                try:
                    AeadSealer(bytes(32)).open(bytes(bad))
                    undetected += 1
                except AuthenticationFailure:
                    pass
    ok = len(lengths) == 1 and round_trips == 10_000 and undetected == 0
    report(8, ok, "wire uniformity, round trip and tamper detection",
           f"record lengths {sorted(lengths)}; {round_trips}/10000 round trips; "
           f"{undetected} undetected single-byte corruptions")


def test_9_metrics_exactness():
    def real(t, d, size):
        return Packet(t, d, size)
    w = Trace([real(0.0, OUT, 500), real(10.0, IN, 500)])
    d = Trace([real(0.0, OUT, 500), Packet(1.0, OUT, 1420, Kind.DUMMY), real(13.0, IN, 500)])
    worked = compute_overhead([(w, d)])
    # a second, asymmetric pair checks the mean of per-trace ratios
    w2 = Trace([real(0.0, OUT, 300), real(2.0, IN, 700)])
    d2 = Trace([real(0.5, OUT, 300), Packet(0.7, IN, 250, Kind.DUMMY), real(2.5, IN, 700)])
    both = compute_overhead([(w, d), (w2, d2)])
    want_do = ((2420 - 1000) / 1000 + (1250 - 1000) / 1000) / 2
    want_to = ((13.0 - 10.0) / 10.0 + (2.5 - 2.0) / 2.0) / 2
    ok = (math.isclose(worked.data_overhead, 1.42, abs_tol=1e-12)
          and math.isclose(worked.time_overhead, 0.30, abs_tol=1e-12)
          and both.data_overhead == want_do and both.time_overhead == want_to)
    report(9, ok, "overhead metrics on hand-built pairs",
           f"worked example ({worked.data_overhead!r}, {worked.time_overhead!r}); "
           f"two-pair means ({both.data_overhead!r}, {both.time_overhead!r})")


def test_10_fsm_conformance():
    failed = [f.name for f in FIXTURES if not check(f)[0]]
    required = ["Ready + tick n=1 after a full window -> Stop",
                "Padding slot reaching a multiple of L",
                "unsent dummy dropped after Stop",
                "idle Talkie times out -> EndBurst, Walkie"]
    missing = [r for r in required if not any(r in f.name for f in FIXTURES)]
    ok = not failed and not missing
    report(10, ok, "transition fixtures with exact action sequences",
           f"{len(FIXTURES) - len(failed)}/{len(FIXTURES)} pass; missing {missing or 'none'}")
