import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wfpad.config import DefenseSpec
from wfpad.eventsim import emulate
from wfpad.kernel import (
    DefenseState, EnterState, KernelConfig, SendDummy, Side, TimeRegression,
    WindowCounter, window_update,
)
from wfpad.trace import Direction, Packet, Trace

S = DefenseState

ALLOWED_EDGES = {
    ("tamaraw", Side.CLIENT): {(S.STOP, S.READY), (S.READY, S.STOP), (S.READY, S.START),
                               (S.START, S.PADDING), (S.PADDING, S.START), (S.PADDING, S.STOP)},
    ("tamaraw", Side.BRIDGE): {(S.STOP, S.START), (S.START, S.PADDING),
                               (S.PADDING, S.START), (S.PADDING, S.STOP)},
}
for _name in ("front", "randomwt"):
    ALLOWED_EDGES[(_name, Side.CLIENT)] = {(S.STOP, S.READY), (S.READY, S.STOP),
                                          (S.READY, S.START), (S.START, S.STOP)}
    ALLOWED_EDGES[(_name, Side.BRIDGE)] = {(S.STOP, S.START), (S.START, S.STOP)}


def brute_count(history, t, window):
    return sum(1 for e in history if t - window < e <= t)


class TestWindowCounter:
    def test_examples(self):
        c = WindowCounter(1.0)
        assert window_update(c, 0.0) == 0
        c.record(0.2)
        c.record(0.9)
        assert window_update(c, 1.0) == 2
        assert window_update(c, 1.25) == 1

    def test_time_regression(self):
        c = WindowCounter()
        c.record(2.0)
        with pytest.raises(TimeRegression):
            c.query(1.0)

    def test_matches_brute_force_on_random_streams(self):
        rng = np.random.default_rng(20240611)
        for _ in range(10_000):
            n = int(rng.integers(1, 30))
            gaps = rng.exponential(rng.uniform(0.05, 1.0), size=n)
            is_query = rng.random(n) < 0.5
            window = float(rng.choice([0.5, 1.0, 2.0]))
            counter = WindowCounter(window)
            history = []
            t = 0.0
            for gap, query in zip(gaps, is_query):
                t += float(gap)
                if query:
                    assert counter.query(t) == brute_count(history, t, window)
                else:
                    counter.record(t)
                    history.append(t)

    @given(st.lists(st.tuples(st.floats(0, 3, allow_nan=False), st.booleans()), max_size=60))
    def test_property_brute_force(self, steps):
        counter = WindowCounter(1.0)
        history, t = [], 0.0
        for gap, query in steps:
            t += gap
            if query:
                assert counter.query(t) == brute_count(history, t, 1.0)
            else:
                counter.record(t)
                history.append(t)


def test_kernel_config_rejects_inverted_thresholds():
    with pytest.raises(ValueError):
        KernelConfig(start_threshold=1, stop_threshold=1)


trace_specs = st.lists(
    st.tuples(st.floats(0, 8, allow_nan=False), st.sampled_from([Direction.OUT, Direction.IN])),
    min_size=1, max_size=60,
)


def run_pair(name, spec, seed, latency=0.01):
    trace = Trace(Packet(t, d, 514) for t, d in spec)
    defense = DefenseSpec(name)
    client = defense.make_machine(Side.CLIENT, rng=seed)
    bridge = defense.make_machine(Side.BRIDGE, rng=seed + 1)
    return emulate(trace, client, bridge, latency=latency, linger=12.0)


@pytest.mark.parametrize("name", ["tamaraw", "front", "randomwt"])
@settings(max_examples=25, deadline=None)
@given(spec=trace_specs, seed=st.integers(0, 2**16))
def test_dummies_only_while_padding_and_legal_paths(name, spec, seed):
    sim = run_pair(name, spec, seed)
    state = {"client": S.STOP, "bridge": S.STOP}
    for _, side, action in sim.actions:
        if isinstance(action, SendDummy):
            assert state[side] in (S.START, S.PADDING)
        elif isinstance(action, EnterState):
            edge = (state[side], action.state)
            assert edge in ALLOWED_EDGES[(name, Side(side))], edge
            state[side] = action.state


@pytest.mark.parametrize("name", ["tamaraw", "front", "randomwt"])
@settings(max_examples=10, deadline=None)
@given(spec=trace_specs, seed=st.integers(0, 2**16))
def test_engine_determinism(name, spec, seed):
    a = run_pair(name, spec, seed)
    b = run_pair(name, spec, seed)
    assert a.actions == b.actions
