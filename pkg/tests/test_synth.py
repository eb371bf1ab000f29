import pytest

from wfpad.simulator import check_half_duplex, split_bursts
from wfpad.synth import (
    MINICORPUS_SIZE, build_minicorpus, load_minicorpus, random_traces, synthetic_load,
)
from wfpad.trace import Direction


def test_bundled_corpus_matches_generator():
    assert load_minicorpus() == build_minicorpus()


def test_corpus_shape():
    corpus = load_minicorpus()
    assert len(corpus) == MINICORPUS_SIZE
    for trace in corpus:
        assert all(p.is_real for p in trace)
        assert {p.direction for p in trace} == {Direction.OUT, Direction.IN}
        check_half_duplex(split_bursts(trace))


def test_length_bounds():
    lengths = [len(t) for t in random_traces(30, seed=5)]
    assert all(20 <= n <= 2000 for n in lengths)


def test_duration_bound():
    trace = synthetic_load(1, duration=3.0)
    assert trace[-1].timestamp <= 3.0


def test_half_duplex_bursts_separated():
    trace = synthetic_load(2, n_packets=500, half_duplex=True)
    bursts = split_bursts(trace)
    assert all(a[-1].timestamp < b[0].timestamp for a, b in zip(bursts, bursts[1:]))


def test_seeded():
    assert synthetic_load(9, n_packets=50) == synthetic_load(9, n_packets=50)


def test_needs_a_bound():
    with pytest.raises(ValueError):
        synthetic_load(0)
