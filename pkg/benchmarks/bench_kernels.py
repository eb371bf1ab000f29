"""Compare the compiled and pure-Python Tamaraw slot assignment.

    python benchmarks/bench_kernels.py [--packets 100000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from wfpad import _slots_py

try:
    from wfpad import _slots
except ImportError:
    _slots = None


def workload(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    times = np.cumsum(rng.exponential(0.004, n))
    outgoing = rng.random(n) < 0.2
    return times, outgoing


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--packets", type=int, default=100_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    times, outgoing = workload(args.packets)
    backends = {"python": _slots_py}
    if _slots is not None:
        backends["compiled"] = _slots
    else:
        print("compiled backend not built; timing python only")
    best = {}
    for pessimistic in (False, True):
        results = {}
        for name, impl in backends.items():
            run = lambda: impl.assign_slots(times, outgoing, 0.012, 0.004, pessimistic)
            results[name] = np.asarray(run())
            best[name, pessimistic] = min(timeit.repeat(run, number=1, repeat=args.repeat))
        if len(results) == 2:
            assert np.array_equal(results["python"], results["compiled"]), "backends disagree"
    strategy = {False: "optimistic", True: "pessimistic"}
    print(f"{'backend':<10} {'strategy':<12} {'seconds':>9} {'packets/s':>12}")
    for (name, pessimistic), secs in sorted(best.items()):
        print(f"{name:<10} {strategy[pessimistic]:<12} {secs:9.4f} {args.packets / secs:12.0f}")
    if _slots is not None:
        for pessimistic in (False, True):
            ratio = best["python", pessimistic] / best["compiled", pessimistic]
            print(f"speedup ({strategy[pessimistic]}): {ratio:.1f}x")


if __name__ == "__main__":
    main()
