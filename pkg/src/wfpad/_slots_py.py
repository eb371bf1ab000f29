"""Pure-Python slot assignment; used when the compiled extension is absent."""
import math

import numpy as np


def first_slot(x: float, rho: float) -> int:
    """Smallest k >= 0 with ``k * rho >= x`` under float comparison."""
    if x <= 0:
        return 0
    k = math.ceil(x / rho)
    while k > 0 and (k - 1) * rho >= x:
        k -= 1
    while k * rho < x:
        k += 1
    return k


def assign_slots(times, outgoing, rho_out: float, rho_in: float,
                 pessimistic: bool) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    outgoing = np.asarray(outgoing, dtype=np.bool_)
    n = len(times)
    slots = np.empty(n, dtype=np.int64)
    rho = (rho_in, rho_out)
    next_free = [0, 0]
    last_time = [0.0, 0.0]
    for i in range(n):
        d = 1 if outgoing[i] else 0
        r = rho[d]
        lower = float(times[i])
        if pessimistic and lower < last_time[1 - d]:
            lower = last_time[1 - d]
        k = first_slot(lower, r)
        if k < next_free[d]:
            k = next_free[d]
        slots[i] = k
        next_free[d] = k + 1
        last_time[d] = k * r
    return slots
