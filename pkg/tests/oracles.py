"""Independent reference implementations used as test oracles."""
from wfpad.simulator import SimulationStrategy
from wfpad.trace import Direction, Kind, Packet

OUT, IN = Direction.OUT, Direction.IN
PES = SimulationStrategy.PESSIMISTIC


def oracle_tamaraw(trace, config, strategy):
    """Slot-by-slot scan with explicit occupancy, no closed-form arithmetic."""
    rho = {OUT: config.rho_out, IN: config.rho_in}
    taken = {OUT: set(), IN: set()}
    placed = []
    for p in trace:
        d = p.direction
        lower = p.timestamp
        if strategy is PES:
            opposite = [t for t, q in placed if q.direction is not d]
            if opposite:
                lower = max(lower, max(opposite))
        last = max(taken[d], default=-1)
        k = 0
        while k * rho[d] < lower or k in taken[d] or k <= last:
            k += 1
        taken[d].add(k)
        placed.append((k * rho[d], p))
    cells = []
    for d in (OUT, IN):
        if not taken[d]:
            continue
        n = max(taken[d]) + 1
        while n % config.L:
            n += 1
        for k in range(n):
            if k not in taken[d]:
                cells.append(Packet(k * rho[d], d, 514, Kind.DUMMY))
    cells += [Packet(t, p.direction, p.size) for t, p in placed]
    return sorted(cells, key=lambda c: (c.timestamp, c.kind is Kind.DUMMY, c.direction))


def canonical(trace):
    return sorted(trace, key=lambda c: (c.timestamp, c.kind is Kind.DUMMY, c.direction))
