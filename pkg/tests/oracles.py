"""Independent reference computations used to check the package's results.

Nothing here imports the schedulers or metrics under test; quantities are
recomputed from first principles with plain Python and fractions.
"""

import itertools
import math
from fractions import Fraction


def exact(x):
    """Decimal-exact fraction of a float (0.2 means 1/5, not its binary neighbour)."""
    return Fraction(repr(float(x)))


def brute_force_opt_cm(demands, spans, caps):
    """Smallest achievable max per-PM sum of c*t over whole-VM assignments.

    ``demands`` are (cpu, mem, sto) tuples, ``spans`` (start, end) pairs,
    ``caps`` per-PM capacity tuples. Returns None if no assignment fits.
    """
    n, m = len(demands), len(caps)
    horizon = max((e for _, e in spans), default=0)
    best = None
    for assign in itertools.product(range(m), repeat=n):
        used = [[[Fraction(0)] * 3 for _ in range(horizon)] for _ in range(m)]
        ok = True
        for j, pm in enumerate(assign):
            s, e = spans[j]
            for t in range(s, e):
                for d in range(3):
                    used[pm][t][d] += exact(demands[j][d])
                    if used[pm][t][d] > exact(caps[pm][d]):
                        ok = False
            if not ok:
                break
        if not ok:
            continue
        loads = [Fraction(0)] * m
        for j, pm in enumerate(assign):
            s, e = spans[j]
            loads[pm] += exact(demands[j][0]) / exact(caps[pm][0]) * (e - s)
        value = max(loads)
        if best is None or value < best:
            best = value
    return None if best is None else float(best)


def lower_bound(cms, m):
    return max(max(cms), sum(cms) / m)


def ilb_reference(u, avgs):
    a = sum(u) / 3
    return sum((a - x) ** 2 for x in avgs) / 3


def ci_reference(xs):
    n = len(xs)
    mean = sum(xs) / n
    s = math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1))
    h = 1.959963984540054 * s / math.sqrt(n)
    return mean, s, mean - h, mean + h


def per_slot_usage(assignments, demand_of, n_pms, horizon):
    """{(pm, slot): [cpu, mem, sto]} summed from plain assignment tuples."""
    out = {}
    for vm_id, pm, s, e in assignments:
        for t in range(s, e):
            cell = out.setdefault((pm, t), [0.0, 0.0, 0.0])
            for d in range(3):
                cell[d] += demand_of[vm_id][d]
    return out
