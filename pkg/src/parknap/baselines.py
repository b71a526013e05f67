"""Sequential greedy baselines with lazy evaluations.

``greedy`` picks by marginal value, ``sample_greedy`` by marginal density and
keeps each pick only with probability ``p``. Both stop at the first
non-positive marginal. Every lazy re-evaluation is its own adaptive round,
which is what makes these baselines linear in adaptivity.
"""
import heapq
import time

import numpy as np

from .errors import ContractError
from .core import fit_limit
from .maximizers import RunResult
from .oracle import QueryLedger
from .rng import stream


def _start(inst, ledger):
    f, c = inst.objective, inst.costs
    N = inst.elements[inst.costs[inst.elements] <= inst.budget]
    ledger.charge(N.size + 1)
    f0 = float(f.value(N[:0]))
    vals = f.gains(N[:0], N, f0) + f0
    return N, f0, vals


def _lazy(inst, ledger, rng, p, by_density, algorithm):
    ledger = ledger if ledger is not None else QueryLedger()
    t0, r0, q0 = time.perf_counter(), ledger.rounds, ledger.queries
    f, c, B = inst.objective, inst.costs, inst.budget
    N, f0, vals = _start(inst, ledger)
    key = (lambda g, x: g / c[x]) if by_density else (lambda g, x: g)
    # entries: (-key, id, stamp, f(S + x)); stamp = |S| when the key was computed
    heap = [(-key(v - f0, x), int(x), 0, float(v)) for x, v in zip(N, vals)]
    heapq.heapify(heap)
    S, fS, cS = [], f0, 0.0
    S_arr = np.zeros(0, dtype=np.int64)
    trajectory = [(ledger.rounds - r0, f0)]
    while heap:
        neg, x, stamp, v = heapq.heappop(heap)
        if c[x] + cS > fit_limit(B):
            continue
        if stamp < len(S):
            # one query f(S + x), answered through the marginal kernel
            ledger.charge(1)
            v = fS + float(f.gains(S_arr, np.array([x]), fS)[0])
            heapq.heappush(heap, (-key(v - fS, x), x, len(S), v))
            continue
        if -neg <= 0:
            break
        if p < 1 and rng.random() >= p:
            continue
        S.append(x)
        S_arr = np.sort(np.asarray(S, dtype=np.int64))
        fS, cS = v, cS + c[x]
        trajectory.append((ledger.rounds - r0, fS))
    S = tuple(sorted(S))
    return RunResult(
        S=S, value=fS, cost=inst.cost(S), feasible=inst.feasible(S), rounds=ledger.rounds - r0,
        queries=ledger.queries - q0, winner=algorithm, algorithm=algorithm,
        wall_ms=(time.perf_counter() - t0) * 1e3, trajectory=trajectory,
    )


def greedy(inst, ledger=None, rng=None):
    """Lazy greedy by marginal value."""
    return _lazy(inst, ledger, rng, 1.0, False, "greedy")


def sample_greedy(inst, p=0.9, ledger=None, rng=None):
    """Lazy greedy by marginal density; each pick is kept with probability ``p``, else discarded for good."""
    if not 0 < p <= 1:
        raise ContractError(f"p must lie in (0, 1], got {p}")
    rng = rng if rng is not None else stream(0, "algorithm", "sample_greedy")
    return _lazy(inst, ledger, rng, p, True, "sample_greedy")


def naive_greedy(inst, ledger=None, by_density=False):
    """Non-lazy reference: re-evaluates every feasible candidate each step (one round per step)."""
    ledger = ledger if ledger is not None else QueryLedger()
    f, c, B = inst.objective, inst.costs, inst.budget
    N, f0, _ = _start(inst, ledger)
    S, fS, cS = [], f0, 0.0
    left = [int(x) for x in N]
    while True:
        left = [x for x in left if c[x] + cS <= fit_limit(B)]
        if not left:
            break
        ledger.charge(len(left))
        g = f.gains(np.asarray(sorted(S), dtype=np.int64), np.asarray(left), fS)
        vals = fS + g
        score = g / c[left] if by_density else g
        best = int(np.argmax(score))  # first maximum, i.e. smallest id
        if score[best] <= 0:
            break
        x = left.pop(best)
        S.append(x)
        fS, cS = float(vals[best]), cS + c[x]
    return tuple(sorted(S)), fS
