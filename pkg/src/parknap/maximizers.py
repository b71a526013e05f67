"""Top-level approximation algorithms built from the threshold kernels.

All three share one skeleton: find the best singleton ``x*``, guess
``k + 1`` geometrically spaced density thresholds below ``alpha n f(x*) / B``,
and for every threshold run several independent threshold sequences in
parallel. The best candidate wins.
"""
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import submod_max, thresh_bin, thresh_seq
from .errors import ContractError, EmptyInstanceError, InvariantViolation
from .oracle import fork, join, probe_monotone
from .rng import child_base, stream

MODES = ("practical", "theoretical")
VARIANTS = ("seq", "bin")

# per-algorithm constants: (precision divisor in theoretical mode, default alpha, eps upper bound)
_KNAPSACK = (125, 2 - math.sqrt(3), 1 / 3)
_MONOTONE = (10, 2 / 3, 1.0)
_CARDINAL = (70, 3 - 2 * math.sqrt(2), 2 / 5)


@dataclass
class ParKnapsackParams:
    """User-facing knobs. ``None`` fields are filled in by :meth:`resolve`.

    Theoretical mode uses the constants the guarantees are proved for and is
    only affordable at tiny n. Practical mode keeps the precision as given,
    caps ``ell`` at 64 and runs 4 repetitions per threshold.
    """

    eps: float = 0.125
    mode: str = "practical"
    alpha: float = None
    p: float = None
    ell: float = None
    repetitions: int = None
    thresholds: int = None
    submod_repetitions: int = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")

    def resolve(self, n, family="knapsack"):
        divisor, alpha, eps_max = {"knapsack": _KNAPSACK, "monotone": _MONOTONE, "cardinal": _CARDINAL}[family]
        if not 0 < self.eps < eps_max:
            raise ContractError(f"eps must lie in (0, {eps_max:.4g}) for {family}, got {self.eps}")
        theory = self.mode == "theoretical"
        eps_hat = self.eps / divisor if theory else self.eps
        alpha = self.alpha if self.alpha is not None else alpha
        if family == "monotone":
            p = 1.0
            ell = math.inf
        else:
            if self.p is not None:
                p = self.p
            elif family == "knapsack" and not theory:
                p = 0.9
            else:
                p = (1 - alpha) / 2
            if self.ell is not None:
                ell = self.ell
            else:
                ell = math.ceil(eps_hat**-2) if theory else min(math.ceil(eps_hat**-2), 64)
        if not 0 < alpha < 1 or not 0 < p <= 1:
            raise ContractError(f"need 0 < alpha < 1 and 0 < p <= 1, got alpha={alpha}, p={p}")
        if self.repetitions is not None:
            reps = self.repetitions
        elif theory:
            reps = max(1, math.ceil(math.log(1 / eps_hat) / eps_hat))
        else:
            reps = 4
        k = self.thresholds if self.thresholds is not None else math.ceil(math.log(max(n, 1)) / eps_hat)
        return Resolved(family, self.mode, self.eps, eps_hat, alpha, p, ell, int(reps), int(k),
                        self.submod_repetitions)


@dataclass(frozen=True)
class Resolved:
    family: str
    mode: str
    eps: float
    eps_hat: float
    alpha: float
    p: float
    ell: float
    repetitions: int
    thresholds: int
    submod_repetitions: int = None


@dataclass
class RunResult:
    S: tuple
    value: float
    cost: float
    feasible: bool
    rounds: int
    queries: int
    winner: str
    algorithm: str
    variant: str = None
    wall_ms: float = 0.0
    round_ceiling: float = math.inf
    query_ceiling: float = math.inf
    trajectory: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    params: Resolved = None
    notes: list = field(default_factory=list)


@dataclass
class RepeatResult:
    runs: list
    budget: float

    @property
    def some_small(self):
        """True when some run used less than half the budget."""
        return any(r.cost < self.budget / 2 for r in self.runs)


def repeat_until_small(inst, X, tau, params, ledger, rng, variant="seq", budget=None):
    """Run the threshold kernel ``params.repetitions`` times in parallel at one threshold."""
    if params.repetitions < 1:
        raise ContractError("need at least one repetition")
    B = inst.budget if budget is None else budget
    kernel = thresh_bin if variant == "bin" else thresh_seq
    base = child_base(rng)
    kids = fork(ledger, params.repetitions)
    runs = [kernel(inst, X, tau, params.eps_hat, params.ell, B, kid, stream(base, "cell", j))
            for j, kid in enumerate(kids)]
    join(ledger, kids)
    return RepeatResult(runs, B)


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ContractError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _best_singleton(inst, pool, ledger):
    """One batch over the empty set and every singleton of ``pool``; returns (x*, f(x*), f(empty))."""
    f = inst.objective
    ledger.charge(pool.size + 1)
    f0 = float(f.value(pool[:0]))
    vals = f.gains(pool[:0], pool, f0) + f0
    order = np.lexsort((pool, inst.costs[pool], -vals))
    i = order[0]
    return int(pool[i]), float(vals[i]), f0


def _grid(inst, H, tau_hat, r, variant, ledger, rng, budget, offset):
    """Fork over thresholds, each forking over repetitions. Returns the flat list of cell results."""
    kids = fork(ledger, r.thresholds + 1)
    base = child_base(rng)
    cells = []
    for i, kid in enumerate(kids):
        tau = tau_hat * (1 - r.eps_hat) ** i
        rep = repeat_until_small(inst, H, tau, r, kid, stream(base, "cell", i), variant, budget)
        for run in rep.runs:
            run.trajectory = [(t + offset, v) for t, v in run.trajectory]
        cells.extend(rep.runs)
    join(ledger, kids)
    return cells


def _trajectory(events, total_rounds, final_value):
    """Best value seen as a function of adaptive rounds."""
    out, best = [], -math.inf
    for t, v in sorted(events):
        if v > best:
            best = v
            if out and out[-1][0] == t:
                out[-1] = (t, v)
            else:
                out.append((t, v))
    if not out or out[-1] != (total_rounds, final_value):
        out.append((total_rounds, max(final_value, best)))
    return out


def _finish(inst, cands, ledger, r0, q0, t0, algorithm, variant, r, cells, events, notes, round_ceiling,
            query_ceiling=math.inf):
    value, S, winner = min(cands, key=lambda c: (-c[0], inst.cost(c[1]), tuple(sorted(c[1]))))
    S = tuple(sorted(int(x) for x in S))
    cost = inst.cost(S)
    feasible = inst.feasible(S)
    if not feasible:
        raise InvariantViolation(f"{algorithm} returned an infeasible set (cost {cost} > {inst.budget})")
    rounds, queries = ledger.rounds - r0, ledger.queries - q0
    return RunResult(
        S=S, value=float(value), cost=cost, feasible=feasible, rounds=rounds, queries=queries,
        winner=winner, algorithm=algorithm, variant=variant, wall_ms=(time.perf_counter() - t0) * 1e3,
        round_ceiling=round_ceiling, query_ceiling=query_ceiling,
        trajectory=_trajectory(events, rounds, float(value)), cells=cells, params=r, notes=notes,
    )


def knapsack_round_ceiling(n, r, variant):
    """Depth bound: singleton batch plus one threshold-kernel run on elements with cost ratio at most n."""
    log_n = math.log(max(n, 2))
    if variant == "seq":
        return 4 * log_n / r.eps_hat + r.ell + 5
    inner = math.ceil(2 * log_n / r.eps_hat) + r.ell + 1
    return 2 + 4 * max(1, math.ceil(math.log2(max(n, 2)))) * inner


def bin_query_ceiling(n, eps_hat, C=1.0):
    ln = math.log(max(n, 2))
    return C * n / eps_hat**3 * ln**3 * math.log(1 / eps_hat)


def par_knapsack(inst, params=None, variant="seq", ledger=None, rng=None):
    """Knapsack-constrained maximization of a non-negative submodular function."""
    from .oracle import QueryLedger

    params = params or ParKnapsackParams()
    ledger = ledger if ledger is not None else QueryLedger()
    rng = rng if rng is not None else stream(0, "algorithm")
    _check_variant(variant)
    if inst.kind != "knapsack":
        raise ContractError("par_knapsack needs a knapsack instance")
    N = inst.elements
    n = N.size
    if n == 0:
        raise EmptyInstanceError("empty ground set")
    r = params.resolve(n, "knapsack")
    t0, r0, q0 = time.perf_counter(), ledger.rounds, ledger.queries
    B, c = inst.budget, inst.costs
    small = c[N] < B / n
    N_minus, N_plus = N[small], N[~small]
    notes = []
    base = child_base(rng)

    top = fork(ledger, 2)
    sm = submod_max(inst, N_minus, r.eps_hat, top[0], stream(base, "small"), r.submod_repetitions)
    if N_plus.size:
        x_star, fx, _ = _best_singleton(inst, N_plus, top[1])
    else:
        notes.append("no large elements: best singleton taken over the whole ground set")
        x_star, fx, _ = _best_singleton(inst, N, top[1])
    cells = []
    if fx <= 0:
        notes.append("best singleton has no value: threshold grid skipped")
    else:
        tau_hat = r.alpha * n * fx / B
        H = N_plus[stream(base, "sample").random(N_plus.size) < r.p]
        if H.size:
            cells = _grid(inst, H, tau_hat, r, variant, top[1], stream(base, "grid"), B, offset=1)
        else:
            notes.append("sampled set H is empty")
    join(ledger, top)

    cands = [(sm.value, sm.S, "small"), (fx, (x_star,), "singleton")]
    cands += [(cell.value, cell.S, "threshold") for cell in cells]
    events = [(1, sm.value), (1, fx)] + [e for cell in cells for e in cell.trajectory]
    qc = bin_query_ceiling(n, r.eps_hat) if variant == "bin" else math.inf
    res = _finish(inst, cands, ledger, r0, q0, t0, "par_knapsack", variant, r, cells, events, notes,
                  knapsack_round_ceiling(n, r, variant), qc)
    if res.rounds > res.round_ceiling:
        raise InvariantViolation(f"par_knapsack used {res.rounds} rounds, ceiling {res.round_ceiling:.1f}")
    return res


def par_knapsack_monotone(inst, eps=0.125, variant="seq", ledger=None, rng=None, params=None,
                          monotone_probes=10_000):
    """Knapsack-constrained maximization of a monotone submodular function.

    Elements cheaper than ``eps_hat B / n`` are added to every candidate
    wholesale; they cost less than ``eps_hat B`` in total, which is exactly the
    budget slack left by the threshold runs.
    """
    from .oracle import QueryLedger

    params = params or ParKnapsackParams(eps=eps)
    params = replace(params, eps=eps)
    ledger = ledger if ledger is not None else QueryLedger()
    rng = rng if rng is not None else stream(0, "algorithm")
    _check_variant(variant)
    f = inst.objective
    if not f.monotone:
        raise ContractError(f"objective {f.name!r} is not declared monotone")
    if monotone_probes:
        # objectives are immutable, so the probe outcome is cached on the objective
        cache = f.__dict__.setdefault("_monotone_probe", {})
        if monotone_probes not in cache:
            cache[monotone_probes] = probe_monotone(f, monotone_probes, seed=0)
        bad = cache[monotone_probes]
        if bad is not None:
            S, x = bad
            raise ContractError(f"monotonicity probe failed: f({x} | {sorted(S)}) < 0")
    if inst.kind != "knapsack":
        raise ContractError("par_knapsack_monotone needs a knapsack instance")
    N = inst.elements
    n = N.size
    if n == 0:
        raise EmptyInstanceError("empty ground set")
    r = params.resolve(n, "monotone")
    t0, r0, q0 = time.perf_counter(), ledger.rounds, ledger.queries
    B, c = inst.budget, inst.costs
    small = c[N] < r.eps_hat * B / n
    N_minus, N_plus = N[small], N[~small]
    notes = []
    base = child_base(rng)

    x_star, fx, _ = _best_singleton(inst, N, ledger)
    cells = []
    if fx <= 0:
        notes.append("best singleton has no value: threshold grid skipped")
    elif N_plus.size:
        tau_hat = r.alpha * n * fx / B
        cells = _grid(inst, N_plus, tau_hat, r, variant, ledger, stream(base, "grid"), (1 - r.eps_hat) * B,
                      offset=1)
    # value every candidate S + N_minus in one more batch
    unions = [np.union1d(np.asarray(cell.S, dtype=np.int64), N_minus) for cell in cells] or [N_minus]
    ledger.charge(len(unions))
    values = [float(f.value(U)) for U in unions]
    cands = [(fx, (x_star,), "singleton")] + [(v, tuple(U.tolist()), "threshold") for v, U in zip(values, unions)]
    events = [(1, fx)] + [(ledger.rounds - r0, v) for v in values]
    # the cost ratio on N_+ is below n / eps_hat and the value rule never fires
    inner = math.ceil(math.log(max(n, 2) ** 2 / r.eps_hat) / r.eps_hat) + 1
    ceiling = 3 + inner if variant == "seq" else 5 + max(1, math.ceil(math.log2(max(n, 2)))) * inner
    res = _finish(inst, cands, ledger, r0, q0, t0, "par_knapsack_monotone", variant, r, cells, events, notes,
                  ceiling)
    if res.rounds > res.round_ceiling:
        raise InvariantViolation(f"monotone run used {res.rounds} rounds, ceiling {res.round_ceiling:.1f}")
    return res


def par_cardinal(inst, eps=0.125, variant="seq", ledger=None, rng=None, params=None):
    """Cardinality-constrained maximization of a non-negative submodular function."""
    from .oracle import QueryLedger

    params = params or ParKnapsackParams(eps=eps)
    params = replace(params, eps=eps)
    ledger = ledger if ledger is not None else QueryLedger()
    rng = rng if rng is not None else stream(0, "algorithm")
    _check_variant(variant)
    if inst.kind != "cardinality":
        raise ContractError("par_cardinal needs a cardinality instance")
    f = inst.objective
    N = inst.elements
    n = N.size
    t0, r0, q0 = time.perf_counter(), ledger.rounds, ledger.queries
    if inst.k == 0:
        ledger.charge(1)
        return _finish(inst, [(float(f.value(N[:0])), (), "empty")], ledger, r0, q0, t0, "par_cardinal", variant,
                       None, [], [], ["k = 0"], 1)
    r = params.resolve(n, "cardinal")
    base = child_base(rng)
    x_star, fx, _ = _best_singleton(inst, N, ledger)
    cells, notes = [], []
    if fx <= 0:
        notes.append("best singleton has no value: threshold grid skipped")
    else:
        tau_hat = r.alpha * n * fx / inst.k
        H = N[stream(base, "sample").random(n) < r.p]
        if H.size:
            cells = _grid(inst, H, tau_hat, r, variant, ledger, stream(base, "grid"), float(inst.k), offset=1)
    cands = [(fx, (x_star,), "singleton")] + [(cell.value, cell.S, "threshold") for cell in cells]
    events = [(1, fx)] + [e for cell in cells for e in cell.trajectory]
    res = _finish(inst, cands, ledger, r0, q0, t0, "par_cardinal", variant, r, cells, events, notes,
                  knapsack_round_ceiling(n, r, variant))
    if res.rounds > res.round_ceiling:
        raise InvariantViolation(f"par_cardinal used {res.rounds} rounds, ceiling {res.round_ceiling:.1f}")
    return res
