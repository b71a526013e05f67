"""Threshold-sequence kernels.

``thresh_seq`` repeatedly draws a random feasible sequence, evaluates every
prefix of it in one adaptive round and commits the longest prefix before a
stopping rule fires:

* cost rule: the good leftovers cost at most ``(1 - eps)`` of the candidates;
* value rule: negative marginals outweigh ``eps`` times the good marginal mass.

The value rule may fire at most ``ell`` times. ``thresh_bin`` locates the same
cut point by binary search (a logarithmic number of one-prefix rounds), using a
value rule made monotone along the sequence, and finishes by dropping
elements whose marginal in the committed order is not positive.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvariantViolation, NumericError
from .oracle import fork, join
from .rng import child_base, stream

FEAS_TOL = 1e-9


def fit_limit(B):
    """Budget used in every fit test; the slack absorbs rounding in running cost sums."""
    return B * (1 + FEAS_TOL)


CHUNK_ENTRIES = 4_000_000


@dataclass
class IterationRecord:
    d: int
    candidates: int
    kstar: int
    istar: int
    jstar: object
    trigger: str
    value: object
    round: int
    probes: int = 0


@dataclass
class ThreshResult:
    S: tuple
    value: float
    cost: float
    ctr: int
    ell: float
    tau: float
    eps: float
    budget: float
    order: tuple = ()
    iterations: int = 0
    iteration_ceiling: float = math.inf
    round_ceiling: float = math.inf
    rounds: int = 0
    queries: int = 0
    candidates: tuple = ()
    trace: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    preliminary: tuple = None
    preliminary_value: float = None
    variant: str = "seq"

    @property
    def hit_value_limit(self):
        return self.ctr >= self.ell


@dataclass
class PrefixTable:
    """Per-prefix data of one while-iteration; row ``i - 1`` describes prefix ``A_i``."""

    A: np.ndarray
    X: np.ndarray
    cost_good: np.ndarray
    good_mass: np.ndarray
    neg_mass: np.ndarray
    good: np.ndarray
    values: np.ndarray = None
    gains: np.ndarray = None
    fits: np.ndarray = None
    requested: int = 0

    @property
    def d(self):
        return int(self.A.size)


def _draw_sequence(X, costs, used0, B, rng, with_index=False):
    """Random feasible sequence plus running cost ``used[i] = c(S) + c(A_i)``.

    Scanning a uniform permutation and skipping elements that no longer fit is
    the same as drawing uniformly among the still-fitting elements at each
    step, since an element that stops fitting never fits again. With
    ``with_index`` the positions of the drawn elements in ``X`` are returned too.
    """
    X = np.asarray(X, dtype=np.int64)
    cX = costs[X].tolist()
    idx, used = [], [used0]
    cur = used0
    cap = fit_limit(B)
    # shuffling positions performs the same swaps as shuffling X itself
    for j in rng.permutation(len(cX)).tolist():
        if cX[j] + cur <= cap:
            idx.append(j)
            cur = cur + cX[j]
            used.append(cur)
    idx = np.asarray(idx, dtype=np.int64)
    if with_index:
        return X[idx], np.asarray(used), idx
    return X[idx], np.asarray(used)


def sample_seq(S, X, B, costs, rng):
    S = np.asarray(sorted(S), dtype=np.int64)
    X = np.asarray(sorted(X), dtype=np.int64)
    if np.intersect1d(S, X).size:
        raise ContractError("candidate set overlaps the current solution")
    cS = float(costs[S].sum())
    if cS > fit_limit(B):
        raise ContractError(f"current solution costs {cS} > budget {B}")
    if X.size and (costs[X] + cS).max() > fit_limit(B):
        raise ContractError("some candidate does not fit next to the current solution")
    A, _ = _draw_sequence(X, costs, cS, B, rng)
    return A.tolist()


def find_kstar(table, cost_X, eps):
    """Return ``(i*, j*, k*)`` for a :class:`PrefixTable`; ``j*`` is None when the value rule never fires.

    The value rule only counts as fired when some negative marginal exists; if
    none does, its inequality can only hold where no good element is left, and
    there the cost rule holds too, so ``k*`` is unaffected.
    """
    d = table.d
    if d == 0:
        raise ContractError("empty prefix table")
    cost_hit = np.flatnonzero(table.cost_good <= (1.0 - eps) * cost_X)
    istar = int(cost_hit[0]) + 1 if cost_hit.size else d
    value_hit = np.flatnonzero((table.neg_mass > 0) & (eps * table.good_mass <= table.neg_mass))
    jstar = int(value_hit[0]) + 1 if value_hit.size else None
    kstar = istar if jstar is None else min(istar, jstar)
    return istar, jstar, kstar


def _position_in(seq, X):
    """Index of each X element in seq, or len(seq) when absent."""
    if X.size == 0:
        return np.zeros(0, dtype=np.int64)
    top = max(int(X.max()), int(seq.max()) if seq.size else 0) + 1
    scratch = np.full(top, seq.size, dtype=np.int64)
    scratch[seq] = np.arange(seq.size)
    return scratch[X]


def _check_finite(arr, what, tau):
    if not np.isfinite(arr).all():
        bad = np.argwhere(~np.isfinite(arr))[0].tolist()
        raise NumericError(f"non-finite {what} at {bad} (tau={tau})")


def build_prefix_table(f, S, fS, X, A, used, B, tau, costs, keep_gains=False, seq_idx=None):
    """Evaluate every prefix of ``A`` against the candidates ``X``.

    Only the ``d + sum_i |X_i|`` requested values are meaningful; callers charge
    exactly that many queries. ``seq_idx`` (positions of ``A`` in ``X``) is
    optional and saves a lookup.
    """
    d, m = A.size, X.size
    if seq_idx is None:
        pos = _position_in(A, X)
    else:
        pos = np.full(m, d, dtype=np.int64)
        pos[seq_idx] = np.arange(d)
    cX = costs[X]
    joint = None
    if d and not keep_gains and d * m <= CHUNK_ENTRIES and hasattr(f, "prefix_table"):
        if seq_idx is None:
            seq_idx = np.empty(d, dtype=np.int64)
            inside = np.flatnonzero(pos < d)
            seq_idx[pos[inside]] = inside
        joint = f.prefix_table(S, A, X, seq_idx, fS)
    if joint is None:
        values = np.concatenate([[fS], f.prefix_values(S, A, fS)])
    else:
        values = np.concatenate([[fS], joint[0]])
    _check_finite(values, "prefix value", tau)
    cost_good = np.empty(d)
    good_mass = np.empty(d)
    neg_mass = np.empty(d)
    good = np.zeros((d, m), dtype=bool)
    requested = d
    fits_all = np.zeros((d, m), dtype=bool) if keep_gains else None
    gains_all = np.full((d, m), np.nan) if keep_gains else None
    step = max(1, CHUNK_ENTRIES // max(m, 1))
    cap = fit_limit(B)
    for lo in range(1, d + 1, step):
        hi = min(d + 1, lo + step)
        rows = np.arange(lo, hi)
        fits = (pos[None, :] >= rows[:, None]) & (cX[None, :] + used[lo:hi][:, None] <= cap)
        requested += int(fits.sum())
        g = joint[1] if joint is not None else f.prefix_gains(S, A, X, lo, hi, values, fits)
        gf = np.where(fits, g, 0.0)
        _check_finite(gf, "marginal", tau)
        G = fits & (gf >= tau * cX)
        cost_good[lo - 1 : hi - 1] = G @ cX
        good_mass[lo - 1 : hi - 1] = (gf * G).sum(axis=1)
        # gf is zero outside fits, so negatives are exactly the E_i entries
        neg_mass[lo - 1 : hi - 1] = -np.minimum(gf, 0.0).sum(axis=1)
        good[lo - 1 : hi - 1] = G
        if keep_gains:
            fits_all[lo - 1 : hi - 1] = fits
            gains_all[lo - 1 : hi - 1] = gf
    return PrefixTable(A, X, cost_good, good_mass, neg_mass, good, values, gains_all, fits_all, requested)


def iteration_ceiling(n, kappa, eps, ell):
    return math.ceil(math.log(max(n, 1) * max(kappa, 1.0)) / eps) + ell + 1


# running tally of per-iteration ceiling checks, read by the acceptance suite
CEILING_STATS = {"checks": 0, "violations": 0}


def _check_iterations(name, iterations, ctr, cost_part):
    # cost-rule iterations shrink c(X) by (1 - eps); value-rule iterations number ctr <= ell
    CEILING_STATS["checks"] += 1
    if iterations > cost_part + ctr:
        CEILING_STATS["violations"] += 1
        raise InvariantViolation(f"{name} ran {iterations} iterations, ceiling {cost_part + ctr}")


def _initial_filter(inst, X, tau, B, ledger):
    f, costs = inst.objective, inst.costs
    ledger.charge(X.size + 1)
    f_empty = float(f.value(X[:0]))
    single = f.gains(X[:0], X, f_empty) + f_empty
    _check_finite(single, "singleton value", tau)
    keep = (single >= tau * costs[X]) & (costs[X] <= fit_limit(B))
    return X[keep], f_empty


def _validate(tau, eps, ell):
    if not tau > 0:
        raise ContractError(f"threshold must be positive, got {tau}")
    if not 0 < eps < 1:
        raise ContractError(f"precision must lie in (0, 1), got {eps}")
    if not ell >= 1:
        raise ContractError("ell must be at least 1")


def thresh_seq(inst, X, tau, eps, ell, B, ledger, rng):
    """One run of the threshold-sequence algorithm over candidates ``X``."""
    _validate(tau, eps, ell)
    f, costs = inst.objective, inst.costs
    r0, q0 = ledger.rounds, ledger.queries
    X_in = np.unique(np.asarray(list(X), dtype=np.int64))
    X, f_empty = _initial_filter(inst, X_in, tau, B, ledger)
    kappa = float(costs[X].max() / costs[X].min()) if X.size else 1.0
    cost_part = iteration_ceiling(inst.n, kappa, eps, 0)
    ceiling = cost_part + ell
    order = []
    S = np.zeros(0, dtype=np.int64)
    fS, cS, ctr = f_empty, 0.0, 0
    trace, trajectory = [], [(ledger.rounds - r0, fS)]
    while X.size and ctr < ell:
        A, used, idx = _draw_sequence(X, costs, cS, B, rng, with_index=True)
        table = build_prefix_table(f, S, fS, X, A, used, B, tau, costs, seq_idx=idx)
        ledger.charge(table.requested)
        istar, jstar, kstar = find_kstar(table, float(costs[X].sum()), eps)
        order.extend(A[:kstar].tolist())
        S = np.sort(np.asarray(order, dtype=np.int64))
        fS, cS = float(table.values[kstar]), float(used[kstar])
        value_rule = jstar is not None and jstar < istar
        ctr += value_rule
        trace.append(IterationRecord(A.size, X.size, kstar, istar, jstar, "value" if value_rule else "cost",
                                     fS, ledger.rounds - r0))
        trajectory.append((ledger.rounds - r0, fS))
        X = X[table.good[kstar - 1]]
        _check_iterations("thresh_seq", len(trace), ctr, cost_part)
    if cS > fit_limit(B):
        raise InvariantViolation(f"thresh_seq solution costs {cS} > budget {B}")
    return ThreshResult(
        S=tuple(S.tolist()), value=fS, cost=cS, ctr=ctr, ell=ell, tau=tau, eps=eps, budget=B,
        order=tuple(order), iterations=len(trace), iteration_ceiling=ceiling,
        round_ceiling=ceiling + 1, rounds=ledger.rounds - r0, queries=ledger.queries - q0,
        candidates=tuple(X_in.tolist()), trace=trace, trajectory=trajectory,
    )


# -- binary-search variant ----------------------------------------------------


class BinaryProbe:
    """Evaluates the monotone cost/value conditions at single prefixes of one sequence.

    Prefix values ``f(S + A_t)`` are cached across probes of the same
    sequence, so each is charged once.
    """

    def __init__(self, f, S, fS, X, A, used, B, tau, eps, costs, ledger=None):
        self.f, self.S, self.X, self.A, self.used = f, S, X, A, used
        self.B, self.tau, self.eps, self.costs = B, tau, eps, costs
        self.ledger = ledger
        self.values = [fS]
        self.pos = _position_in(A, X)
        self.cost_X = float(costs[X].sum())
        self.cache = {}

    def _extend_values(self, i):
        have = len(self.values) - 1
        if i <= have:
            return 0
        base = np.union1d(self.S, self.A[:have])
        more = self.f.prefix_values(base, self.A[have:i], self.values[-1])
        _check_finite(more, "prefix value", self.tau)
        self.values.extend(float(v) for v in more)
        return i - have

    def __call__(self, i):
        if i in self.cache:
            return self.cache[i][:2]
        cX = self.costs[self.X]
        alive = self.pos >= i
        fits = alive & (cX + self.used[i] <= fit_limit(self.B))
        values_before = len(self.values) - 1
        new_values = max(0, i - values_before)
        if self.ledger is not None:
            self.ledger.charge(new_values + int(alive.sum()))
        self._extend_values(i)
        vals = np.asarray(self.values)
        g = self.f.prefix_gains(self.S, self.A, self.X, i, i + 1, vals, alive[None, :])[0]
        g = np.where(alive, g, 0.0)
        _check_finite(g, "marginal", self.tau)
        good = fits & (g >= self.tau * cX)
        steps = np.diff(vals[: i + 1])
        rhs = -g[alive & (g < 0)].sum() - steps[steps < 0].sum()
        lhs = self.eps * g[good].sum()
        c1 = bool((cX * good).sum() <= (1.0 - self.eps) * self.cost_X)
        c2 = bool(rhs > 0 and lhs <= rhs)
        self.cache[i] = (c1, c2, good, float(vals[i]))
        return c1, c2


def binary_search_kstar(d, probe):
    """First prefix length in ``1..d`` where ``probe`` reports either condition.

    ``probe(i) -> (c1, c2)`` must be monotone in ``i`` and true at ``d``; the
    last index is never probed.
    """
    lo, hi = 1, d
    while lo < hi:
        mid = (lo + hi) // 2
        c1, c2 = probe(mid)
        if c1 or c2:
            hi = mid
        else:
            lo = mid + 1
    return hi


def linear_scan_kstar(d, probe):
    for i in range(1, d + 1):
        c1, c2 = probe(i)
        if c1 or c2:
            return i
    return d


def check_bin_monotonicity(c1, c2):
    """True when both boolean sequences never go from true back to false."""
    def mono(seq):
        seq = list(seq)
        return all(not a or b for a, b in zip(seq, seq[1:]))
    return mono(c1) and mono(c2)


def bin_conditions(f, S, fS, X, A, used, B, tau, eps, costs):
    """Materialize ``(c1_i, c2_i)`` for every prefix. Test helper, no accounting."""
    probe = BinaryProbe(f, S, fS, X, A, used, B, tau, eps, costs)
    pairs = [probe(i) for i in range(1, A.size + 1)]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def thresh_bin(inst, X, tau, eps, ell, B, ledger, rng):
    """Binary-search variant of :func:`thresh_seq` with the final positive-marginal filter."""
    _validate(tau, eps, ell)
    f, costs = inst.objective, inst.costs
    r0, q0 = ledger.rounds, ledger.queries
    X_in = np.unique(np.asarray(list(X), dtype=np.int64))
    X, f_empty = _initial_filter(inst, X_in, tau, B, ledger)
    kappa = float(costs[X].max() / costs[X].min()) if X.size else 1.0
    cost_part = iteration_ceiling(inst.n, kappa, eps, 0)
    ceiling = cost_part + ell
    log_n = max(1, math.ceil(math.log2(max(inst.n, 2))))
    round_ceiling = 4 * log_n * ceiling
    order = []
    S = np.zeros(0, dtype=np.int64)
    fS, cS, ctr = f_empty, 0.0, 0
    trace, trajectory = [], [(ledger.rounds - r0, fS)]
    while X.size and ctr < ell:
        A, used = _draw_sequence(X, costs, cS, B, rng)
        probe = BinaryProbe(f, S, fS, X, A, used, B, tau, eps, costs, ledger)
        kstar = binary_search_kstar(A.size, probe)
        if kstar in probe.cache:
            c1, c2, good, fS = probe.cache[kstar]
            flag = c2 and not c1
        else:
            # k* = d was never probed: nothing fits after the full sequence, so c1 holds
            good, fS, flag = np.zeros(X.size, dtype=bool), None, False
        ctr += flag
        order.extend(A[:kstar].tolist())
        S = np.sort(np.asarray(order, dtype=np.int64))
        cS = float(used[kstar])
        trace.append(IterationRecord(A.size, X.size, kstar, kstar, None, "value" if flag else "cost",
                                     fS, ledger.rounds - r0, probes=len(probe.cache)))
        if fS is not None:
            trajectory.append((ledger.rounds - r0, fS))
        X = X[good]
        _check_iterations("thresh_bin", len(trace), ctr, cost_part)
    if cS > fit_limit(B):
        raise InvariantViolation(f"thresh_bin solution costs {cS} > budget {B}")

    # filter: keep elements with positive marginal in the committed order
    seq = np.asarray(order, dtype=np.int64)
    if seq.size:
        ledger.charge(seq.size)
        vals = np.concatenate([[f_empty], f.prefix_values(seq[:0], seq, f_empty)])
        _check_finite(vals, "prefix value", tau)
        prelim_value = float(vals[-1])
        keep = np.diff(vals) > 0
    else:
        prelim_value, keep = f_empty, np.zeros(0, dtype=bool)
    final = np.sort(seq[keep])
    if keep.all():
        value = prelim_value
    else:
        ledger.charge(1)
        value = float(f.value(final))
    cost = float(costs[final].sum())
    if cost > cS + FEAS_TOL * max(B, 1.0):
        raise InvariantViolation("filtered solution costs more than the preliminary one")
    if value < prelim_value - 1e-9:
        raise InvariantViolation(f"filtering lowered the value: {value} < {prelim_value}")
    trajectory.append((ledger.rounds - r0, value))
    rounds = ledger.rounds - r0
    if rounds > round_ceiling:
        raise InvariantViolation(f"thresh_bin used {rounds} rounds, ceiling {round_ceiling}")
    return ThreshResult(
        S=tuple(final.tolist()), value=value, cost=cost, ctr=ctr, ell=ell, tau=tau, eps=eps, budget=B,
        order=tuple(order), iterations=len(trace), iteration_ceiling=ceiling, round_ceiling=round_ceiling,
        rounds=rounds, queries=ledger.queries - q0, candidates=tuple(X_in.tolist()), trace=trace,
        trajectory=trajectory, preliminary=tuple(S.tolist()), preliminary_value=prelim_value, variant="bin",
    )


# -- unconstrained ------------------------------------------------------------


@dataclass
class SubmodResult:
    S: tuple
    value: float
    draws: list
    draw_values: list


def submod_max(inst, elements, eps, ledger, rng, repetitions=None):
    """Unconstrained maximization over ``elements`` by uniform random halves.

    Each repetition keeps every element with probability 1/2; the best of the
    random sets, the empty set and all singletons is returned. All repetitions
    run in parallel, so the whole call is one adaptive round.
    """
    f = inst.objective
    N = np.unique(np.asarray(list(elements), dtype=np.int64))
    if N.size == 0:
        ledger.charge(1)
        return SubmodResult((), float(f.value(N)), [], [])
    if repetitions is None:
        repetitions = max(1, math.ceil(math.log(1 / eps) / eps)) if eps < 1 else 1
    base = child_base(rng)
    kids = fork(ledger, repetitions)
    draws = []
    for j, kid in enumerate(kids):
        r = stream(base, "submod", j)
        draws.append(N[r.random(N.size) < 0.5])
        kid.charge(1 + (1 + N.size if j == 0 else 0))
    f_empty = float(f.value(N[:0]))
    single = f.gains(N[:0], N, f_empty) + f_empty
    draw_values = [float(f.value(R)) for R in draws]
    join(ledger, kids)
    cands = [(f_empty, N[:0])] + [(float(v), N[i : i + 1]) for i, v in enumerate(single)]
    cands += list(zip(draw_values, draws))
    best = best_candidate(cands, inst.costs)
    return SubmodResult(tuple(best[1].tolist()), best[0], draws, draw_values)


def best_candidate(cands, costs):
    """Argmax by value; ties go to the cheaper set, then the lexicographically smaller one."""
    def key(c):
        value, S = c
        S = np.asarray(S, dtype=np.int64)
        return (-value, float(costs[S].sum()), tuple(sorted(S.tolist())))
    return min(cands, key=key)


def leftover_good_mass(inst, candidates, S, fS, tau, B, ledger):
    """Sum of f(x | S) over candidates outside S that are still good and still fit."""
    f, costs = inst.objective, inst.costs
    S = np.asarray(sorted(S), dtype=np.int64)
    cS = float(costs[S].sum())
    pool = np.setdiff1d(np.asarray(candidates, dtype=np.int64), S)
    pool = pool[costs[pool] + cS <= fit_limit(B)]
    ledger.charge(pool.size)
    g = f.gains(S, pool, fS)
    good = g >= tau * costs[pool]
    return float(g[good].sum())
