"""Value-query accounting.

A :class:`QueryLedger` counts value queries and adaptive rounds. Every batch of
mutually independent queries costs one round, however many queries it holds.
Parallel branches get their own child ledgers via :func:`fork`. On
:func:`join` the parent gains the *maximum* child depth and the *sum* of
child queries.
"""
import itertools
import math
import threading

import numpy as np

from .errors import (
    DoubleJoinError,
    InvalidForkError,
    LedgerStateError,
    MalformedQueryError,
)
from .rng import stream

TOL = 1e-9


class QueryLedger:
    def __init__(self, parent=None):
        self.queries = 0
        self.rounds = 0
        self.parent = parent
        self.joined = False
        self._children = set()
        self._lock = threading.Lock()

    def __repr__(self):
        state = "joined" if self.joined else "live"
        return f"QueryLedger(rounds={self.rounds}, queries={self.queries}, {state})"

    @property
    def live(self):
        return not self.joined

    def charge(self, queries):
        """Record one batch of ``queries`` independent value queries."""
        if queries < 0:
            raise ValueError("negative query count")
        if self.joined:
            raise LedgerStateError("ledger already joined into its parent")
        if queries == 0:
            return
        with self._lock:
            self.queries += int(queries)
            self.rounds += 1

    def snapshot(self):
        return {"rounds": self.rounds, "queries": self.queries}

    def fork(self, branches):
        return fork(self, branches)

    def join(self, children):
        join(self, children)


def fork(ledger, branches):
    if ledger.joined:
        raise LedgerStateError("cannot fork a joined ledger")
    if branches < 1:
        raise InvalidForkError(f"fork needs at least one branch, got {branches}")
    kids = [QueryLedger(parent=ledger) for _ in range(branches)]
    with ledger._lock:
        ledger._children.update(id(k) for k in kids)
    return kids


def join(ledger, children):
    children = list(children)
    if not children:
        raise InvalidForkError("join needs at least one child")
    if ledger.joined:
        raise LedgerStateError("cannot join into a joined ledger")
    seen = set()
    for c in children:
        if c.joined or id(c) in seen:
            raise DoubleJoinError("child ledger joined twice")
        if c.parent is not ledger or id(c) not in ledger._children:
            raise LedgerStateError("child was not forked from this ledger")
        seen.add(id(c))
    with ledger._lock:
        ledger.rounds += max(c.rounds for c in children)
        ledger.queries += sum(c.queries for c in children)
        for c in children:
            c.joined = True
            ledger._children.discard(id(c))


def as_ids(S, n):
    """Validate a set of element ids against a ground set of size ``n``.

    Returns a sorted, duplicate-free int array.
    """
    if not isinstance(S, np.ndarray):
        S = list(S)
    arr = np.unique(np.asarray(S, dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise MalformedQueryError(f"query {arr.tolist()} not contained in ground set of size {n}")
    return arr


def evaluate_batch(ledger, f, batch):
    """Evaluate ``f`` on every set of ``batch`` as one adaptive round."""
    sets = [as_ids(S, f.n) for S in batch]
    ledger.charge(len(sets))
    return [float(f.value(S)) for S in sets]


def marginal(ledger, f, x, S, f_S=None):
    """f(S + x) - f(S).

    Costs two queries in one round, or one query when the caller already knows
    ``f_S``. If ``x`` is already in ``S`` the answer is 0 and nothing is queried.
    """
    ids = as_ids(S, f.n)
    x = int(x)
    if not 0 <= x < f.n:
        raise MalformedQueryError(f"element {x} outside ground set of size {f.n}")
    if np.any(ids == x):
        return 0.0
    with_x = np.union1d(ids, [x])
    if f_S is None:
        ledger.charge(2)
        return float(f.value(with_x)) - float(f.value(ids))
    ledger.charge(1)
    return float(f.value(with_x)) - float(f_S)


def _random_subset(rng, pool, prob=0.5):
    pool = np.asarray(pool)
    return pool[rng.random(pool.size) < prob]


def check_submodular(f, trials, seed, tol=TOL):
    """Randomized diminishing-returns check.

    Samples ``S <= T`` and ``x`` outside ``T``. Returns ``(True, None)`` or
    ``(False, (S, T, x))`` for the first violation found.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = stream(seed, "check", "submodular")
    n = f.n
    every = np.arange(n)
    for _ in range(trials):
        T = _random_subset(rng, every, rng.random())
        outside = np.setdiff1d(every, T)
        if outside.size == 0:
            continue
        S = _random_subset(rng, T, rng.random())
        x = int(rng.choice(outside))
        if _violates(f, S, T, x, tol):
            return False, (frozenset(S.tolist()), frozenset(T.tolist()), x)
    return True, None


def check_submodular_exhaustive(f, tol=TOL):
    """Check every ``(S, T, x)`` triple. Only sensible for ``n <= 8`` or so."""
    n = f.n
    for tmask in range(1 << n):
        T = [i for i in range(n) if tmask >> i & 1]
        for r in range(len(T) + 1):
            for S in itertools.combinations(T, r):
                for x in range(n):
                    if tmask >> x & 1:
                        continue
                    if _violates(f, S, T, x, tol):
                        return False, (frozenset(S), frozenset(T), x)
    return True, None


def _violates(f, S, T, x, tol):
    S = np.asarray(S, dtype=np.int64)
    T = np.asarray(T, dtype=np.int64)
    gain_T = f.value(np.union1d(T, [x])) - f.value(T)
    gain_S = f.value(np.union1d(S, [x])) - f.value(S)
    return gain_T > gain_S + tol


def check_sampling_lemma(f, X, p, trials, seed):
    """Monte Carlo check that E[f(X_p)] >= (1 - p) f(empty), at 3 standard errors."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = stream(seed, "check", "sampling")
    X = np.asarray(sorted(X), dtype=np.int64)
    vals = np.empty(trials)
    for t in range(trials):
        vals[t] = f.value(X[rng.random(X.size) < p])
    mean = vals.mean()
    se = vals.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0
    return bool(mean >= (1.0 - p) * f.value(X[:0]) - 3.0 * se - TOL)


def probe_monotone(f, probes, seed, tol=TOL):
    """Look for a negative marginal f(x | S) among ``probes`` random ``(S, x)`` pairs.

    Each random S is paired with every element outside it, so one batched
    marginal call covers many pairs. Returns ``None`` when nothing negative is
    found, otherwise the violating ``(S, x)``.
    """
    rng = stream(seed, "probe", "monotone")
    every = np.arange(f.n)
    done = 0
    while done < probes and f.n:
        S = _random_subset(rng, every, rng.random())
        outside = np.setdiff1d(every, S)[: probes - done]
        if outside.size == 0:
            continue
        done += outside.size
        g = f.gains(S, outside, f.value(S))
        bad = np.flatnonzero(g < -tol)
        if bad.size:
            return frozenset(S.tolist()), int(outside[bad[0]])
    return None
