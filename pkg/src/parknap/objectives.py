"""Set-function objectives.

Every objective exposes ``value(S)`` for a sorted id array ``S``, plus three
batch kernels used by the algorithms:

* ``gains(base, cands, base_value)``: ``f(x | base)`` for every candidate.
* ``prefix_values(base, seq, base_value)``: ``f(base + A_i)`` for ``i = 1..d``.
* ``prefix_gains(base, seq, cands, lo, hi, base_value, mask)``: rows ``i`` in
  ``[lo, hi)`` of ``f(x | base + A_i)``. Row ``i`` is the prefix of length
  ``i``, so row 0 is ``base`` itself. With a ``mask`` only the masked entries
  are defined; the mask must exclude members of ``base + A_i``.

The :class:`SetFunction` defaults answer the kernels with one ``value`` call
per requested set (entries masked out are left as NaN). Subclasses override
them with vectorized formulas that return the same numbers. The kernels only
compute; query accounting is the caller's job (see :mod:`parknap.oracle`).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


def _ids(S):
    if isinstance(S, np.ndarray) and S.dtype == np.int64:
        return S
    return np.asarray(sorted(S), dtype=np.int64)


class SetFunction:
    n = 0
    monotone = False
    name = "set-function"

    def value(self, S):
        raise NotImplementedError

    def __call__(self, S):
        return self.value(_ids(S))

    def gains(self, base, cands, base_value):
        base = _ids(base)
        cands = np.asarray(cands, dtype=np.int64)
        out = np.zeros(cands.size)
        inside = np.isin(cands, base)
        for j in np.flatnonzero(~inside):
            out[j] = self.value(np.union1d(base, [cands[j]])) - base_value
        return out

    def prefix_values(self, base, seq, base_value):
        base = _ids(base)
        seq = np.asarray(seq, dtype=np.int64)
        return np.array([self.value(np.union1d(base, seq[: i + 1])) for i in range(seq.size)])

    def prefix_gains(self, base, seq, cands, lo, hi, prefix_vals, mask=None):
        """``prefix_vals[i]`` must hold ``f(base + A_i)`` for ``i`` in ``[lo, hi)``."""
        base = _ids(base)
        seq = np.asarray(seq, dtype=np.int64)
        cands = np.asarray(cands, dtype=np.int64)
        out = np.full((hi - lo, cands.size), np.nan)
        for r, i in enumerate(range(lo, hi)):
            cur = np.union1d(base, seq[:i])
            inside = np.isin(cands, cur)
            for j in range(cands.size):
                if inside[j]:
                    out[r, j] = 0.0
                elif mask is None or mask[r, j]:
                    out[r, j] = self.value(np.union1d(cur, [cands[j]])) - prefix_vals[i]
        return out


class FunctionObjective(SetFunction):
    """Adapter for a plain Python callable on frozensets."""

    def __init__(self, fn, n, monotone=False, name="function"):
        self.fn = fn
        self.n = int(n)
        self.monotone = monotone
        self.name = name

    def value(self, S):
        return float(self.fn(frozenset(int(x) for x in S)))


class Counted(SetFunction):
    """Wraps an objective, disables its fast kernels and counts ``value`` calls.

    Used to cross-check the ledger: every query an algorithm charges must
    correspond to exactly one evaluation here.
    """

    def __init__(self, inner):
        self.inner = inner
        self.n = inner.n
        self.monotone = inner.monotone
        self.name = inner.name
        self.calls = 0

    def value(self, S):
        self.calls += 1
        return self.inner.value(S)


def _indicator(n, ids):
    z = np.zeros(n)
    z[ids] = 1.0
    return z


def _dense_block(Q, rows, cols):
    if sparse.issparse(Q):
        return Q[rows][:, cols].toarray()
    return Q[np.ix_(rows, cols)]


class QuadraticObjective(SetFunction):
    """f(S) = sum_{i in S} lin_i - sum_{i, j in S} Q_ij with Q symmetric, zero diagonal.

    Covers weighted cut (lin = weighted degree, Q = adjacency) and the movie
    objective. Submodular whenever Q >= 0.
    """

    name = "quadratic"

    # below this size a dense copy of Q is cheaper than sparse fancy indexing
    DENSE_LIMIT = 3000

    def __init__(self, lin, Q):
        self.lin = np.asarray(lin, dtype=float)
        self.n = self.lin.size
        if sparse.issparse(Q) and self.n <= self.DENSE_LIMIT:
            Q = Q.toarray()
        self.Q = Q.tocsr() if sparse.issparse(Q) else np.asarray(Q, dtype=float)

    def value(self, S):
        S = _ids(S)
        if S.size == 0:
            return 0.0
        return float(self.lin[S].sum() - _dense_block(self.Q, S, S).sum())

    def _weights_to(self, targets, ids):
        # sum_{j in ids} Q[t, j] for each target t
        if ids.size == 0:
            return np.zeros(len(targets))
        if not sparse.issparse(self.Q):
            return self.Q.take(targets, axis=0).take(ids, axis=1).sum(axis=1)
        z = _indicator(self.n, ids)
        return np.asarray(self.Q[targets] @ z).ravel()

    def gains(self, base, cands, base_value):
        base = _ids(base)
        cands = np.asarray(cands, dtype=np.int64)
        out = self.lin[cands] - 2.0 * self._weights_to(cands, base)
        out[np.isin(cands, base)] = 0.0
        return out

    def prefix_values(self, base, seq, base_value):
        base = _ids(base)
        seq = np.asarray(seq, dtype=np.int64)
        if seq.size == 0:
            return np.zeros(0)
        if sparse.issparse(self.Q):
            inner = np.triu(_dense_block(self.Q, seq, seq), 1).sum(axis=0)
            to_base = self._weights_to(seq, base)
        else:
            block = self.Q.take(seq, axis=0).take(np.concatenate([base, seq]), axis=1)
            to_base = block[:, : base.size].sum(axis=1)
            # inner[t] = sum_{s < t} Q[a_s, a_t]
            run = np.cumsum(block[:, base.size :], axis=0)
            inner = np.zeros(seq.size)
            inner[1:] = run[np.arange(seq.size - 1), np.arange(1, seq.size)]
        step = self.lin[seq] - 2.0 * (to_base + inner)
        return base_value + np.cumsum(step)

    def prefix_table(self, base, seq, cands, seq_idx, base_value):
        """Prefix values and marginals in one pass, or None for a sparse Q.

        ``seq`` must be drawn from ``cands`` (``cands[seq_idx] == seq``) and
        ``cands`` must avoid ``base``. Row ``i`` of the gains holds
        ``f(x | base + seq[:i])`` for ``i = 1..len(seq)``; members are not zeroed.
        """
        if sparse.issparse(self.Q):
            return None
        base = _ids(base)
        block = self.Q.take(np.concatenate([base, seq]), axis=0).take(cands, axis=1)
        w = np.empty((seq.size + 1, cands.size))
        w[0] = block[: base.size].sum(axis=0)
        np.cumsum(block[base.size :], axis=0, out=w[1:])
        w[1:] += w[0]
        g = self.lin[cands] - 2.0 * w
        steps = g[np.arange(seq.size), seq_idx]
        return base_value + np.cumsum(steps), g[1:]

    def prefix_gains(self, base, seq, cands, lo, hi, prefix_vals, mask=None):
        base = _ids(base)
        seq = np.asarray(seq, dtype=np.int64)
        cands = np.asarray(cands, dtype=np.int64)
        if sparse.issparse(self.Q):
            acc = self._weights_to(cands, np.concatenate([base, seq[:lo]]))
            block = _dense_block(self.Q, seq[lo : hi - 1], cands) if hi - lo > 1 else None
        else:
            # one fancy index for both the base part and the running prefix part
            full = self.Q.take(np.concatenate([base, seq[: hi - 1]]), axis=0).take(cands, axis=1)
            acc = full[: base.size + lo].sum(axis=0)
            block = full[base.size + lo :] if hi - lo > 1 else None
        w = np.empty((hi - lo, cands.size))
        w[0] = acc
        if block is not None:
            w[1:] = acc + np.cumsum(block, axis=0)
        out = self.lin[cands][None, :] - 2.0 * w
        if mask is None:
            _zero_members(out, base, seq, cands, lo)
        return out


def _zero_members(out, base, seq, cands, lo):
    """Set f(x | base + A_i) = 0 for candidates already in base + A_i."""
    out[:, np.isin(cands, base)] = 0.0
    pos = np.full(cands.size, np.iinfo(np.int64).max)
    order = np.argsort(seq, kind="stable")
    loc = np.searchsorted(seq[order], cands)
    loc = np.minimum(loc, max(seq.size - 1, 0))
    if seq.size:
        hit = seq[order][loc] == cands
        pos[hit] = order[loc[hit]]
    rows = np.arange(lo, lo + out.shape[0])[:, None]
    out[pos[None, :] < rows] = 0.0


class ModularObjective(SetFunction):
    name = "modular"

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.n = self.values.size
        self.monotone = bool(np.all(self.values >= 0))

    def value(self, S):
        return float(self.values[_ids(S)].sum())

    def gains(self, base, cands, base_value):
        cands = np.asarray(cands, dtype=np.int64)
        out = self.values[cands].copy()
        out[np.isin(cands, _ids(base))] = 0.0
        return out

    def prefix_values(self, base, seq, base_value):
        return base_value + np.cumsum(self.values[np.asarray(seq, dtype=np.int64)])

    def prefix_gains(self, base, seq, cands, lo, hi, prefix_vals, mask=None):
        cands = np.asarray(cands, dtype=np.int64)
        out = np.tile(self.values[cands], (hi - lo, 1))
        if mask is None:
            _zero_members(out, _ids(base), np.asarray(seq, dtype=np.int64), cands, lo)
        return out


class CoverageObjective(SetFunction):
    """Weighted coverage: f(S) = total weight of universe items covered by S. Monotone."""

    name = "coverage"
    monotone = True

    def __init__(self, covers, weights):
        self.C = np.asarray(covers, dtype=bool)
        self.w = np.asarray(weights, dtype=float)
        self.n = self.C.shape[0]
        self._Cf = self.C.astype(float)

    def _covered(self, ids):
        return self.C[ids].any(axis=0) if ids.size else np.zeros(self.C.shape[1], bool)

    def value(self, S):
        return float(self.w[self._covered(_ids(S))].sum())

    def gains(self, base, cands, base_value):
        cands = np.asarray(cands, dtype=np.int64)
        free = self.w * ~self._covered(_ids(base))
        return self._Cf[cands] @ free

    def prefix_values(self, base, seq, base_value):
        seq = np.asarray(seq, dtype=np.int64)
        cov = np.logical_or.accumulate(self.C[seq] | self._covered(_ids(base))[None, :], axis=0)
        return cov.astype(float) @ self.w

    def prefix_gains(self, base, seq, cands, lo, hi, prefix_vals, mask=None):
        seq = np.asarray(seq, dtype=np.int64)
        cands = np.asarray(cands, dtype=np.int64)
        start = self._covered(np.concatenate([_ids(base), seq[:lo]]))
        if hi - lo > 1:
            cov = np.logical_or.accumulate(
                np.vstack([start, self.C[seq[lo : hi - 1]]]), axis=0
            )
        else:
            cov = start[None, :]
        free = (~cov) * self.w[None, :]
        return free @ self._Cf[cands].T


class RevenueObjective(SetFunction):
    """f(S) = sum_{i not in S} a_i sqrt(sum_{j in S} w_ij)."""

    name = "revenue"

    def __init__(self, W, a):
        self.W = sparse.csr_matrix(W, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.n = self.a.size

    def _influence(self, ids):
        if ids.size == 0:
            return np.zeros(self.n)
        return np.asarray(self.W[:, ids].sum(axis=1)).ravel()

    def value(self, S):
        S = _ids(S)
        s = self._influence(S)
        out = np.ones(self.n, bool)
        out[S] = False
        return float(self.a[out] @ np.sqrt(s[out]))

    def _row_gains(self, cands, s, outside):
        """f(x | T) for x in cands, given influence s = W 1_T and outside = not in T."""
        block = self.W[cands]
        indptr, idx, data = block.indptr, block.indices, block.data
        row = np.repeat(np.arange(cands.size), np.diff(indptr))
        s_nb = s[idx]
        terms = self.a[idx] * outside[idx] * (np.sqrt(s_nb + data) - np.sqrt(s_nb))
        gain = np.bincount(row, weights=terms, minlength=cands.size).astype(float, copy=False)
        gain -= self.a[cands] * np.sqrt(s[cands])
        gain[~outside[cands]] = 0.0
        return gain

    def gains(self, base, cands, base_value):
        base = _ids(base)
        cands = np.asarray(cands, dtype=np.int64)
        outside = np.ones(self.n, bool)
        outside[base] = False
        return self._row_gains(cands, self._influence(base), outside)

    def prefix_values(self, base, seq, base_value):
        base = _ids(base)
        seq = np.asarray(seq, dtype=np.int64)
        s = self._influence(base)
        outside = np.ones(self.n, bool)
        outside[base] = False
        vals = np.empty(seq.size)
        cur = base_value
        for t, x in enumerate(seq):
            cur += self._row_gains(np.array([x]), s, outside)[0]
            vals[t] = cur
            lo, hi = self.W.indptr[x], self.W.indptr[x + 1]
            s[self.W.indices[lo:hi]] += self.W.data[lo:hi]
            outside[x] = False
        return vals

    def prefix_gains(self, base, seq, cands, lo, hi, prefix_vals, mask=None):
        base = _ids(base)
        seq = np.asarray(seq, dtype=np.int64)
        cands = np.asarray(cands, dtype=np.int64)
        done = np.concatenate([base, seq[:lo]])
        s = self._influence(done)
        outside = np.ones(self.n, bool)
        outside[done] = False
        out = np.empty((hi - lo, cands.size))
        for r, i in enumerate(range(lo, hi)):
            if r:
                x = seq[i - 1]
                a, b = self.W.indptr[x], self.W.indptr[x + 1]
                s[self.W.indices[a:b]] += self.W.data[a:b]
                outside[x] = False
            out[r] = self._row_gains(cands, s, outside)
        return out


# -- instance types and reference formulas -----------------------------------


@dataclass
class WeightedGraph:
    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    _adj: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64)
        self.v = np.asarray(self.v, dtype=np.int64)
        self.w = np.asarray(self.w, dtype=float)
        if not (self.u.size == self.v.size == self.w.size):
            raise ValueError("edge arrays differ in length")
        if self.u.size:
            if np.any(self.u == self.v):
                raise ValueError("self-loops are not allowed")
            if min(self.u.min(), self.v.min()) < 0 or max(self.u.max(), self.v.max()) >= self.n:
                raise ValueError("edge endpoint outside vertex range")
            if not np.all(np.isfinite(self.w)) or np.any(self.w < 0):
                raise ValueError("edge weights must be finite and nonnegative")
            lo, hi = np.minimum(self.u, self.v), np.maximum(self.u, self.v)
            if np.unique(lo * self.n + hi).size != lo.size:
                raise ValueError("duplicate edge")

    @classmethod
    def from_edges(cls, n, edges):
        edges = list(edges)
        if not edges:
            return cls(n, [], [], [])
        u, v, w = zip(*edges)
        return cls(n, u, v, w)

    @property
    def edges(self):
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    @property
    def m(self):
        return int(self.u.size)

    def adjacency(self):
        if self._adj is None:
            A = sparse.coo_matrix(
                (np.concatenate([self.w, self.w]), (np.concatenate([self.u, self.v]), np.concatenate([self.v, self.u]))),
                shape=(self.n, self.n),
            )
            self._adj = A.tocsr()
        return self._adj

    def weighted_degree(self):
        return np.asarray(self.adjacency().sum(axis=1)).ravel()


@dataclass
class MovieInstance:
    ratings: np.ndarray
    W: np.ndarray
    chi: np.ndarray
    alpha: float = 0.5
    beta: float = 0.5
    lam: float = 3.0
    mu: float = 7.0

    def __post_init__(self):
        self.ratings = np.asarray(self.ratings, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        self.chi = np.asarray(self.chi, dtype=bool)
        n = self.ratings.size
        if self.W.shape != (n, n) or self.chi.shape != (n, n):
            raise ValueError("similarity and genre matrices must be n x n")
        if not np.allclose(self.W, self.W.T) or np.any(np.diag(self.W) != 0):
            raise ValueError("similarity must be symmetric with zero diagonal")
        if not np.array_equal(self.chi, self.chi.T):
            raise ValueError("genre flags must be symmetric")
        if min(self.alpha, self.beta, self.lam, self.mu) < 0 or np.any(self.W < 0):
            raise ValueError("movie parameters and similarities must be nonnegative")

    @property
    def n(self):
        return self.ratings.size


@dataclass
class RevenueInstance:
    W: object
    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if np.any(self.a < 0):
            raise ValueError("suggestibility must be nonnegative")
        W = sparse.csr_matrix(self.W, dtype=float)
        if (abs(W - W.T) > 1e-12).nnz or np.any(W.diagonal() != 0) or (W.data < 0).any():
            raise ValueError("weights must be symmetric, nonnegative, zero diagonal")
        self.W = W

    @property
    def n(self):
        return self.a.size


def cut_value(g, S):
    S = set(int(x) for x in S)
    return float(sum(w for u, v, w in g.edges if (u in S) != (v in S)))


def movie_value(m, S):
    S = sorted(set(int(x) for x in S))
    rel = sum(m.ratings[i] for i in S)
    outward = sum(m.W[i, j] for i in S for j in range(m.n))
    inner = sum((m.lam + m.chi[i, j] * m.mu) * m.W[i, j] for i in S for j in S)
    return float(m.alpha * rel + m.beta * (outward - inner))


def movie_similarity(tags_i, tags_j):
    ti = np.asarray(tags_i, dtype=float)
    tj = np.asarray(tags_j, dtype=float)
    if ti.shape != tj.shape:
        raise ValueError(f"tag vectors differ in length: {ti.shape} vs {tj.shape}")
    return float(np.sqrt(np.sum(np.minimum(ti, tj) ** 2)))


def similarity_matrix(tags, chunk=256):
    """Pairwise :func:`movie_similarity` for the rows of ``tags``, zero diagonal."""
    tags = np.asarray(tags, dtype=float)
    n = tags.shape[0]
    W = np.empty((n, n))
    for lo in range(0, n, chunk):
        block = np.minimum(tags[lo : lo + chunk, None, :], tags[None, :, :])
        W[lo : lo + chunk] = np.sqrt(np.sum(block**2, axis=2))
    np.fill_diagonal(W, 0.0)
    return W


def revenue_value(rv, S):
    S = set(int(x) for x in S)
    W = rv.W.toarray() if sparse.issparse(rv.W) else np.asarray(rv.W)
    total = 0.0
    for i in range(rv.n):
        if i in S:
            continue
        total += rv.a[i] * np.sqrt(sum(W[i, j] for j in S))
    return float(total)


def modular_value(values, S):
    return float(sum(values[int(x)] for x in S))


def cut_objective(g):
    obj = QuadraticObjective(g.weighted_degree(), g.adjacency())
    obj.name = "maxcut"
    return obj


def movie_objective(m):
    Q = m.beta * (m.lam + m.mu * m.chi) * m.W
    np.fill_diagonal(Q, 0.0)
    obj = QuadraticObjective(m.alpha * m.ratings + m.beta * m.W.sum(axis=1), Q)
    obj.name = "movie"
    return obj


def revenue_objective(rv):
    return RevenueObjective(rv.W, rv.a)
