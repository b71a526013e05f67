"""Problem instances: generators, file loaders and cost models."""
import gzip
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import objectives as obj
from .errors import ContractError, EmptyInstanceError, ParseError
from .rng import stream

log = logging.getLogger(__name__)

COST_KINDS = ("uniform01", "incident", "unit")


@dataclass
class CostModel:
    kind: str
    budget_fraction: float
    costs: np.ndarray
    budget: float
    elements: np.ndarray
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        live = self.costs[self.elements]
        if np.any(live <= 0):
            raise ContractError("costs must be positive")
        if live.size and live.max() > self.budget:
            raise ContractError("element cost exceeds budget after normalization")


@dataclass
class Instance:
    """A submodular maximization problem over ``elements`` (the effective ground set).

    Cardinality instances are stored as unit costs with budget ``k``.
    """

    objective: obj.SetFunction
    costs: np.ndarray
    budget: float
    elements: np.ndarray
    kind: str = "knapsack"
    k: int = None
    cost_model: CostModel = None

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        if self.kind not in ("knapsack", "cardinality"):
            raise ContractError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "cardinality":
            if self.k is None or not 0 <= self.k <= self.elements.size:
                raise ContractError("cardinality instances need 0 <= k <= n")
        elif self.k is not None:
            raise ContractError("knapsack instances do not take k")

    @classmethod
    def knapsack(cls, objective, cost_model):
        return cls(objective, cost_model.costs, cost_model.budget, cost_model.elements, cost_model=cost_model)

    @classmethod
    def cardinality(cls, objective, k, elements=None):
        if elements is None:
            elements = np.arange(objective.n)
        return cls(objective, np.ones(objective.n), float(k), elements, kind="cardinality", k=int(k))

    @property
    def n(self):
        return int(self.elements.size)

    def cost(self, S):
        return float(self.costs[np.asarray(list(S), dtype=np.int64)].sum())

    def feasible(self, S, tol=1e-9):
        S = list(S)
        if self.kind == "cardinality":
            return len(S) <= self.k
        return self.cost(S) <= self.budget * (1 + tol)

    def kappa(self, X=None):
        c = self.costs[self.elements if X is None else np.asarray(X, dtype=np.int64)]
        return float(c.max() / c.min()) if c.size else 1.0


# -- generators ---------------------------------------------------------------


def gen_erdos_renyi(n, p, seed):
    """G(n, p) with weights uniform on [0, 1]."""
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ContractError("need n >= 1 and p in [0, 1]")
    rng = stream(seed, "instance", "erdos-renyi")
    us, vs = [], []
    for i in range(n - 1):
        hit = np.flatnonzero(rng.random(n - 1 - i) < p)
        us.append(np.full(hit.size, i, dtype=np.int64))
        vs.append(hit + i + 1)
    u = np.concatenate(us) if us else np.zeros(0, np.int64)
    v = np.concatenate(vs) if vs else np.zeros(0, np.int64)
    w = rng.random(u.size)
    return obj.WeightedGraph(n, u, v, w)


def sample_lomax(lam, alpha, u):
    """Inverse CDF of the Lomax (Pareto type II) distribution."""
    if lam <= 0 or alpha <= 0:
        raise ContractError("Lomax parameters must be positive")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u >= 1):
        raise ContractError("u must lie in [0, 1)")
    out = lam * ((1.0 - u) ** (-1.0 / alpha) - 1.0)
    return float(out) if out.ndim == 0 else out


def lomax_draws(lam, alpha, size, rng):
    return sample_lomax(lam, alpha, rng.random(size))


def gen_movie_instance(n, seed, n_tags=64, n_genres=8, alpha=0.5, beta=0.5, lam=3.0, mu=7.0):
    """Synthetic stand-in for the tag-genome movie data.

    Tag relevances are skewed towards zero (u**4) like genome scores; each
    movie gets one genre uniformly at random.
    """
    rng = stream(seed, "instance", "movie")
    tags = rng.random((n, n_tags)) ** 4
    ratings = rng.uniform(0.5, 5.0, n)
    genres = rng.integers(0, n_genres, n)
    return movie_from_tags(tags, ratings, genres, alpha, beta, lam, mu)


def movie_from_tags(tags, ratings, genres, alpha=0.5, beta=0.5, lam=3.0, mu=7.0):
    genres = np.asarray(genres)
    chi = genres[:, None] == genres[None, :]
    np.fill_diagonal(chi, False)
    return obj.MovieInstance(ratings, obj.similarity_matrix(tags), chi, alpha, beta, lam, mu)


def gen_revenue_instance(graph, seed, lam=1.0, alpha=2.0):
    """Revenue instance on ``graph`` with Lomax(lam, alpha) suggestibility."""
    rng = stream(seed, "instance", "revenue")
    return obj.RevenueInstance(graph.adjacency(), lomax_draws(lam, alpha, graph.n, rng))


def gen_coverage(n, universe, density, seed):
    rng = stream(seed, "instance", "coverage")
    covers = rng.random((n, universe)) < density
    weights = rng.uniform(0.5, 1.5, universe)
    return obj.CoverageObjective(covers, weights)


# -- costs --------------------------------------------------------------------


def assign_costs(n, kind, budget_fraction, seed, incident_weight=None):
    """Build a :class:`CostModel` over ids ``0..n-1``.

    ``incident`` costs are proportional to ``incident_weight`` and scaled so
    they sum to the number of costed elements; elements with zero incident
    weight get no cost and are left out of the ground set. Elements costing
    more than the budget are dropped as well.
    """
    if kind not in COST_KINDS:
        raise ContractError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")
    if not 0.0 < budget_fraction <= 1.0:
        raise ContractError("budget_fraction must lie in (0, 1]")
    elements = np.arange(n)
    if kind == "unit":
        costs = np.ones(n)
    elif kind == "uniform01":
        costs = 1.0 - stream(seed, "instance", "costs").random(n)
    else:
        if incident_weight is None:
            raise ContractError("incident costs need the incident weights")
        iw = np.asarray(incident_weight, dtype=float)
        elements = np.flatnonzero(iw > 0)
        costs = np.zeros(n)
        if elements.size:
            costs[elements] = iw[elements] * (elements.size / iw[elements].sum())
    budget = budget_fraction * costs[elements].sum()
    keep = costs[elements] <= budget
    dropped = elements[~keep]
    elements = elements[keep]
    if elements.size == 0:
        raise EmptyInstanceError("no element fits within the budget")
    if dropped.size:
        log.info("dropped %d elements costing more than the budget", dropped.size)
    return CostModel(kind, budget_fraction, costs, float(budget), elements, dropped)


def probe_nonnegative(inst, samples, seed, tol=1e-9):
    """Sample random feasible sets and return the first with negative value, else None."""
    rng = stream(seed, "probe", "nonnegative")
    f = inst.objective
    for _ in range(samples):
        perm = rng.permutation(inst.elements)
        fits = np.cumsum(inst.costs[perm]) <= inst.budget
        limit = int(fits.sum())
        S = np.sort(perm[: rng.integers(0, limit + 1)])
        if f.value(S) < -tol:
            return frozenset(S.tolist())
    return None


# -- file loaders -------------------------------------------------------------


def _open(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def load_graph_csv(path):
    """Read ``u,v[,w]`` lines into a :class:`WeightedGraph`.

    Ids are remapped densely (numerically sorted when all ids are integers).
    Repeated pairs have their weights summed.
    """
    raw = []
    with _open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
                raise ParseError(path, lineno, f"expected 'u,v[,w]', got {line!r}")
            try:
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ParseError(path, lineno, f"bad weight {parts[2]!r}") from None
            if not np.isfinite(w) or w < 0:
                raise ParseError(path, lineno, f"weight must be finite and nonnegative, got {w}")
            if parts[0] == parts[1]:
                raise ParseError(path, lineno, "self-loop")
            raw.append((parts[0], parts[1], w, lineno))
    names = {p for u, v, _, _ in raw for p in (u, v)}
    try:
        order = sorted(names, key=int)
    except ValueError:
        order = list(dict.fromkeys(p for u, v, _, _ in raw for p in (u, v)))
    index = {name: i for i, name in enumerate(order)}
    acc = {}
    for u, v, w, _ in raw:
        a, b = sorted((index[u], index[v]))
        acc[(a, b)] = acc.get((a, b), 0.0) + w
    return obj.WeightedGraph.from_edges(len(order), [(a, b, w) for (a, b), w in sorted(acc.items())])


def save_graph_csv(graph, path):
    with (gzip.open(path, "wt", encoding="utf-8") if str(path).endswith(".gz") else open(path, "w", encoding="utf-8")) as fh:
        fh.write(f"# n={graph.n} m={graph.m}\n")
        for u, v, w in graph.edges:
            fh.write(f"{u},{v},{w:.17g}\n")


@dataclass
class TagMatrix:
    tags: np.ndarray
    movie_ids: list
    tag_ids: list
    clamped: int = 0


def load_tag_matrix(path):
    """Read ``movie_id,tag_id,score`` rows into a dense movie x tag matrix.

    Missing scores are 0; scores outside [0, 1] are clamped and counted in
    ``TagMatrix.clamped``. A leading header row is skipped.
    """
    rows = []
    with _open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 'movie_id,tag_id,score', got {line!r}")
            try:
                score = float(parts[2])
            except ValueError:
                if not rows and lineno == _first_data_line(path):
                    continue
                raise ParseError(path, lineno, f"bad score {parts[2]!r}") from None
            if not np.isfinite(score):
                raise ParseError(path, lineno, "score must be finite")
            rows.append((parts[0], parts[1], score))
    if not rows:
        raise ParseError(path, 0, "no tag rows found")
    movies = list(dict.fromkeys(r[0] for r in rows))
    tag_ids = list(dict.fromkeys(r[1] for r in rows))
    mi = {m: i for i, m in enumerate(movies)}
    ti = {t: i for i, t in enumerate(tag_ids)}
    tags = np.zeros((len(movies), len(tag_ids)))
    clamped = 0
    for m, t, s in rows:
        if s < 0 or s > 1:
            clamped += 1
            s = min(max(s, 0.0), 1.0)
        tags[mi[m], ti[t]] = s
    if clamped:
        log.warning("%s: clamped %d scores into [0, 1]", path, clamped)
    return TagMatrix(tags, movies, tag_ids, clamped)


def _first_data_line(path):
    with _open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if s and not s.startswith("#"):
                return lineno
    return 0


def revenue_costs(rv, budget_fraction, seed=0):
    """Incident-weight-proportional costs for a revenue instance."""
    W = sparse.csr_matrix(rv.W)
    return assign_costs(rv.n, "incident", budget_fraction, seed, np.asarray(W.sum(axis=1)).ravel())
