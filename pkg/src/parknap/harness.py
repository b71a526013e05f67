"""Experiment runner: instance building, algorithm grids over seeds, verification and CSV output."""
import csv
import dataclasses
import importlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import __version__
from . import objectives as obj
from .baselines import greedy, sample_greedy
from .core import leftover_good_mass
from .errors import BruteForceLimitError, ContractError, InvariantViolation
from .instances import (
    Instance,
    assign_costs,
    gen_coverage,
    gen_erdos_renyi,
    gen_movie_instance,
    gen_revenue_instance,
    load_graph_csv,
    probe_nonnegative,
)
from .maximizers import ParKnapsackParams, par_cardinal, par_knapsack, par_knapsack_monotone
from .oracle import QueryLedger
from .rng import stream

log = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 22
OBJECTIVES = ("maxcut", "movie", "revenue", "coverage", "modular")
NONNEGATIVE = {"maxcut", "revenue", "coverage"}
SWEEPS = ("budget", "size", "k")
COLUMNS = ("experiment", "algorithm", "seed", "sweep", "value", "cost", "rounds", "queries", "wall_ms", "winner")
TRAJECTORY_COLUMNS = ("experiment", "algorithm", "seed", "sweep", "round", "value")


# -- brute force --------------------------------------------------------------


def _mask_values(f, el, Z):
    """f on every row of the 0/1 matrix Z (columns follow ``el``)."""
    inner = f.inner if isinstance(f, obj.Counted) else f
    if isinstance(inner, obj.QuadraticObjective):
        Q = inner.Q[el][:, el]
        Q = Q.toarray() if sparse.issparse(Q) else Q
        return Z @ inner.lin[el] - np.einsum("ij,ij->i", Z @ Q, Z)
    if isinstance(inner, obj.ModularObjective):
        return Z @ inner.values[el]
    if isinstance(inner, obj.CoverageObjective):
        covered = (Z @ inner._Cf[el]) > 0
        return covered.astype(float) @ inner.w
    if isinstance(inner, obj.RevenueObjective):
        Wt = inner.W[el].toarray()  # rows: elements, cols: all users
        root = np.sqrt(Z @ Wt)
        return root @ inner.a - np.einsum("ij,ij->i", Z, root[:, el] * inner.a[el])
    return np.array([inner.value(el[row.astype(bool)]) for row in Z])


def brute_force_opt(inst, cap=BRUTE_FORCE_CAP, tol=1e-9):
    """Exhaustive optimum ``(value, set)`` over feasible subsets of the effective ground set.

    Among sets within ``tol`` of the best value the lexicographically least
    sorted tuple is returned.
    """
    el = np.asarray(inst.elements, dtype=np.int64)
    n = el.size
    if n > cap:
        raise BruteForceLimitError(f"brute force is capped at n={cap}, got n={n}")
    f = inst.objective
    if n == 0:
        return float(f.value(el)), ()
    total = 1 << n
    bits = 1 << np.arange(n)
    vals = np.full(total, -np.inf)
    chunk = 1 << 16
    for lo in range(0, total, chunk):
        masks = np.arange(lo, min(total, lo + chunk))
        Z = ((masks[:, None] & bits[None, :]) > 0).astype(float)
        if inst.kind == "cardinality":
            ok = Z.sum(axis=1) <= inst.k
        else:
            ok = Z @ inst.costs[el] <= inst.budget * (1 + tol)
        if ok.any():
            vals[masks[ok]] = _mask_values(f, el, Z[ok])
    best = float(vals.max())
    near = np.flatnonzero(vals >= best - tol)
    return best, min(tuple(el[(m & bits) > 0].tolist()) for m in near)


# -- instances ----------------------------------------------------------------


def make_instance(objective, n, seed, costs="uniform01", budget_fraction=0.15, constraint="knapsack", k=None,
                  generator=None):
    """Build a seeded instance of one of the shipped objective families."""
    g = dict(generator or {})
    if objective not in OBJECTIVES:
        raise ContractError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    incident = None
    if objective == "maxcut":
        graph = load_graph_csv(g["path"]) if "path" in g else gen_erdos_renyi(n, g.get("p", 0.1), seed)
        f = obj.cut_objective(graph)
        incident = graph.weighted_degree()
    elif objective == "movie":
        m = gen_movie_instance(n, seed, **{key: g[key] for key in ("n_tags", "n_genres", "alpha", "beta", "lam", "mu")
                                             if key in g})
        f = obj.movie_objective(m)
    elif objective == "revenue":
        graph = load_graph_csv(g["path"]) if "path" in g else gen_erdos_renyi(n, g.get("p", 0.1), seed)
        rv = gen_revenue_instance(graph, seed, g.get("lam", 1.0), g.get("alpha", 2.0))
        f = obj.revenue_objective(rv)
        incident = graph.weighted_degree()
    elif objective == "coverage":
        f = gen_coverage(n, g.get("universe", 3 * n), g.get("density", 0.15), seed)
    else:
        f = obj.ModularObjective(stream(seed, "instance", "modular").uniform(g.get("low", 0.0), 1.0, n))
    if constraint == "cardinality":
        return Instance.cardinality(f, k if k is not None else max(1, n // 10))
    if constraint != "knapsack":
        raise ContractError(f"unknown constraint {constraint!r}")
    cm = assign_costs(f.n, costs, budget_fraction, seed, incident_weight=incident)
    return Instance.knapsack(f, cm)


# -- verification -------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.ok]

    def __str__(self):
        return "\n".join(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}" for c in self.checks)


def verify_run(inst, result, audit=False, tol=1e-9):
    """Check one run: feasibility, value re-evaluation, adaptivity ceiling and (audit mode) leftover mass."""
    report = VerifyReport()
    cost = inst.cost(result.S)
    report.checks.append(Check("feasible", inst.feasible(result.S), f"cost {cost:.9g} budget {inst.budget:.9g}"))
    fresh = float(inst.objective.value(np.asarray(result.S, dtype=np.int64)))
    report.checks.append(Check("value", abs(fresh - result.value) <= tol * max(1.0, abs(fresh)),
                               f"reported {result.value:.12g} fresh {fresh:.12g}"))
    ceiling = getattr(result, "round_ceiling", math.inf)
    report.checks.append(Check("adaptivity", result.rounds <= ceiling, f"rounds {result.rounds} ceiling {ceiling:.6g}"))
    qc = getattr(result, "query_ceiling", math.inf)
    if math.isfinite(qc):
        report.checks.append(Check("queries", result.queries <= qc, f"queries {result.queries} ceiling {qc:.6g}"))
    if audit:
        audit_ledger = QueryLedger()
        for idx, cell in enumerate(getattr(result, "cells", [])):
            if not (math.isfinite(cell.ell) and cell.ctr >= cell.ell):
                continue
            S = cell.preliminary if cell.preliminary is not None else cell.S
            fS = cell.preliminary_value if cell.preliminary is not None else cell.value
            mass = leftover_good_mass(inst, cell.candidates, S, fS, cell.tau, cell.budget, audit_ledger)
            rhs = cell.eps * cell.ell * mass
            # G is taken w.r.t. the preliminary set, the left side is the returned (filtered) value
            report.checks.append(Check(f"leftover[{idx}]", cell.value >= rhs - tol * max(1.0, abs(rhs)),
                                       f"f(S) {cell.value:.9g} >= eps*ell*mass {rhs:.9g}"))
    return report


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """One experiment grid. Mirrors the JSON spec file field for field."""

    name: str = "experiment"
    objective: str = "maxcut"
    generator: dict = field(default_factory=dict)
    costs: str = "uniform01"
    constraint: str = "knapsack"
    n: int = 100
    budget_fraction: float = 0.15
    k: int = None
    sweep: str = "budget"
    sweep_values: list = field(default_factory=lambda: [0.15])
    algorithms: list = field(default_factory=lambda: [{"name": "par_knapsack"}])
    seeds: list = field(default_factory=lambda: [0])
    out: str = "results.csv"
    timing: bool = False
    audit: bool = False
    workers: int = 1
    probe_samples: int = 1000

    def __post_init__(self):
        if not self.seeds:
            raise ContractError("seeds must be nonempty")
        if not self.sweep_values:
            raise ContractError("sweep_values must be nonempty")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ContractError("sweep_values must be sorted ascending")
        if self.sweep not in SWEEPS:
            raise ContractError(f"sweep must be one of {SWEEPS}")
        if self.objective not in OBJECTIVES:
            raise ContractError(f"unknown objective {self.objective!r}")
        if not self.algorithms:
            raise ContractError("need at least one algorithm")
        for a in self.algorithms:
            if "name" not in a:
                raise ContractError(f"algorithm entry without a name: {a}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ResultRow:
    experiment: str
    algorithm: str
    seed: int
    sweep: float
    value: float
    cost: float
    rounds: int
    queries: int
    wall_ms: float
    winner: str

    def cells(self, timing):
        return [self.experiment, self.algorithm, str(self.seed), _fmt(self.sweep), _fmt(self.value), _fmt(self.cost),
                str(self.rounds), str(self.queries), _fmt(self.wall_ms) if timing else "", self.winner]


@dataclass
class ExperimentOutcome:
    csv_path: Path
    trajectory_path: Path
    sidecar_path: Path
    rows: list
    reports: list
    failures: list

    @property
    def ok(self):
        return not self.failures


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def algorithm_label(a):
    if "label" in a:
        return a["label"]
    name = a["name"]
    if name.startswith("par_"):
        return f"{name}[{a.get('variant', 'seq')}]"
    return name


def run_algorithm(inst, a, ledger, rng):
    """Dispatch one algorithm entry of an :class:`ExperimentSpec`."""
    name = a["name"]
    opts = {key: v for key, v in a.items() if key not in ("name", "label")}
    variant = opts.pop("variant", "seq")
    if name == "par_knapsack":
        return par_knapsack(inst, ParKnapsackParams(**opts), variant, ledger, rng)
    if name == "par_knapsack_monotone":
        probes = opts.pop("monotone_probes", 10_000)
        eps = opts.pop("eps", 0.125)
        return par_knapsack_monotone(inst, eps, variant, ledger, rng, ParKnapsackParams(eps=eps, **opts), probes)
    if name == "par_cardinal":
        eps = opts.pop("eps", 0.125)
        return par_cardinal(inst, eps, variant, ledger, rng, ParKnapsackParams(eps=eps, **opts))
    if name == "greedy":
        return greedy(inst, ledger, rng)
    if name == "sample_greedy":
        return sample_greedy(inst, opts.get("p", 0.9), ledger, rng)
    if ":" in name:
        # external baseline hook: "module:function" called as fn(inst, ledger, rng, **opts)
        mod, fn = name.split(":", 1)
        return getattr(importlib.import_module(mod), fn)(inst, ledger, rng, **opts)
    raise ContractError(f"unknown algorithm {name!r}")


def build_instance(spec, sweep_value, seed):
    n, fraction, k = spec.n, spec.budget_fraction, spec.k
    if spec.sweep == "budget":
        fraction = float(sweep_value)
    elif spec.sweep == "size":
        n = int(sweep_value)
    else:
        k = int(sweep_value)
    inst = make_instance(spec.objective, n, seed, spec.costs, fraction, spec.constraint, k, spec.generator)
    if spec.objective not in NONNEGATIVE and spec.probe_samples:
        bad = probe_nonnegative(inst, spec.probe_samples, seed)
        if bad is not None:
            raise ContractError(
                f"{spec.objective} instance (seed {seed}, sweep {sweep_value}) is negative on a feasible set "
                f"of size {len(bad)}: f = {inst.objective.value(np.asarray(sorted(bad)))}"
            )
    return inst


def run_experiment(spec, out=None):
    """Run every (sweep point, seed, algorithm) cell and write the CSV, trajectory CSV and sidecar JSON."""
    out = Path(out or spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    instances = {(si, seed): build_instance(spec, v, seed)
                 for si, v in enumerate(spec.sweep_values) for seed in spec.seeds}
    jobs = [(a, seed, si, v) for si, v in enumerate(spec.sweep_values) for seed in spec.seeds for a in spec.algorithms]

    def work(job):
        a, seed, si, v = job
        label = algorithm_label(a)
        inst = instances[(si, seed)]
        ledger = QueryLedger()
        rng = stream(seed, "algorithm", label, si)
        try:
            res = run_algorithm(inst, a, ledger, rng)
        except InvariantViolation as exc:
            return label, seed, v, None, VerifyReport([Check("in-run assertion", False, str(exc))])
        return label, seed, v, res, verify_run(inst, res, audit=spec.audit)

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            done = list(pool.map(work, jobs))
    else:
        done = [work(j) for j in jobs]

    rows, traj, reports, failures = [], [], [], []
    for label, seed, v, res, report in done:
        reports.append((label, seed, v, report))
        if not report.ok:
            failures.append((label, seed, v, report))
            log.error("%s seed=%s sweep=%s failed:\n%s", label, seed, v, report)
        if res is None:
            continue
        rows.append(ResultRow(spec.name, label, seed, v, res.value, res.cost, res.rounds, res.queries, res.wall_ms,
                              res.winner))
        traj.extend((label, seed, v, t, val) for t, val in res.trajectory)
    rows.sort(key=lambda r: (r.algorithm, r.seed, r.sweep))
    traj.sort(key=lambda r: (r[0], r[1], r[2], r[3]))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.cells(spec.timing))
    out.write_text(buf.getvalue(), encoding="utf-8")

    tpath = out.with_name(out.stem + ".trajectory.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for label, seed, v, t, val in traj:
        w.writerow([spec.name, label, seed, _fmt(v), t, _fmt(val)])
    tpath.write_text(buf.getvalue(), encoding="utf-8")

    side = out.with_name(out.stem + ".json")
    side.write_text(json.dumps({"spec": spec.to_dict(), "version": __version__, "columns": list(COLUMNS)},
                               indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ExperimentOutcome(out, tpath, side, rows, reports, failures)


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
