"""Property suites shared by ``parknap check`` and the test-suite."""
from dataclasses import dataclass

import numpy as np

from . import objectives as obj
from .baselines import greedy, naive_greedy
from .core import (
    BinaryProbe,
    _draw_sequence,
    binary_search_kstar,
    check_bin_monotonicity,
    linear_scan_kstar,
    thresh_bin,
    thresh_seq,
)
from .instances import Instance, assign_costs, gen_coverage, gen_erdos_renyi, gen_movie_instance
from .oracle import QueryLedger, check_sampling_lemma, check_submodular
from .rng import stream

FAMILIES = ("maxcut", "movie", "coverage", "modular", "revenue")


def small_objective(family, n, seed):
    """A random objective of the given family on ``n`` elements."""
    if family == "maxcut":
        return obj.cut_objective(gen_erdos_renyi(n, 0.5, seed))
    if family == "movie":
        return obj.movie_objective(gen_movie_instance(n, seed, n_tags=8, n_genres=3))
    if family == "coverage":
        return gen_coverage(n, 3 * n, 0.2, seed)
    if family == "revenue":
        from .instances import gen_revenue_instance

        return obj.revenue_objective(gen_revenue_instance(gen_erdos_renyi(n, 0.5, seed), seed))
    # modular with mixed signs
    return obj.ModularObjective(stream(seed, "instance", "modular").uniform(-0.5, 1.0, n))


@dataclass
class BinCase:
    f: object
    S: np.ndarray
    fS: float
    X: np.ndarray
    A: np.ndarray
    used: np.ndarray
    B: float
    tau: float
    eps: float
    costs: np.ndarray

    def probe(self):
        return BinaryProbe(self.f, self.S, self.fS, self.X, self.A, self.used, self.B, self.tau, self.eps,
                           self.costs)


def random_bin_case(seed, n_lo=6, n_hi=16):
    """A mid-run state (S, X, sampled sequence A) on a random small submodular instance."""
    rng = stream(seed, "check", "bin-case")
    family = FAMILIES[int(rng.integers(len(FAMILIES)))]
    n = int(rng.integers(n_lo, n_hi + 1))
    f = small_objective(family, n, seed)
    costs = 1.0 - rng.random(n)
    B = float(rng.uniform(0.2, 0.8) * costs.sum())
    B = max(B, float(costs.max()))
    perm = rng.permutation(n)
    take = int(rng.integers(0, max(1, n // 3)))
    S = np.sort(perm[:take][np.cumsum(costs[perm[:take]]) <= B / 3])
    cS = float(costs[S].sum())
    rest = np.setdiff1d(np.arange(n), S)
    rest = rest[costs[rest] + cS <= B]
    X = np.sort(rest[rng.random(rest.size) < rng.uniform(0.5, 1.0)])
    if X.size == 0 and rest.size:
        X = rest[:1]
    fS = float(f.value(S))
    dens = f.gains(S, X, fS) / costs[X] if X.size else np.ones(1)
    pos = dens[dens > 0]
    tau = float(rng.uniform(0.05, 1.0) * (np.median(pos) if pos.size else 1.0))
    eps = float(rng.uniform(0.05, 0.5))
    A, used = _draw_sequence(X, costs, cS, B, rng)
    return BinCase(f, S, fS, X, A, used, B, tau, eps, costs)


def bin_case_agrees(case):
    """(binary k*, linear k*, conditions monotone) for one case."""
    d = case.A.size
    if d == 0:
        return 0, 0, True
    kb = binary_search_kstar(d, case.probe())
    full = case.probe()
    kl = linear_scan_kstar(d, full)
    pairs = [full(i) for i in range(1, d + 1)]
    mono = check_bin_monotonicity([p[0] for p in pairs], [p[1] for p in pairs])
    return kb, kl, mono


def _knapsack(f, seed, fraction=0.4):
    return Instance.knapsack(f, assign_costs(f.n, "uniform01", fraction, seed))


def run_checks(seed=0, n=10, trials=2000, mode="practical", variant="seq"):
    """Return ``[(name, ok, detail)]`` for the built-in property suites."""
    from .harness import verify_run
    from .maximizers import ParKnapsackParams, par_knapsack

    out = []
    for family in FAMILIES:
        ok, witness = check_submodular(small_objective(family, n, seed), trials, seed)
        out.append((f"submodular[{family}]", ok, "no violation" if ok else f"witness {witness}"))

    cut = small_objective("maxcut", n, seed)
    out.append(("sampling-lemma", check_sampling_lemma(cut, range(n), 0.5, trials, seed), f"p=0.5 trials={trials}"))

    bad = 0
    cases = max(50, trials // 10)
    for s in range(cases):
        kb, kl, mono = bin_case_agrees(random_bin_case(seed * 100_003 + s))
        bad += (kb != kl) or not mono
    out.append(("binary-search", bad == 0, f"{cases} tables, {bad} disagreements"))

    kernel = thresh_bin if variant == "bin" else thresh_seq
    for family in ("maxcut", "movie", "revenue"):
        inst = _knapsack(small_objective(family, n, seed), seed)
        res = kernel(inst, inst.elements, 0.1, 0.2, 4, inst.budget, QueryLedger(), stream(seed, "check", family))
        out.append((f"{kernel.__name__}[{family}]", res.cost <= inst.budget * (1 + 1e-9),
                    f"|S|={len(res.S)} cost={res.cost:.4g} B={inst.budget:.4g} iterations={res.iterations}"))

    inst = _knapsack(small_objective("maxcut", n, seed), seed)
    eps = 0.125 if mode == "practical" else 0.3
    params = ParKnapsackParams(eps=eps, mode=mode, repetitions=None if mode == "practical" else 2,
                               thresholds=None if mode == "practical" else 2)
    res = par_knapsack(inst, params, variant, QueryLedger(), stream(seed, "check", "par"))
    report = verify_run(inst, res, audit=True)
    out.append(("par_knapsack-verify", report.ok, f"value={res.value:.4g} rounds={res.rounds}"))

    lazy = greedy(_knapsack(small_objective("movie", n, seed), seed))
    naive = naive_greedy(_knapsack(small_objective("movie", n, seed), seed))
    out.append(("lazy-greedy", lazy.S == naive[0], f"lazy {lazy.S} naive {naive[0]}"))
    return out
