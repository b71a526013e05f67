import itertools

import numpy as np
import pytest

from parknap import objectives as obj
from parknap.instances import Instance


def triangle_graph():
    return obj.WeightedGraph.from_edges(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])


def unit_instance(f, budget):
    return Instance(f, np.ones(f.n), float(budget), np.arange(f.n))


def costed_instance(f, costs, budget):
    return Instance(f, np.asarray(costs, dtype=float), float(budget), np.arange(f.n))


def all_subsets(n):
    for r in range(n + 1):
        yield from itertools.combinations(range(n), r)


@pytest.fixture
def triangle():
    return obj.cut_objective(triangle_graph())


@pytest.fixture
def triangle_inst(triangle):
    return unit_instance(triangle, 3)


def cut_knapsack(n, seed, p=0.5, fraction=0.5):
    """Random G(n, p) cut with uniform costs and B = fraction * sum of costs."""
    from parknap.instances import assign_costs, gen_erdos_renyi

    f = obj.cut_objective(gen_erdos_renyi(n, p, seed))
    return Instance.knapsack(f, assign_costs(n, "uniform01", fraction, seed))


def small_cost_instance():
    """Cut instance on which a single threshold run usually stays well under half the budget."""
    from parknap.instances import gen_erdos_renyi

    f = obj.cut_objective(gen_erdos_renyi(12, 0.5, 21))
    costs = np.linspace(0.4, 1.0, 12)
    return Instance(f, costs, float(costs.sum() / 2), np.arange(12))


def repetition_trial(inst, tau, eps, meta_trials, seed):
    """Mean single-run cost and the fraction of meta-trials where some repetition stays under B/2."""
    import math

    from parknap.core import thresh_seq
    from parknap.maximizers import ParKnapsackParams, repeat_until_small
    from parknap.oracle import QueryLedger
    from parknap.rng import stream

    ell = 4
    single = [thresh_seq(inst, inst.elements, tau, eps, ell, inst.budget, QueryLedger(),
                         stream(seed, "trial", "single", s)).cost for s in range(400)]
    reps = max(1, math.ceil(math.log(1 / eps) / eps))
    r = ParKnapsackParams(eps=eps, ell=ell, repetitions=reps).resolve(inst.n)
    hits = sum(repeat_until_small(inst, inst.elements, tau, r, QueryLedger(), stream(seed, "trial", "meta", t)).some_small
               for t in range(meta_trials))
    return float(np.mean(single)), hits / meta_trials, reps


def hub_instance(seed, leaves=10, bulk=20, leaf_cost=0.01, leaf_weight=1.0, bonus=1.0, budget=None):
    """Nonnegative submodular instance where one element turns many cheap elements negative.

    Element 0 is a hub joined to ``leaves`` cheap leaves; the remaining
    unit-cost elements carry a modular bonus. Once the hub is in a prefix
    every leaf has a negative marginal while the bulk stays good, which is
    what drives the value rule.
    """
    r = np.random.default_rng(seed)
    n = 1 + leaves + bulk
    Q = np.zeros((n, n))
    w = leaf_weight * r.uniform(0.8, 1.2, leaves)
    Q[0, 1 : 1 + leaves] = Q[1 : 1 + leaves, 0] = w
    lin = Q.sum(axis=1)
    lin[1 + leaves :] += bonus * r.uniform(0.8, 1.2, bulk)
    costs = np.ones(n)
    costs[1 : 1 + leaves] = leaf_cost
    return Instance(obj.QuadraticObjective(lin, Q), costs, float(budget or bulk / 2), np.arange(n))


# hub layout under which value-rule stops also happen inside the full algorithm
HUB_GRID = dict(leaves=10, bulk=40, leaf_cost=0.25, leaf_weight=2.0, bonus=2.0, budget=10)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
