"""Low-adaptivity submodular maximization under knapsack and cardinality constraints."""
__version__ = "0.1.0"

from .baselines import greedy, naive_greedy, sample_greedy
from .core import sample_seq, submod_max, thresh_bin, thresh_seq
from .instances import Instance, assign_costs, gen_erdos_renyi
from .maximizers import ParKnapsackParams, RunResult, par_cardinal, par_knapsack, par_knapsack_monotone
from .oracle import QueryLedger, evaluate_batch, fork, join, marginal

__all__ = [
    "Instance",
    "ParKnapsackParams",
    "QueryLedger",
    "RunResult",
    "assign_costs",
    "evaluate_batch",
    "fork",
    "gen_erdos_renyi",
    "greedy",
    "join",
    "marginal",
    "naive_greedy",
    "par_cardinal",
    "par_knapsack",
    "par_knapsack_monotone",
    "sample_greedy",
    "sample_seq",
    "submod_max",
    "thresh_bin",
    "thresh_seq",
]
