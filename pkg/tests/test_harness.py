import json
import math

import numpy as np
import pytest

from parknap import objectives as obj
from parknap.checks import FAMILIES, small_objective
from parknap.errors import BruteForceLimitError, ContractError
from parknap.harness import (
    COLUMNS,
    ExperimentSpec,
    _mask_values,
    brute_force_opt,
    make_instance,
    read_rows,
    run_experiment,
    verify_run,
)
from parknap.instances import Instance
from parknap.maximizers import ParKnapsackParams, par_knapsack
from parknap.oracle import QueryLedger
from parknap.rng import stream

from conftest import HUB_GRID, all_subsets, costed_instance, cut_knapsack, hub_instance, unit_instance


def external_best_singleton(inst, ledger, rng, scale=1.0):
    """Toy external baseline used through the "module:function" hook."""
    from parknap.maximizers import RunResult

    vals = [inst.objective([x]) for x in inst.elements]
    ledger.charge(len(vals))
    x = int(inst.elements[int(np.argmax(vals))])
    return RunResult(S=(x,), value=float(max(vals)), cost=inst.cost([x]), feasible=True, rounds=1,
                     queries=len(vals), winner="singleton", algorithm="external")


# -- brute force ----------------------------------------------------------------------


def test_brute_modular():
    assert brute_force_opt(unit_instance(obj.ModularObjective([1.0, 2.0, 3.0]), 2)) == (5.0, (1, 2))


def test_brute_triangle(triangle_inst):
    assert brute_force_opt(triangle_inst) == (2.0, (0,))


def test_brute_empty():
    inst = Instance(obj.ModularObjective([1.0]), np.ones(1), 1.0, np.zeros(0, np.int64))
    assert brute_force_opt(inst) == (0.0, ())


def test_brute_cap():
    inst = unit_instance(obj.ModularObjective(np.ones(23)), 3)
    with pytest.raises(BruteForceLimitError):
        brute_force_opt(inst)


def test_brute_cardinality():
    inst = Instance.cardinality(obj.ModularObjective([1.0, 5.0, 3.0, 4.0]), 2)
    assert brute_force_opt(inst) == (9.0, (1, 3))


@pytest.mark.parametrize("family", FAMILIES)
def test_mask_values_match_plain_evaluation(family):
    f = small_objective(family, 8, 1)
    el = np.array([0, 2, 3, 5, 7])
    Z = np.array([[int(x in S) for x in range(5)] for S in all_subsets(5)], dtype=float)
    got = _mask_values(f, el, Z)
    want = [f(el[row.astype(bool)]) for row in Z]
    assert np.allclose(got, want, atol=1e-9)


def test_brute_matches_enumeration():
    inst = cut_knapsack(10, 3)
    best = max((inst.objective(S), S) for S in all_subsets(10) if inst.cost(S) <= inst.budget * (1 + 1e-9))
    val, S = brute_force_opt(inst)
    assert abs(val - best[0]) <= 1e-9
    assert inst.feasible(S) and abs(inst.objective(S) - val) <= 1e-9


# -- verify_run -------------------------------------------------------------------------


def test_verify_passing_run():
    inst = cut_knapsack(20, 0, p=0.3)
    report = verify_run(inst, par_knapsack(inst, rng=stream(0, "trial")))
    assert report.ok
    assert [c.name for c in report.checks] == ["feasible", "value", "adaptivity"]


def test_verify_flags_corrupted_ceiling():
    inst = cut_knapsack(20, 0, p=0.3)
    res = par_knapsack(inst, rng=stream(0, "trial"))
    res.round_ceiling = res.rounds - 1
    report = verify_run(inst, res)
    assert [c.name for c in report.failed()] == ["adaptivity"]
    res.value += 1.0
    assert {c.name for c in verify_run(inst, res).failed()} == {"adaptivity", "value"}


def test_verify_flags_infeasible():
    inst = costed_instance(obj.ModularObjective([1.0, 1.0]), [1.0, 1.0], 1.0)
    res = par_knapsack(inst, rng=stream(0, "trial"))
    res.S, res.value = (0, 1), 2.0
    assert [c.name for c in verify_run(inst, res).failed()] == ["feasible"]


def test_verify_reports_leftover_inequality():
    params = ParKnapsackParams(ell=1)
    seen = 0
    for seed in range(4):
        inst = hub_instance(seed, **HUB_GRID)
        res = par_knapsack(inst, params, rng=stream(seed, "trial"))
        report = verify_run(inst, res, audit=True)
        leftovers = [c for c in report.checks if c.name.startswith("leftover")]
        seen += len(leftovers)
        assert report.ok, str(report)
    assert seen > 0


def test_verify_bin_queries():
    inst = cut_knapsack(20, 1, p=0.3)
    res = par_knapsack(inst, variant="bin", rng=stream(0, "trial"))
    names = [c.name for c in verify_run(inst, res).checks]
    assert "queries" in names


# -- experiments ------------------------------------------------------------------------


def small_spec(tmp_path, **kw):
    d = dict(name="t", objective="maxcut", n=40, generator={"p": 0.2}, sweep_values=[0.15],
             algorithms=[{"name": "par_knapsack"}], seeds=[0], out=str(tmp_path / "out.csv"))
    d.update(kw)
    return ExperimentSpec.from_dict(d)


def test_one_row_csv(tmp_path):
    out = run_experiment(small_spec(tmp_path))
    text = out.csv_path.read_text().splitlines()
    assert text[0] == ",".join(COLUMNS)
    assert len(text) == 2
    row = read_rows(out.csv_path)[0]
    assert row["algorithm"] == "par_knapsack[seq]" and row["wall_ms"] == ""
    assert out.ok
    side = json.loads(out.sidecar_path.read_text())
    assert side["spec"]["n"] == 40 and side["columns"] == list(COLUMNS)
    traj = out.trajectory_path.read_text().splitlines()
    assert traj[0].startswith("experiment,algorithm,seed,sweep,round,value") and len(traj) > 1


def test_rerun_is_byte_identical(tmp_path):
    algos = [{"name": "par_knapsack"}, {"name": "par_knapsack", "variant": "bin"}, {"name": "greedy"},
             {"name": "sample_greedy", "p": 0.9}]
    a = run_experiment(small_spec(tmp_path, algorithms=algos, seeds=[0, 1], sweep_values=[0.1, 0.2]),
                       tmp_path / "a.csv")
    b = run_experiment(small_spec(tmp_path, algorithms=algos, seeds=[0, 1], sweep_values=[0.1, 0.2], workers=3),
                       tmp_path / "b.csv")
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    assert a.trajectory_path.read_bytes() == b.trajectory_path.read_bytes()
    assert len(a.rows) == 16


def test_timing_column(tmp_path):
    out = run_experiment(small_spec(tmp_path, timing=True))
    assert float(read_rows(out.csv_path)[0]["wall_ms"]) > 0


def test_probe_aborts_negative_movie(tmp_path):
    spec = small_spec(tmp_path, objective="movie", n=30, generator={"n_tags": 8}, sweep_values=[1.0])
    with pytest.raises(ContractError, match="negative on a feasible set"):
        run_experiment(spec)


def test_external_hook(tmp_path):
    spec = small_spec(tmp_path, algorithms=[{"name": "test_harness:external_best_singleton", "label": "ext"}])
    row = read_rows(run_experiment(spec).csv_path)[0]
    assert row["algorithm"] == "ext" and row["winner"] == "singleton"


def test_spec_validation(tmp_path):
    with pytest.raises(ContractError):
        small_spec(tmp_path, seeds=[])
    with pytest.raises(ContractError):
        small_spec(tmp_path, sweep_values=[0.2, 0.1])
    with pytest.raises(ContractError):
        small_spec(tmp_path, bogus=1)
    with pytest.raises(ContractError):
        small_spec(tmp_path, algorithms=[{"variant": "seq"}])
    with pytest.raises(ContractError):
        run_experiment(small_spec(tmp_path, algorithms=[{"name": "nope"}]))
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(small_spec(tmp_path).to_dict()))
    assert ExperimentSpec.load(path).n == 40


def test_make_instance_families():
    for objective in ("maxcut", "movie", "revenue", "coverage", "modular"):
        inst = make_instance(objective, 20, 0, budget_fraction=0.2)
        assert inst.costs[inst.elements].max() <= inst.budget
    inst = make_instance("revenue", 30, 0, costs="incident", budget_fraction=0.2, generator={"p": 0.2})
    assert inst.costs[inst.elements].sum() == pytest.approx(inst.elements.size)
    inst = make_instance("maxcut", 20, 0, constraint="cardinality", k=3)
    assert inst.kind == "cardinality" and inst.k == 3
    with pytest.raises(ContractError):
        make_instance("nope", 10, 0)


def test_size_sweep_rounds_grow_logarithmically(tmp_path):
    sizes = [32, 64, 128, 256, 512]
    spec = small_spec(tmp_path, sweep="size", sweep_values=sizes, generator={"p": 0.1},
                      algorithms=[{"name": "par_knapsack"}, {"name": "greedy"}])
    rows = read_rows(run_experiment(spec).csv_path)
    par = np.array([int(r["rounds"]) for r in rows if r["algorithm"] == "par_knapsack[seq]"], float)
    grd = np.array([int(r["rounds"]) for r in rows if r["algorithm"] == "greedy"], float)
    x = np.array(sizes, float)

    def r2(feature, y):
        A = np.column_stack([np.ones_like(feature), feature])
        resid = y - A @ np.linalg.lstsq(A, y, rcond=None)[0]
        return 1 - resid @ resid / ((y - y.mean()) @ (y - y.mean()))

    assert r2(np.log(x), par) > r2(x, par)
    assert r2(x, grd) > r2(np.log(x), grd)
    assert grd[-1] / grd[0] > par[-1] / par[0]
