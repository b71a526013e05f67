import gzip

import numpy as np
import pytest
from scipy import stats

from parknap import objectives as obj
from parknap.errors import ContractError, EmptyInstanceError, ParseError
from parknap.instances import (
    Instance,
    assign_costs,
    gen_erdos_renyi,
    gen_movie_instance,
    gen_revenue_instance,
    load_graph_csv,
    load_tag_matrix,
    lomax_draws,
    probe_nonnegative,
    revenue_costs,
    sample_lomax,
    save_graph_csv,
)
from parknap.rng import stream

from conftest import triangle_graph


def test_er_extremes():
    assert gen_erdos_renyi(5, 0.0, 0).m == 0
    g = gen_erdos_renyi(4, 1.0, 0)
    assert g.m == 6
    assert np.all((g.w >= 0) & (g.w <= 1))
    assert gen_erdos_renyi(1, 0.5, 0).m == 0


def test_er_edge_count_within_3_sigma():
    pairs = 1000 * 999 // 2
    mean, sd = pairs * 0.1, np.sqrt(pairs * 0.1 * 0.9)
    assert abs(gen_erdos_renyi(1000, 0.1, 11).m - mean) <= 3 * sd


def test_er_chi_square_uniformity():
    # edge indicators at p=0.5: counts over 10 equal blocks of pairs look uniform
    n = 50
    g = gen_erdos_renyi(n, 0.5, 3)
    iu = np.triu_indices(n, 1)
    idx = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(*iu))}
    hit = np.zeros(len(idx), dtype=bool)
    for u, v, _ in g.edges:
        hit[idx[(min(u, v), max(u, v))]] = True
    counts = np.array([b.sum() for b in np.array_split(hit, 10)])
    assert stats.chisquare(counts).pvalue > 1e-3
    assert stats.binomtest(int(hit.sum()), hit.size, 0.5).pvalue > 1e-3


def test_er_invalid():
    with pytest.raises(ContractError):
        gen_erdos_renyi(0, 0.5, 0)
    with pytest.raises(ContractError):
        gen_erdos_renyi(3, 1.5, 0)


def test_lomax_examples():
    assert sample_lomax(1.0, 2.0, 0.0) == 0.0
    assert sample_lomax(1.0, 2.0, 0.75) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ContractError):
        sample_lomax(1.0, 2.0, 1.0)
    with pytest.raises(ContractError):
        sample_lomax(0.0, 2.0, 0.5)


def test_lomax_mean():
    x = lomax_draws(1.0, 2.0, 100_000, stream(0, "trial", "lomax"))
    assert np.all(x >= 0)
    assert abs(x.mean() - 1.0) <= 3 * x.std(ddof=1) / np.sqrt(x.size)


def test_unit_costs():
    cm = assign_costs(10, "unit", 0.5, 0)
    assert cm.budget == 5.0
    assert np.all(cm.costs == 1.0)
    assert cm.elements.tolist() == list(range(10))


def test_uniform_costs():
    cm = assign_costs(50, "uniform01", 0.15, 2)
    assert np.all(cm.costs > 0) and np.all(cm.costs <= 1)
    assert cm.budget == pytest.approx(0.15 * cm.costs.sum())
    assert cm.costs[cm.elements].max() <= cm.budget
    assert np.array_equal(np.sort(np.concatenate([cm.elements, cm.dropped])), np.arange(50))


def test_incident_costs_triangle():
    g = triangle_graph()
    for frac in (0.4, 1.0):
        cm = assign_costs(3, "incident", frac, 0, g.weighted_degree())
        assert np.allclose(cm.costs, 1.0)
        assert cm.budget == pytest.approx(frac * 3)


def test_incident_costs_sum_and_zero_degree():
    g = obj.WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 3.0)])
    cm = assign_costs(4, "incident", 1.0, 0, g.weighted_degree())
    assert 3 not in cm.elements.tolist()
    assert cm.costs[[0, 1, 2]].sum() == pytest.approx(3.0)
    rv = gen_revenue_instance(gen_erdos_renyi(20, 0.3, 0), 0)
    cm = revenue_costs(rv, 0.1)
    assert cm.costs[cm.elements].max() <= cm.budget


def test_drop_and_empty():
    with pytest.raises(EmptyInstanceError):
        assign_costs(1, "unit", 0.5, 0)
    with pytest.raises(ContractError):
        assign_costs(3, "nope", 0.5, 0)
    with pytest.raises(ContractError):
        assign_costs(3, "unit", 0.0, 0)


def test_instance_contracts():
    f = obj.ModularObjective(np.ones(3))
    with pytest.raises(ContractError):
        Instance.cardinality(f, 4)
    inst = Instance.cardinality(f, 2)
    assert inst.feasible((0, 1)) and not inst.feasible((0, 1, 2))


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_graph(tmp_path):
    g = load_graph_csv(_write(tmp_path, "a.csv", "0,1,1.0\n1,2,2.0\n"))
    assert g.n == 3
    assert obj.cut_value(g, {1}) == 3.0
    g = load_graph_csv(_write(tmp_path, "b.csv", "0,1,1\n1,0,2\n"))
    assert g.edges == [(0, 1, 3.0)]
    g = load_graph_csv(_write(tmp_path, "c.csv", "# just a header\n"))
    assert g.n == 0 and g.m == 0
    g = load_graph_csv(_write(tmp_path, "d.csv", "5,9\n"))
    assert g.n == 2 and g.edges == [(0, 1, 1.0)]


def test_load_graph_errors(tmp_path):
    with pytest.raises(ParseError, match=":2"):
        load_graph_csv(_write(tmp_path, "a.csv", "0,1,1\n1,2,-1\n"))
    with pytest.raises(ParseError):
        load_graph_csv(_write(tmp_path, "b.csv", "0;1\n"))
    with pytest.raises(ParseError):
        load_graph_csv(_write(tmp_path, "c.csv", "0,1,x\n"))
    with pytest.raises(ParseError):
        load_graph_csv(_write(tmp_path, "d.csv", "1,1,1\n"))


def test_graph_roundtrip_gzip(tmp_path):
    g = gen_erdos_renyi(30, 0.2, 5)
    path = tmp_path / "g.csv.gz"
    save_graph_csv(g, path)
    with gzip.open(path, "rt") as fh:
        assert fh.readline().startswith("#")
    h = load_graph_csv(path)
    assert h.edges == g.edges


def test_load_tags(tmp_path):
    t = load_tag_matrix(_write(tmp_path, "t.csv", "movie_id,tag_id,score\n1,a,0.5\n1,b,0.25\n2,a,1.5\n"))
    assert t.tags.shape == (2, 2)
    assert np.count_nonzero(t.tags[0]) == 2
    assert t.tags[1, 0] == 1.0
    assert t.clamped == 1
    with pytest.raises(ParseError):
        load_tag_matrix(_write(tmp_path, "e.csv", ""))
    with pytest.raises(ParseError, match=":3"):
        load_tag_matrix(_write(tmp_path, "m.csv", "1,a,0.5\n1,b,0.2\n1,c\n"))


def test_determinism():
    a, b = gen_movie_instance(30, 9), gen_movie_instance(30, 9)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.ratings, b.ratings) and np.array_equal(a.chi, b.chi)
    assert gen_erdos_renyi(60, 0.2, 9).edges == gen_erdos_renyi(60, 0.2, 9).edges
    assert gen_erdos_renyi(60, 0.2, 9).edges != gen_erdos_renyi(60, 0.2, 10).edges
    c1, c2 = assign_costs(40, "uniform01", 0.2, 9), assign_costs(40, "uniform01", 0.2, 9)
    assert np.array_equal(c1.costs, c2.costs)


def test_probe_flags_negative_movie():
    m = obj.MovieInstance([1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]], np.zeros((2, 2), bool))
    inst = Instance(obj.movie_objective(m), np.ones(2), 2.0, np.arange(2))
    assert probe_nonnegative(inst, 200, 0) == frozenset({0, 1})
    inst = Instance(obj.movie_objective(m), np.ones(2), 1.0, np.arange(2))
    assert probe_nonnegative(inst, 200, 0) is None
