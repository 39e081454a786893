import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcsp import catalog as cat
from kcsp import hardgen as hg
from kcsp.compilers import compile_obdd_baseline, compile_odd, odd_bound
from kcsp.core import Relation, format_formula, parse_formula, solution_mask
from kcsp.diagrams import count_models, size


def test_tiny_graphs():
    assert hg.random_matching_union(1, 5, 0).edges == ((0, 0),)
    g = hg.random_matching_union(7, 1, 3)
    assert len(g.edges) == 7 and g.max_degree() == 1
    assert sorted(j for _, j in g.edges) == list(range(7))
    with pytest.raises(ValueError):
        hg.random_matching_union(0, 1)


def test_golden_large_graph():
    g = hg.random_matching_union(200, 18, 0)
    assert len(g.edges) == 3450
    assert g.max_degree() == 18
    assert g.degree_histogram() == {14: 1, 15: 11, 16: 59, 17: 145, 18: 184}


def test_generation_is_reproducible():
    a = hg.random_matching_union(30, 4, (1, 2, 3))
    b = hg.random_matching_union(30, 4, (1, 2, 3))
    c = hg.random_matching_union(30, 4, (1, 2, 4))
    assert a == b and a != c


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2 ** 32))
def test_degree_at_most_r(n, r, seed):
    g = hg.random_matching_union(n, r, seed)
    assert 1 <= g.max_degree() <= r
    assert len(g.edges) >= n


def test_expansion_verdicts():
    assert hg.verify_expansion(hg.complete_bipartite(5)).verdict == hg.VERIFIED
    res = hg.verify_expansion(hg.perfect_matching(10))
    assert res.verdict == hg.REFUTED
    assert res.neighbourhood == len(res.witness)
    assert hg.expansion_violated(hg.perfect_matching(10), res.witness, 1.1)


def test_exact_expansion_at_eighteen():
    good = hg.verify_expansion(hg.random_matching_union(18, 18, 0))
    assert good.verdict == hg.VERIFIED and good.checked == 2 * sum(math.comb(18, k) for k in (1, 2, 3))
    # three matchings can agree on a vertex, leaving it with one neighbour
    bad = hg.verify_expansion(hg.random_matching_union(18, 3, 0))
    assert bad.verdict == hg.REFUTED and bad.witness == frozenset({("a", 14)})
    assert hg.expansion_violated(hg.random_matching_union(18, 3, 0), bad.witness, 1.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 14), st.integers(1, 4), st.integers(0, 1000))
def test_refutations_are_genuine(n, r, seed):
    g = hg.random_matching_union(n, r, seed)
    res = hg.verify_expansion(g, alpha=0.3, c=1.5)
    if res.verdict == hg.REFUTED:
        assert hg.expansion_violated(g, res.witness, 1.5)
        assert len(g.neighbours(res.witness)) == res.neighbourhood
        assert len(res.witness) <= 0.3 * n
    else:
        for side in "ab":
            for k in range(1, int(0.3 * n + 1e-9) + 1):
                for s in itertools.combinations([(side, i) for i in range(n)], k):
                    assert not hg.expansion_violated(g, s, 1.5)


def test_sampled_expansion():
    res = hg.verify_expansion(hg.complete_bipartite(40), budget=10, samples=200)
    assert res.verdict == hg.SAMPLED_OK and res.checked == 200


def test_induced_matchings():
    pm = hg.perfect_matching(6)
    left = [("a", i) for i in range(6)]
    assert sorted(hg.greedy_induced_matching(pm, left)) == [(i, i) for i in range(6)]
    path = hg.BipartiteGraph(2, ((0, 0), (1, 0), (1, 1)))
    m = hg.greedy_induced_matching(path, [("a", 0), ("a", 1)])
    assert len(m) == 1 and hg.is_induced_matching(path, m)
    assert not hg.is_induced_matching(path, [(0, 0), (1, 1)])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 1000), st.data())
def test_greedy_matching_is_induced_and_crossing(n, r, seed, data):
    g = hg.random_matching_union(n, r, seed)
    x = data.draw(st.sets(st.sampled_from(g.vertices())))
    m = hg.greedy_induced_matching(g, x)
    assert hg.is_induced_matching(g, m)
    assert all((("a", i) in x) != (("b", j) in x) for i, j in m)


def test_hard_formula_shapes():
    one = hg.BipartiteGraph(1, ((0, 0),))
    f = hg.build_hard_formula(one, cat.parity())
    assert len(f.constraints) == 1 and f.n == 3
    k22 = hg.build_hard_formula(hg.complete_bipartite(2), cat.parity())
    assert len(k22.constraints) == 4 and f.n == 3 and k22.n == 8
    with pytest.raises(ValueError):
        hg.build_hard_formula(one, cat.parity(), 1, 1)
    with pytest.raises(ValueError):
        hg.build_hard_formula(one, Relation.from_values(cat.BOOL, [(0,)]))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 1000))
def test_hard_formula_counts(n, r, seed):
    g = hg.random_matching_union(n, r, seed)
    rel = cat.separating_relation()
    f = hg.build_hard_formula(g, rel)
    xs = [v for v in f.variables if v.startswith("x_")]
    zs = [v for v in f.variables if v.startswith("z_")]
    assert len(xs) == 2 * n and len(zs) == len(g.edges) * (rel.arity - 2)
    assert len(f.constraints) == len(g.edges)
    for v in xs:
        assert sum(v in c.scope for c in f.constraints) <= r


def test_hard_formula_round_trip():
    g = hg.random_matching_union(6, 3, 11)
    f = hg.build_hard_formula(g, cat.separating_relation())
    back = parse_formula(format_formula(f))
    assert back.variables == f.variables
    assert [c.scope for c in back.constraints] == [c.scope for c in f.constraints]
    assert all(a.relation.values() == b.relation.values() for a, b in zip(back.constraints, f.constraints))


# fooling sets

def test_separating_fooling_family():
    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, 3)
    assert len(fs) == 8
    assert hg.is_fooling_pair(cat.separating_relation(), fs.a, fs.b, 0, 1)
    # the witness pair lies in different blocks of the (x, y) selection matrix
    assert {fs.a[0], fs.b[0]} == {0, 2}
    for seed in range(6):
        cert = hg.certify_fooling(f, fs, hg.crosswise_partition(f, 3, seed))
        assert cert.ok and cert.pairs_checked == 28


def test_single_copy_family():
    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, 1)
    assert len(fs) == 2
    assert hg.certify_fooling(f, fs, {"x_0"}).ok


def test_product_relation_has_no_witness():
    s = Relation.from_values(cat.BOOL, [(0, 0), (1, 1)])
    t = [0, 1]
    prod = Relation(cat.BOOL, 3, frozenset((a, b, c) for a, c in s.tuples for b in t))
    assert hg.fooling_family(prod, 0, 1, 2) == hg.NO_WITNESS


def test_certificate_rejects_bad_input():
    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, 2)
    cert = hg.certify_fooling(f, fs, {"x_0", "y_0"})
    assert not cert.ok and "same side" in cert.reason
    with pytest.raises(ValueError):
        hg.certify_fooling(f, fs, {"nope"})
    # two tuples of one block can be exchanged once x goes with u, so this is no fooling set
    a, b = (0, 0, 0, 0), (1, 1, 1, 1)
    bits = (np.arange(4)[:, None] >> np.arange(2)[None, :]) & 1
    members = np.stack([np.array(a), np.array(b)])[bits].reshape(4, 8)
    fake = hg.FoolingSet(a, b, 0, 1, members)
    assert hg.certify_fooling(f, fake, {"x_0", "x_1"}).ok
    cert = hg.certify_fooling(f, fake, {"x_0", "z_0_0", "x_1", "z_1_0"})
    assert not cert.ok and cert.reason == "exchange stays satisfying"


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 9), st.integers(0, 10 ** 6))
def test_certificates_hold_for_crosswise_partitions(n, seed):
    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, n)
    cert = hg.certify_fooling(f, fs, hg.crosswise_partition(f, n, seed))
    assert cert.ok and cert.members == 2 ** n
    assert cert.pairs_checked == 2 ** n * (2 ** n - 1) // 2


@pytest.mark.slow
def test_certificate_at_twelve_copies():
    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, 12)
    cert = hg.certify_fooling(f, fs, hg.crosswise_partition(f, 12, 0))
    assert cert.ok and cert.pairs_checked == 2 ** 12 * (2 ** 12 - 1) // 2


def test_epsilon_is_positive():
    assert 0 < hg.fooling_epsilon(0.1, 0.2, 4, 4, 8, 18) < 1


# bench

def test_empty_bench():
    assert hg.growth_bench(cat.monotone_or(), compile_obdd_baseline, []) == []
    assert hg.bench_csv([]) == "n,vars,constraints,diagram_nodes,millis\n"
    assert hg.growth_ratios([]) == []


def test_bench_rows_do_not_depend_on_n_list():
    a = hg.growth_bench(cat.monotone_or(), compile_obdd_baseline, [5, 7], seed=3, trials=2)
    b = hg.growth_bench(cat.monotone_or(), compile_obdd_baseline, [7, 6, 5], seed=3, trials=2)
    strip = lambda rows: [r.as_tuple(with_time=False) for r in rows]
    assert strip(a) == [t for t in strip(b) if t[0] != 6]
    assert [r.n for r in b] == [5, 5, 6, 6, 7, 7]
    assert hg.bench_csv(a, with_time=False).splitlines()[0] == "n,vars,constraints,diagram_nodes"


def test_bench_sizes_are_exact_diagram_sizes():
    rows = hg.growth_bench(cat.monotone_or(), compile_obdd_baseline, [4, 6], seed=1)
    for row, n in zip(rows, (4, 6)):
        f = hg.build_hard_formula(hg.bench_graph(n, 3, 1, 0), cat.monotone_or())
        dd = compile_obdd_baseline(f)
        assert row.diagram_nodes == size(dd) and row.vars == 2 * n
        assert count_models(dd) == int(solution_mask(f).sum())


def test_tractable_bench_within_odd_bound():
    eq = cat.equality()
    rows = hg.growth_bench(eq, compile_odd, range(2, 9), seed=0, trials=2)
    assert all(r.diagram_nodes <= odd_bound(r.vars, 2) for r in rows)


def test_growth_means():
    rows = [hg.BenchRow(4, 8, 1, 10, 0.0), hg.BenchRow(4, 8, 1, 40, 0.0), hg.BenchRow(5, 10, 1, 40, 0.0)]
    assert hg.growth_means(rows) == [(4, pytest.approx(20.0)), (5, pytest.approx(40.0))]
    assert hg.growth_ratios(rows) == [pytest.approx(2.0)]
