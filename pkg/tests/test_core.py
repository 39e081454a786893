import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcsp import catalog as cat
from kcsp.core import (Constraint, Domain, DomainError, FormatError, Formula, Relation, ScopeError,
                       Solver, all_assignments, conjoin, count_solutions, enumerate_solutions,
                       evaluate_rows, format_formula, is_satisfiable, parse_formula, parse_instance,
                       project, select, solution_mask)


@st.composite
def relations(draw, domain=cat.D3, max_arity=3):
    k = draw(st.integers(1, max_arity))
    cells = list(itertools.product(range(domain.size), repeat=k))
    keep = draw(st.lists(st.booleans(), min_size=len(cells), max_size=len(cells)))
    return Relation(domain, k, frozenset(t for t, b in zip(cells, keep) if b))


@st.composite
def formulas(draw, domain=cat.D3, max_n=5, max_m=4):
    n = draw(st.integers(1, max_n))
    variables = tuple(f"v{i}" for i in range(n))
    cons = []
    for _ in range(draw(st.integers(0, max_m))):
        r = draw(relations(domain))
        scope = tuple(draw(st.sampled_from(variables)) for _ in range(r.arity))
        cons.append(Constraint(scope, r))
    return Formula(domain, variables, tuple(cons))


def test_domain_rejects_repeats_and_unknown_values():
    with pytest.raises(DomainError):
        Domain((1, 1))
    with pytest.raises(DomainError):
        cat.ABC.index("z")


def test_relation_views():
    r = cat.implication()
    assert r.values() == [(0, 0), (0, 1), (1, 1)]
    assert r.transpose().values() == [(0, 0), (1, 0), (1, 1)]
    assert Relation.full(cat.BOOL, 2).is_full()
    assert len(Relation.disequality(cat.D3)) == 6


def test_repeated_scope_is_folded():
    c = Constraint(("x", "x"), Relation.disequality(cat.BOOL))
    assert c.scope == ("x",)
    assert c.is_empty()
    c = Constraint(("x", "y", "x"), cat.parity())
    assert c.scope == ("x", "y")
    assert sorted(c.tuples) == [(0, 1), (1, 1)]           # x + y + x = 1 forces y = 1


def test_constraint_rejects_arity_mismatch():
    with pytest.raises(ScopeError):
        Constraint(("x",), cat.implication())


def test_conjoin_project_select_small():
    a = Constraint(("x", "y"), cat.implication())
    b = Constraint(("y", "z"), cat.implication())
    ab = conjoin(a, b)
    assert len(ab.tuples) == 4                                   # monotone chains x <= y <= z
    assert project(ab, ["x", "z"]).relation.values() == [(0, 0), (0, 1), (1, 1)]
    assert select(ab, "y", [1]).relation.values() == [(0, 1, 1), (1, 1, 1)]


@settings(max_examples=60, deadline=None)
@given(relations(), relations())
def test_conjoin_matches_brute_force(r1, r2):
    c1 = Constraint(tuple(f"a{i}" for i in range(r1.arity)), r1)
    c2 = Constraint(tuple(f"a{i + 1}" for i in range(r2.arity)), r2)
    both = conjoin(c1, c2)
    out = set()
    for t in itertools.product(range(3), repeat=len(both.scope)):
        asg = dict(zip(both.scope, t))
        if tuple(asg[v] for v in c1.scope) in r1.tuples and tuple(asg[v] for v in c2.scope) in r2.tuples:
            out.add(t)
    assert both.tuples == frozenset(out)


@settings(max_examples=80, deadline=None)
@given(formulas())
def test_solver_agrees_with_brute_force(f):
    mask = solution_mask(f)
    assert count_solutions(f) == int(mask.sum())
    assert is_satisfiable(f) == bool(mask.any())
    rows = all_assignments(f.n, f.domain.size)
    got = sorted(tuple(f.domain.index(s[v]) for v in f.variables) for s in enumerate_solutions(f))
    assert got == sorted(map(tuple, rows[mask].tolist()))


@settings(max_examples=40, deadline=None)
@given(formulas())
def test_as_constraint_is_the_solution_set(f):
    c = f.as_constraint()
    rows = all_assignments(f.n, f.domain.size)
    assert c.tuples == frozenset(map(tuple, rows[solution_mask(f)].tolist()))


def test_solver_partial_assignment():
    f = Formula(cat.BOOL, ("x", "y", "z"), (Constraint(("x", "y", "z"), cat.parity()),))
    assert count_solutions(f) == 4
    assert count_solutions(f, {"x": 1}) == 2
    assert enumerate_solutions(f, {"x": 1, "y": 1}) == [{"x": 1, "y": 1, "z": 1}]


def test_solver_handles_long_chains():
    # deep search without recursion limits
    n = 3000
    vs = tuple(f"v{i}" for i in range(n))
    cons = tuple(Constraint((vs[i], vs[i + 1]), Relation.disequality(cat.BOOL)) for i in range(n - 1))
    f = Formula(cat.BOOL, vs, cons)
    s = Solver(f)
    assert s.find(s.initial()) is not None
    assert count_solutions(f) == 2


def test_evaluate_rows_on_parity():
    f = Formula(cat.BOOL, ("x", "y", "z"), (Constraint(("x", "y", "z"), cat.parity()),))
    rows = all_assignments(3, 2)
    assert evaluate_rows(f, rows).tolist() == [False, True, True, False, True, False, False, True]


INSTANCE = """\
# two chained implications
domain: 0 1
var: x y z
rel imp arity=2
0 0
0 1
1 1
end
con imp x y
con imp y z
"""


def test_parse_instance():
    domain, variables, relations, constraints = parse_instance(INSTANCE)
    assert domain.elements == ("0", "1")
    assert variables == ["x", "y", "z"]
    assert len(relations["imp"]) == 3
    assert constraints == [("imp", ("x", "y")), ("imp", ("y", "z"))]
    assert count_solutions(parse_formula(INSTANCE)) == 4


@pytest.mark.parametrize("text", [
    "var: x\n",
    "domain: 0 1\nrel r arity=2\n0 0\n",
    "domain: 0 1\nvar: x\nrel r arity=1\n2\nend\n",
    "domain: 0 1\nvar: x\ncon q x\n",
    "domain: 0 1\nvar: x\nrel r arity=1\n1\nend\ncon r y\n",
    "domain: 0 1\nvar: x\nbogus\n",
])
def test_parse_errors(text):
    with pytest.raises(FormatError):
        parse_formula(text)


@settings(max_examples=40, deadline=None)
@given(formulas())
def test_format_round_trip(f):
    g = parse_formula(format_formula(f))
    assert g.variables == f.variables
    assert np.array_equal(solution_mask(g), solution_mask(f))
