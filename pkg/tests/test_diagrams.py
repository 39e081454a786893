import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcsp import catalog as cat
from kcsp.compilers import compile_fdd, compile_obdd_baseline
from kcsp.core import Domain, ScopeError, all_assignments, solution_mask
from kcsp.diagrams import (FALSE, FDD, ODD, TRUE, DiagramBuilder, count_models, dumps, evaluate,
                           evaluate_rows, from_json, reduce, size, to_dot, to_json, validate)


def xor_diagram(order_kind=ODD):
    b = DiagramBuilder(cat.BOOL)
    y0 = b.add("y", [FALSE, TRUE])
    y1 = b.add("y", [TRUE, FALSE])
    x = b.add("x", [y0, y1])
    return b.build(x, ("x", "y"), order_kind, ("x", "y"))


def test_evaluate_and_count():
    d = xor_diagram()
    assert [evaluate(d, {"x": a, "y": b}) for a in (0, 1) for b in (0, 1)] == [False, True, True, False]
    assert count_models(d) == 2
    assert count_models(d, n_vars=3) == 4
    assert size(d) == 3
    with pytest.raises(ScopeError):
        evaluate(d, {"x": 0})


def test_evaluate_rows_matches_pointwise():
    d = xor_diagram()
    rows = all_assignments(2, 2)
    assert evaluate_rows(d, rows, ["x", "y"]).tolist() == [False, True, True, False]
    # column order is taken from the variable list
    assert evaluate_rows(d, rows[:, ::-1], ["y", "x"]).tolist() == [False, True, True, False]


def test_validate_detects_double_read():
    b = DiagramBuilder(cat.BOOL)
    inner = b.add("x", [FALSE, TRUE])
    top = b.add("x", [inner, TRUE])
    d = b.build(top, ("x",), FDD)
    v = validate(d)
    assert v is not None and v.reason == "variable read twice"
    assert v.variables == ("x", "x")


def test_validate_detects_order_violation():
    b = DiagramBuilder(cat.BOOL)
    x = b.add("x", [FALSE, TRUE])
    y = b.add("y", [x, TRUE])
    d = b.build(y, ("x", "y"), ODD, ("x", "y"))
    v = validate(d)
    assert v is not None and v.reason == "order violated"
    assert validate(xor_diagram()) is None


def test_free_diagram_may_change_order_between_paths():
    b = DiagramBuilder(cat.BOOL)
    y_last = b.add("y", [FALSE, TRUE])
    x_first = b.add("x", [y_last, FALSE])
    x_last = b.add("x", [TRUE, FALSE])
    y_first = b.add("y", [x_last, FALSE])
    z = b.add("z", [x_first, y_first])
    d = b.build(z, ("x", "y", "z"), FDD)
    assert validate(d) is None
    assert count_models(d) == 2
    ordered = b.build(z, ("x", "y", "z"), ODD, ("z", "x", "y"))
    assert validate(ordered).reason == "order violated"


def test_reduce_merges_and_bypasses():
    b = DiagramBuilder(cat.BOOL)
    t1 = b.add("y", [TRUE, TRUE])
    t2 = b.add("y", [FALSE, TRUE])
    t3 = b.add("y", [FALSE, TRUE])
    x = b.add("x", [t1, t2])
    top = b.add("z", [x, b.add("x", [t1, t3])])
    d = b.build(top, ("x", "y", "z"), ODD, ("z", "x", "y"))
    r = reduce(d)
    assert size(r) == 2
    rows = all_assignments(3, 2)
    assert np.array_equal(evaluate_rows(d, rows, ["x", "y", "z"]), evaluate_rows(r, rows, ["x", "y", "z"]))


def test_json_round_trip_and_dot():
    d = xor_diagram()
    e = from_json(to_json(d))
    assert e == d
    assert dumps(d) == dumps(e)
    dot = to_dot(d)
    assert dot.startswith("digraph") and 'label="x"' in dot


def test_wrong_out_degree_is_rejected():
    b = DiagramBuilder(Domain(("p", "q", "r")))
    with pytest.raises(ValueError):
        b.add("x", [FALSE, TRUE])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 7), st.integers(0, 8))
def test_compiled_diagrams_count_like_the_oracle(seed, n, m):
    rng = np.random.default_rng(seed)
    f = cat.random_formula(rng, cat.e_language(), n, m)
    mask = solution_mask(f)
    for d in (compile_fdd(f), compile_obdd_baseline(f)):
        assert validate(d) is None
        assert count_models(d) == int(mask.sum())
        assert np.array_equal(evaluate_rows(d, all_assignments(n, 2), f.variables), mask)
        assert size(reduce(d)) <= size(d)
