"""Acceptance run: one test per criterion; conftest prints a PASS/FAIL line for each."""
import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from corpus import dnnf_case, instance_case, rng_for
from kcsp import catalog as cat
from kcsp import cli, diagrams, dnnf
from kcsp import hardgen as hg
from kcsp.blockstruct import (binarization, is_balanced, is_blockwise_decomposable,
                              is_blockwise_set_decomposable, is_relation_blockwise_decomposable,
                              is_uniformly_blockwise_decomposable, proper_block_partition,
                              relation_constraint, selection_matrix)
from kcsp.coclone import (HARD, NONUNIFORM_FDD, UNIFORM_ODD, Classifier, Language, classify_language,
                          is_bijunctive_affine, pi2_closure)
from kcsp.compilers import compile_fdd, compile_obdd_baseline, compile_odd, fdd_bound, odd_bound
from kcsp.core import Constraint, Relation, all_assignments, enumerate_solutions

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
UNIFORM_LANGS = ("e", "cyclic", "r_prime")
ALL_LANGS = UNIFORM_LANGS + ("separating",)
CORPUS_SIZE = 500


# 1

def test_criterion_1_worked_examples():
    t0 = time.perf_counter()
    c = Constraint(("x", "y", "z", "v"), cat.blockmatrix_relation())
    m = selection_matrix(c, "x", "y")
    assert m.pattern.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 0]]
    assert proper_block_partition(m).blocks == [(frozenset("a"), frozenset("a")),
                                                (frozenset("bc"), frozenset("b"))]

    sep = cat.separating_constraint()
    bw = is_blockwise_decomposable(sep, "x", "y")
    assert bw.ok and bw.splits == ((("x", "u"), ("y", "v")), (("x", "v"), ("y", "u")))
    assert not is_uniformly_blockwise_decomposable(sep, "x", "y").ok

    res = pi2_closure(Language.of({"R": cat.separating_relation()}))
    want = {Relation.full(cat.ABCD, 1), Relation.equality(cat.ABCD), Relation.full(cat.ABCD, 2),
            cat.r_prime(), cat.r_double_prime(), cat.r_triple_prime()}
    assert set(res.relations) == want and len(res.relations) == 6

    cp = relation_constraint(cat.parity())
    assert not is_blockwise_decomposable(cp, "x0", "x1").ok
    assert not is_relation_blockwise_decomposable(cat.parity())
    assert classify_language(Language.of(cat.parity_language())).verdict == HARD
    assert time.perf_counter() - t0 < 1.0


# 2

def _boolean_relations():
    for k in (1, 2, 3):
        cells = list(itertools.product((0, 1), repeat=k))
        for mask in range(2 ** len(cells)):
            yield Relation(cat.BOOL, k, frozenset(c for i, c in enumerate(cells) if mask >> i & 1))


def test_criterion_2_classifier_trichotomy():
    t0 = time.perf_counter()
    assert classify_language(Language.of(cat.e_language())).verdict == UNIFORM_ODD
    assert classify_language(Language.of(cat.separating_language())).verdict == NONUNIFORM_FDD
    assert classify_language(Language.of(cat.parity_language())).verdict == HARD

    rels = list(_boolean_relations())
    clf = Classifier()
    langs = [(r,) for r in rels] + list(itertools.combinations(rels, 2))
    verdicts = {}
    for rs in langs:
        g = Language(cat.BOOL, tuple((f"R{j}", r) for j, r in enumerate(rs)))
        v = clf.classify(g).verdict
        verdicts[v] = verdicts.get(v, 0) + 1
        assert v != NONUNIFORM_FDD, rs
        assert (v == UNIFORM_ODD) == all(is_bijunctive_affine(r) for r in rs), rs
    assert sum(verdicts.values()) == 38226
    assert time.perf_counter() - t0 < 300


# 3 and 4 share one corpus

def _oracle(f):
    rows = all_assignments(f.n, f.domain.size)
    want = np.zeros(len(rows), dtype=bool)
    d = f.domain.size
    for s in enumerate_solutions(f):
        idx = 0
        for v in f.variables:
            idx = idx * d + f.domain.index(s[v])
        want[idx] = True
    return rows, want


@pytest.fixture(scope="module")
def compiled():
    """Per language: list of (instance, kind, size, agrees)."""
    out = {}
    for name in ALL_LANGS:
        runs = []
        for i in range(CORPUS_SIZE):
            f = instance_case(name, i)
            rows, want = _oracle(f)
            fdd = compile_fdd(f)
            runs.append((i, "fdd", f, diagrams.size(fdd),
                         np.array_equal(diagrams.evaluate_rows(fdd, rows, f.variables), want)))
            c = dnnf.fdd_to_dnnf(fdd)
            ok = np.array_equal(dnnf.accepts_rows(c, rows, f.variables), want)
            runs.append((i, "dnnf-fdd", f, dnnf.size(c), ok and dnnf.check_decomposable(c) is None))
            if name in UNIFORM_LANGS:
                odd = compile_odd(f)
                runs.append((i, "odd", f, diagrams.size(odd),
                             np.array_equal(diagrams.evaluate_rows(odd, rows, f.variables), want)))
                s, vt = dnnf.odd_to_structured_dnnf(odd)
                ok = np.array_equal(dnnf.accepts_rows(s, rows, f.variables), want)
                runs.append((i, "dnnf-odd", f, dnnf.size(s), ok and dnnf.check_structured(s, vt)))
        out[name] = runs
    return out


def test_criterion_3_oracle_equivalence(compiled):
    for name in ALL_LANGS:
        runs = compiled[name]
        assert len({i for i, *_ in runs}) == CORPUS_SIZE
        kinds = {k for _, k, *_ in runs}
        assert kinds == ({"fdd", "dnnf-fdd", "odd", "dnnf-odd"} if name in UNIFORM_LANGS else {"fdd", "dnnf-fdd"})
        for f in (r[2] for r in runs):
            assert f.n <= 10 and f.domain.size <= 4
        bad = [(i, k) for i, k, _, _, ok in runs if not ok]
        assert bad == [], (name, bad[:5])


def test_criterion_4_size_bounds(compiled):
    violations = []
    for name, runs in compiled.items():
        for i, kind, f, sz, _ in runs:
            d = f.domain.size
            if kind == "odd" and sz > odd_bound(f.n, d):
                violations.append((name, i, kind, sz))
            if kind == "fdd" and sz > fdd_bound(f.n, d):
                violations.append((name, i, kind, sz))
    assert violations == []


# 5 and 6

N_CIRCUITS = 200


def test_criterion_5_transformation_laws():
    for i in range(N_CIRCUITS):
        o, _, _ = dnnf_case(i)
        rng = rng_for(50, i)
        acc = dnnf.accepted_by_capture(o)
        e = dnnf.eliminate_special_inputs(o)
        assert dnnf.accepted_by_capture(e) == acc and dnnf.size(e) <= dnnf.size(o), i
        n, d = len(o.variables), o.domain.size
        for k, x in enumerate(o.variables):
            subset = sorted(int(a) for a in rng.choice(d, size=int(rng.integers(1, d + 1)), replace=False))
            r = dnnf.restrict(o, x, [o.domain.elements[a] for a in subset])
            assert dnnf.accepted_by_capture(r) == {t for t in acc if t[k] in subset}, (i, x)
            assert dnnf.size(r) <= dnnf.size(o), (i, x)
        keep_idx = sorted(int(j) for j in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        p = dnnf.project(o, [o.variables[j] for j in keep_idx])
        assert dnnf.accepted_by_capture(p) == {tuple(t[j] for j in keep_idx) for t in acc}, i
        assert dnnf.size(p) <= dnnf.size(o), i


def test_criterion_6_rectangle_covers():
    for i in range(N_CIRCUITS):
        o, vtree, z = dnnf_case(i)
        cover = dnnf.extract_rectangle_cover(o, z, vtree=vtree)
        assert len(cover) <= dnnf.size(o), i
        assert cover.union() == dnnf.accepted_by_capture(o), i
        assert all(rect.balanced(z, 2 / 3) for rect in cover.rectangles), i
        if vtree is not None:
            assert len(cover.partitions()) <= 1, i


# 7

def _sampled_relation(i):
    rng = rng_for(7, i)
    domain = cat.BOOL if rng.random() < 0.5 else cat.D3
    k = int(rng.integers(1, 5))
    cells = list(itertools.product(range(domain.size), repeat=k))
    m = int(rng.integers(0, min(len(cells), 16) + 1))
    pick = rng.choice(len(cells), size=m, replace=False)
    return Relation(domain, k, frozenset(cells[int(j)] for j in pick))


def _catalog_relations():
    rels = [cat.blockmatrix_relation(), cat.separating_r1(), cat.separating_r2(), cat.separating_relation(),
            cat.r_prime(), cat.r_double_prime(), cat.r_triple_prime(), cat.parity(), cat.implication(),
            cat.monotone_or(), cat.equality(), cat.disequality()]
    for lang in (cat.e_language(), cat.cyclic_language()):
        rels.extend(lang.values())
    return rels


def _disjoint_pairs(k):
    for labels in itertools.product((0, 1, 2), repeat=k):
        xs = [i for i, l in enumerate(labels) if l == 1]
        ys = [i for i, l in enumerate(labels) if l == 2]
        if xs and ys:
            yield xs, ys


def test_criterion_7_equivalence_of_notions():
    corpus = [_sampled_relation(i) for i in range(10 ** 4)] + _catalog_relations()
    decomposable = 0
    for r in corpus:
        bd = is_relation_blockwise_decomposable(r)
        assert bd == is_blockwise_set_decomposable(r), r
        c = relation_constraint(r)
        b = binarization(c)
        assert c.tuples <= b.tuples
        if bd:
            decomposable += 1
            assert all(is_balanced(r, xs, ys) for xs, ys in _disjoint_pairs(r.arity)), r
            assert b.tuples == c.tuples, r
    # both outcomes occur, so neither side of the equivalence is vacuous
    assert 0 < decomposable < len(corpus)
    cp = relation_constraint(cat.parity())
    assert not is_relation_blockwise_decomposable(cat.parity())
    assert cp.tuples < binarization(cp).tuples


# 8

def test_criterion_8_hardness_artifacts():
    t0 = time.perf_counter()
    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, 10)
    cert = hg.certify_fooling(f, fs, hg.crosswise_partition(f, 10, 0))
    assert cert.ok and cert.members == 2 ** 10 and cert.pairs_checked == 2 ** 10 * (2 ** 10 - 1) // 2
    assert time.perf_counter() - t0 < 60

    rows = hg.growth_bench(cat.monotone_or(), compile_obdd_baseline, range(4, 15), seed=0, r=3, trials=9)
    assert hg.bench_csv(rows, with_time=False) == (GOLDEN / "growth_or.csv").read_text()
    means = hg.growth_means(rows)
    steps = [(a[0], b[1] / a[1]) for a, b in zip(means, means[1:])]
    assert all(q >= 1.5 for n, q in steps if n >= 8), steps

    eq = hg.growth_bench(cat.equality(), compile_odd, range(4, 15), seed=0, r=3, trials=9)
    assert all(row.diagram_nodes <= odd_bound(row.vars, 2) for row in eq)


# 9

def _commands(tmp):
    return [
        ["analyze", "e.lang"],
        ["analyze", "separating.lang"],
        ["analyze", "parity.lang"],
        ["compile", "e_instance.csp", "--format", "odd", "--out", str(tmp / "e.odd.json")],
        ["compile", "e_instance.csp", "--format", "dnnf", "--out", str(tmp / "e.dnnf.json")],
        ["compile", "separating_instance.csp", "--format", "fdd", "--out", str(tmp / "s.fdd.json")],
        ["compile", "parity_instance.csp", "--format", "odd"],
        ["compile", "long_chain.csp", "--format", "odd", "--out", str(tmp / "chain.json")],
        ["verify", "e_instance.csp", str(tmp / "e.odd.json")],
        ["verify", "e_instance.csp", str(tmp / "e.dnnf.json")],
        ["verify", "separating_instance.csp", str(tmp / "s.fdd.json")],
        ["verify", "long_chain.csp", str(tmp / "chain.json")],
        ["count", "e_instance.csp"],
        ["count", "separating_instance.csp", "--circuit", str(tmp / "s.fdd.json")],
        ["enum", "parity_instance.csp"],
        ["bench", "--relation", "or.rel", "--n", "4..6", "--trials", "2"],
        ["gen-hard", "--relation", "separating.lang", "--n", "4", "--degree", "2"],
    ]


def _run_all(capsys, tmp, seed):
    for p in tmp.iterdir():
        p.unlink()
    outs = []
    for argv in _commands(tmp):
        code = cli.main(argv + ["--json", "--seed", str(seed)])
        out = capsys.readouterr().out
        json.loads(out)
        artifacts = sorted((p.name, p.read_bytes()) for p in tmp.iterdir())
        outs.append((code, out, artifacts))
    return outs


def test_criterion_9_determinism(capsys, monkeypatch, tmp_path):
    monkeypatch.chdir(DATA)
    for seed in (0, 7):
        a = _run_all(capsys, tmp_path, seed)
        b = _run_all(capsys, tmp_path, seed)
        assert a == b
