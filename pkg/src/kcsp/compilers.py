"""Compilation of CSP instances into decision diagrams.

Sub-relations are never materialised.  A *view* of a formula is a tuple
of exact live-domain bitmasks (one per formula variable) together with
the set of kept variables; it denotes the projection onto the kept
variables of the solutions that respect the domains.  Every question
about a view is answered by pinned satisfiability tests on the formula.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .blockstruct import NotProper, pattern_blocks
from .core import Formula, Relation, Solver, all_assignments, evaluate_rows as formula_rows
from .diagrams import FALSE, FDD, ODD, TRUE, DecisionDiagram, DiagramBuilder, reduce, size, validate
from .diagrams import evaluate_rows as diagram_rows

Doms = Tuple[int, ...]


class SplitFailed(RuntimeError):
    """No uniform split exists: the language is not uniformly blockwise decomposable."""


class Misclassified(RuntimeError):
    """Algorithm 1 met a structure that a blockwise decomposable language cannot produce."""


# implicit views ----------------------------------------------------------------------

class Views:
    """Cached pinned-satisfiability queries on one formula."""

    def __init__(self, f: Formula):
        self.f = f
        self.solver = Solver(f)
        self.d = f.domain.size
        self._canon: Dict[Doms, Optional[Doms]] = {}
        self.var_cons: List[List[int]] = [[] for _ in f.variables]
        for k, (scope, _) in enumerate(self.solver.cons):
            for i in set(scope):
                self.var_cons[i].append(k)

    def top(self) -> Optional[Doms]:
        return self.canon(tuple(self.solver.initial()))

    def sat(self, doms: Sequence[int]) -> bool:
        return self.solver.satisfiable(doms)

    def canon(self, doms: Sequence[int]) -> Optional[Doms]:
        """Shrink every domain to the values some solution uses; None when unsatisfiable."""
        key = tuple(doms)
        if key in self._canon:
            return self._canon[key]
        work = list(key)
        if not self.solver.propagate(work) or not self.sat(work):
            self._canon[key] = None
            return None
        out = list(work)
        for i, m in enumerate(work):
            if m & (m - 1):
                live = 0
                for a in _bits(m):
                    trial = list(work)
                    trial[i] = 1 << a
                    if self.sat(trial):
                        live |= 1 << a
                out[i] = live
        res = tuple(out)
        self._canon[key] = res
        self._canon[res] = res
        return res

    def pin(self, doms: Doms, i: int, mask: int) -> Optional[Doms]:
        d = list(doms)
        d[i] &= mask
        return self.canon(d)

    def pattern(self, doms: Doms, i: int, j: int) -> np.ndarray:
        """Non-emptiness pattern of the (i, j) selection matrix of the view."""
        p = np.zeros((self.d, self.d), dtype=bool)
        for a in _bits(doms[i]):
            for b in _bits(doms[j]):
                trial = list(doms)
                trial[i], trial[j] = 1 << a, 1 << b
                p[a, b] = self.sat(trial)
        return p

    def components(self, doms: Doms, keep: Sequence[int]) -> List[List[int]]:
        """Kept variables grouped by connectivity through unsettled variables."""
        parent = {i: i for i, m in enumerate(doms) if m & (m - 1)}

        def root(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for scope, _ in self.solver.cons:
            live = [i for i in scope if i in parent]
            for i in live[1:]:
                parent[root(i)] = root(live[0])
        groups: Dict[int, List[int]] = {}
        singles = []
        for i in keep:
            if i in parent:
                groups.setdefault(root(i), []).append(i)
            else:
                singles.append([i])
        return list(groups.values()) + singles

    def factors(self, doms: Doms, keep: Sequence[int]) -> List[List[int]]:
        """Indecomposable factors of the view, each sorted, ordered by first variable.

        Two variables share a factor iff their selection matrix has at
        least two blocks; for a blockwise decomposable view this relation
        is an equivalence, which is checked.
        """
        out: List[List[int]] = []
        for comp in self.components(doms, keep):
            comp = sorted(comp)
            if len(comp) == 1:
                out.append(comp)
                continue
            parent = {i: i for i in comp}
            linked = set()

            def root(i):
                while parent[i] != i:
                    i = parent[i]
                return i

            for i, j in itertools.combinations(comp, 2):
                blocks = pattern_blocks(self.pattern(doms, i, j))
                if isinstance(blocks, NotProper):
                    raise _NotProperView(i, j, blocks)
                if len(blocks) >= 2:
                    linked.add((i, j))
                    parent[root(j)] = root(i)
            groups: Dict[int, List[int]] = {}
            for i in comp:
                groups.setdefault(root(i), []).append(i)
            for g in groups.values():
                for i, j in itertools.combinations(g, 2):
                    if (i, j) not in linked:
                        raise _NotTransitive(i, j)
                out.append(g)
        return sorted(out)

    def relation(self, doms: Doms, keep: Sequence[int], limit: int = 200_000) -> Optional[FrozenSet[tuple]]:
        """Explicit projected relation, or None beyond ``limit`` solutions."""
        if self.solver.count(doms) > limit:
            return None
        out = set()
        for k, t in enumerate(self.solver.enumerate(doms)):
            if k >= limit:
                return None
            out.add(tuple(t[i] for i in keep))
        return frozenset(out)


class _NotProperView(Exception):
    def __init__(self, i, j, witness):
        super().__init__(i, j)
        self.i, self.j, self.witness = i, j, witness


class _NotTransitive(Exception):
    def __init__(self, i, j):
        super().__init__(i, j)
        self.i, self.j = i, j


def _bits(m: int) -> List[int]:
    out, a = [], 0
    while m:
        if m & 1:
            out.append(a)
        m >>= 1
        a += 1
    return out


def _mask(values) -> int:
    m = 0
    for a in values:
        m |= 1 << a
    return m


# uniform splits and structure trees ---------------------------------------------------------

@dataclass(frozen=True)
class UniformSplit:
    v_side: Tuple[str, ...]
    pivot: Tuple[str, str]
    w_side: Tuple[str, ...]


def _split(views: Views, doms: Doms, keep: Sequence[int], x: int, y: int) -> Tuple[List[int], List[int]]:
    names = views.f.variables
    blocks = pattern_blocks(views.pattern(doms, x, y))
    if isinstance(blocks, NotProper):
        raise SplitFailed(f"selection matrix of ({names[x]}, {names[y]}) is not a proper block matrix")
    partitions: List[List[List[int]]] = []
    for rows, cols in blocks:
        sub = list(doms)
        sub[x] &= _mask(rows)
        sub[y] &= _mask(cols)
        sub = views.canon(sub)
        if sub is None:
            continue
        try:
            partitions.append(views.factors(sub, keep))
        except (_NotProperView, _NotTransitive) as e:
            raise SplitFailed(f"block of ({names[x]}, {names[y]}) is not blockwise decomposable") from e
    side = {x}
    changed = True
    while changed:
        changed = False
        for parts in partitions:
            for p in parts:
                if side.intersection(p) and not side.issuperset(p):
                    side.update(p)
                    changed = True
    if y in side:
        raise SplitFailed(f"{names[y]!r} is absorbed into the side of {names[x]!r}")
    v = [i for i in keep if i in side and i != x]
    w = [i for i in keep if i not in side and i != y]
    return v, w


def _check_split(views: Views, doms: Doms, keep: Sequence[int], x: int, y: int,
                 v: Sequence[int], w: Sequence[int], limit: int = 20_000) -> None:
    """Runtime self-check of the split identity; skipped for views with more than ``limit`` solutions."""
    rel = views.relation(doms, keep, limit)
    if rel is None:
        return
    pos = {i: k for k, i in enumerate(keep)}
    xv = [pos[i] for i in [x, *v]]
    yw = [pos[i] for i in [y, *w]]
    xy = [pos[x], pos[y]]
    left = {tuple(t[k] for k in xv) for t in rel}
    mid = {tuple(t[k] for k in xy) for t in rel}
    right = {tuple(t[k] for k in yw) for t in rel}
    # conjunction of the three projections, built by joining on x and y
    by_x: Dict[int, List[tuple]] = {}
    for t in left:
        by_x.setdefault(t[0], []).append(t)
    by_y: Dict[int, List[tuple]] = {}
    for t in right:
        by_y.setdefault(t[0], []).append(t)
    count = sum(len(by_x.get(a, ())) * len(by_y.get(b, ())) for a, b in mid)
    assert count == len(rel), "uniform split identity fails"


def find_uniform_split(f: Formula, x: str, y: str, verify: bool = True) -> UniformSplit:
    views = Views(f)
    doms = views.top()
    pos = {v: i for i, v in enumerate(f.variables)}
    keep = list(range(f.n))
    if doms is None:
        doms = tuple(views.solver.initial())
    v, w = _split(views, doms, keep, pos[x], pos[y])
    if verify:
        _check_split(views, doms, keep, pos[x], pos[y], v, w)
    names = f.variables
    return UniformSplit(tuple(names[i] for i in v), (x, y), tuple(names[i] for i in w))


@dataclass(frozen=True)
class StructureTree:
    """A forest on the variables whose edge relations (with vertex domains) define the formula."""

    variables: Tuple[str, ...]
    edges: Tuple[Tuple[str, str, Relation], ...]
    domains: Tuple[Tuple[str, Relation], ...]

    def neighbours(self) -> Dict[str, List[str]]:
        adj: Dict[str, List[str]] = {v: [] for v in self.variables}
        for p, q, _ in self.edges:
            adj[p].append(q)
            adj[q].append(p)
        return adj

    def to_dot(self) -> str:
        lines = ["graph T {"]
        for v in self.variables:
            lines.append(f'  "{v}";')
        for p, q, r in self.edges:
            lines.append(f'  "{p}" -- "{q}" [label="{len(r)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _primal_forest(f: Formula) -> Optional[List[Tuple[int, int]]]:
    pos = {v: i for i, v in enumerate(f.variables)}
    pairs = set()
    for c in f.constraints:
        if c.arity > 2:
            return None
        if c.arity == 2:
            i, j = sorted((pos[c.scope[0]], pos[c.scope[1]]))
            pairs.add((i, j))
    parent = list(range(f.n))

    def root(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i, j in sorted(pairs):
        ri, rj = root(i), root(j)
        if ri == rj:
            return None
        parent[rj] = ri
    return sorted(pairs)


def tree_structure(f: Formula, verify: bool = True) -> StructureTree:
    """Structure forest via recursive uniform splits (or directly when the formula is a binary forest)."""
    views = Views(f)
    doms = views.top()
    names = f.variables
    if doms is None:
        empty = Relation.empty(f.domain, 1)
        return StructureTree(names, (), tuple((v, empty) for v in names))
    pairs = _primal_forest(f)
    if pairs is None:
        pairs = []
        _tree_edges(views, doms, list(range(f.n)), pairs, verify)
    edges = []
    for i, j in pairs:
        tuples = frozenset((a, b) for a in _bits(doms[i]) for b in _bits(doms[j])
                           if views.sat(_pinned(doms, {i: a, j: b})))
        edges.append((names[i], names[j], Relation(f.domain, 2, tuples)))
    dom_rel = tuple((names[i], Relation(f.domain, 1, frozenset((a,) for a in _bits(doms[i]))))
                    for i in range(f.n))
    return StructureTree(names, tuple(edges), dom_rel)


def _pinned(doms: Doms, pins: Mapping[int, int]) -> List[int]:
    d = list(doms)
    for i, a in pins.items():
        d[i] &= 1 << a
    return d


def _tree_edges(views: Views, doms: Doms, keep: List[int], out: List[Tuple[int, int]], verify: bool) -> None:
    comps = views.components(doms, keep)
    if len(comps) > 1:
        for comp in comps:
            _tree_edges(views, doms, sorted(comp), out, verify)
        return
    if len(keep) <= 1:
        return
    x, y = keep[0], keep[1]
    v, w = _split(views, doms, keep, x, y)
    if verify:
        _check_split(views, doms, keep, x, y, v, w)
    out.append((x, y))
    _tree_edges(views, doms, [x, *v], out, verify)
    _tree_edges(views, doms, [y, *w], out, verify)


# ODD compilation ----------------------------------------------------------------------

def odd_bound(n: int, d: int) -> float:
    return 0.0 if n == 0 else n * d ** math.log2(n)


def fdd_bound(n: int, d: int) -> int:
    return 2 * n * d ** (2 * d + 1)


class _OddCompiler:
    def __init__(self, tree: StructureTree, domain):
        self.tree = tree
        self.rank = {v: k for k, v in enumerate(tree.variables)}
        self.adj = {v: sorted(ns, key=self.rank.get) for v, ns in tree.neighbours().items()}
        self.rel: Dict[Tuple[str, str], FrozenSet[Tuple[int, int]]] = {}
        for p, q, r in tree.edges:
            self.rel[(p, q)] = r.tuples
            self.rel[(q, p)] = frozenset((b, a) for a, b in r.tuples)
        self.b = DiagramBuilder(domain)
        self.d = domain.size
        self.memo: Dict[tuple, int] = {}

    def centroid(self, comp: FrozenSet[str]) -> str:
        best, best_key = None, None
        for z in sorted(comp, key=self.rank.get):
            worst = max((len(c) for c in self.split(comp, z)), default=0)
            if best_key is None or worst < best_key:
                best, best_key = z, worst
        return best

    def split(self, comp: FrozenSet[str], z: str) -> List[FrozenSet[str]]:
        rest = set(comp) - {z}
        out = []
        while rest:
            start = min(rest, key=self.rank.get)
            seen, stack = {start}, [start]
            while stack:
                u = stack.pop()
                for w in self.adj[u]:
                    if w in rest and w not in seen:
                        seen.add(w)
                        stack.append(w)
            rest -= seen
            out.append(frozenset(seen))
        return sorted(out, key=lambda c: min(self.rank[v] for v in c))

    def order(self, comp: FrozenSet[str]) -> List[str]:
        z = self.centroid(comp)
        out = [z]
        for c in self.split(comp, z):
            out += self.order(c)
        return out

    def filter(self, comp: FrozenSet[str], doms: Mapping[str, FrozenSet[int]], z: str, a: int):
        """Exact domains of the component's variables once z = a (the domains are arc consistent)."""
        out = {z: frozenset((a,))}
        stack = [z]
        while stack:
            u = stack.pop()
            for w in self.adj[u]:
                if w in comp and w not in out:
                    rel = self.rel[(u, w)]
                    out[w] = frozenset(b for b in doms[w] if any((c, b) in rel for c in out[u]))
                    stack.append(w)
        return out

    def build(self, comp: FrozenSet[str], doms: Mapping[str, FrozenSet[int]], cont: int) -> int:
        key = (comp, tuple(sorted((v, doms[v]) for v in comp)), cont)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        z = self.centroid(comp)
        subs = self.split(comp, z)
        children = []
        for a in range(self.d):
            if a not in doms[z]:
                children.append(FALSE)
                continue
            local = self.filter(comp, doms, z, a)
            if any(not local[v] for v in comp):
                children.append(FALSE)
                continue
            c = cont
            for sub in reversed(subs):
                c = self.build(sub, local, c)
            children.append(c)
        node = self.b.add(z, children)
        self.memo[key] = node
        return node


def compile_odd(f: Formula, tree: Optional[StructureTree] = None, check: bool = True) -> DecisionDiagram:
    """ODD by centroid recursion along a structure forest."""
    if tree is None:
        tree = tree_structure(f)
    comp = _OddCompiler(tree, f.domain)
    doms = {v: frozenset(t[0] for t in r.tuples) for v, r in tree.domains}
    forest = _forest(comp, tree)
    order: List[str] = []
    for c in forest:
        order += comp.order(c)
    if any(not doms[v] for v in tree.variables):
        dd = comp.b.build(FALSE, f.variables, ODD, order)
    else:
        node = TRUE
        for c in reversed(forest):
            node = comp.build(c, doms, node)
        dd = comp.b.build(node, f.variables, ODD, order)
    if check:
        bad = validate(dd)
        assert bad is None, f"compiled ODD is invalid: {bad}"
        assert size(dd) <= odd_bound(f.n, f.domain.size) + 1e-9, "ODD size bound violated"
    return dd


def _forest(comp: _OddCompiler, tree: StructureTree) -> List[FrozenSet[str]]:
    rest = set(tree.variables)
    out = []
    while rest:
        start = min(rest, key=comp.rank.get)
        seen, stack = {start}, [start]
        while stack:
            u = stack.pop()
            for w in comp.adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        rest -= seen
        out.append(frozenset(seen))
    return out


# FDD compilation (Algorithm 1) ------------------------------------------------------------

class _FddCompiler:
    def __init__(self, f: Formula):
        self.f = f
        self.views = Views(f)
        self.b = DiagramBuilder(f.domain)
        self.d = f.domain.size
        self.memo: Dict[tuple, int] = {}

    def build(self, doms: Optional[Doms], keep: Tuple[int, ...], cont: int) -> int:
        if doms is None:
            return FALSE
        if not keep:
            return cont
        key = (doms, keep, cont)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        try:
            factors = self.views.factors(doms, keep)
        except _NotProperView as e:
            names = self.f.variables
            raise Misclassified(f"selection matrix of ({names[e.i]}, {names[e.j]}) is not proper") from None
        except _NotTransitive as e:
            names = self.f.variables
            raise Misclassified(f"{names[e.i]!r} and {names[e.j]!r} share a factor without a block split") from None
        c = cont
        for part in reversed(factors):
            c = self.factor(doms, part, c)
        self.memo[key] = c
        return c

    def factor(self, doms: Doms, part: List[int], cont: int) -> int:
        x = part[0]
        live = doms[x]
        if len(part) == 1:
            return self.b.add(self.f.variables[x], [cont if (live >> a) & 1 else FALSE for a in range(self.d)])
        rest = tuple(part[1:])
        children = []
        for a in range(self.d):
            if not (live >> a) & 1:
                children.append(FALSE)
                continue
            child = self.views.pin(doms, x, 1 << a)
            if child is not None and not any(child[i] != doms[i] for i in rest):
                raise Misclassified(f"branching {self.f.variables[x]!r} on an indecomposable factor shrinks no domain")
            children.append(self.build(child, rest, cont))
        return self.b.add(self.f.variables[x], children)


def compile_fdd(f: Formula, check: bool = True) -> DecisionDiagram:
    """FDD by Algorithm 1: split into factors, branch on the first variable of each, recurse."""
    comp = _FddCompiler(f)
    node = comp.build(comp.views.top(), tuple(range(f.n)), TRUE)
    dd = comp.b.build(node, f.variables, FDD)
    if check:
        bad = validate(dd)
        assert bad is None, f"compiled FDD is invalid: {bad}"
        assert size(dd) <= fdd_bound(f.n, f.domain.size), "FDD size bound violated"
    return dd


# baseline ----------------------------------------------------------------------

def compile_obdd_baseline(f: Formula, order: Optional[Sequence[str]] = None,
                          node_limit: int = 2_000_000) -> DecisionDiagram:
    """Layered Shannon expansion keyed by residual constraints, then reduction."""
    order = tuple(order) if order is not None else f.variables
    if sorted(order) != sorted(f.variables):
        raise ValueError("order must list every formula variable once")
    rank = {v: k for k, v in enumerate(order)}
    cons = []
    for c in f.constraints:
        perm = sorted(range(c.arity), key=lambda k: rank[c.scope[k]])
        cons.append((tuple(rank[c.scope[k]] for k in perm), frozenset(tuple(t[k] for k in perm) for t in c.tuples)))
    # a residual is the tuple of remaining suffixes of each constraint
    start = tuple(tuples for _, tuples in cons)
    b = DiagramBuilder(f.domain, unique=True)
    if any(not tuples for tuples in start):
        return reduce(b.build(FALSE, f.variables, ODD, order))
    # constraints whose next scope position is read at each level
    touch: List[List[int]] = [[] for _ in order]
    for k, (scope, _) in enumerate(cons):
        for level in scope:
            touch[level].append(k)
    d = f.domain.size
    levels: List[Dict[tuple, int]] = []
    # forward pass: discover reachable residuals level by level
    current = {start}
    for level in range(len(order)):
        nxt = set()
        table: Dict[tuple, Tuple[tuple, ...]] = {}
        for res in current:
            kids = []
            for a in range(d):
                child = _advance(res, touch[level], a)
                kids.append(child)
                if child is not None:
                    nxt.add(child)
            table[res] = tuple(kids)
        levels.append(table)
        if sum(len(t) for t in levels) > node_limit:
            raise RuntimeError("baseline node limit exceeded")
        current = nxt
    # backward pass: build nodes bottom-up
    ids: Dict[tuple, int] = {res: TRUE for res in current}
    for level in range(len(order) - 1, -1, -1):
        new_ids: Dict[tuple, int] = {}
        for res, kids in levels[level].items():
            new_ids[res] = b.add(order[level], [FALSE if k is None else ids[k] for k in kids])
        ids = new_ids
    source = ids[start] if order else TRUE
    return reduce(b.build(source, f.variables, ODD, order))


def _advance(res: tuple, touched: Sequence[int], a: int) -> Optional[tuple]:
    if not touched:
        return res
    out = list(res)
    for k in touched:
        rest = frozenset(t[1:] for t in res[k] if t[0] == a)
        if not rest:
            return None
        out[k] = rest
    return tuple(out)


# oracle checks ----------------------------------------------------------------------

@dataclass(frozen=True)
class Agreement:
    ok: bool
    mode: str                        # "exhaustive" or "sampled"
    checked: int
    counterexample: Optional[Dict[str, object]] = None


def check_agreement(f: Formula, accept_rows, exhaustive_limit: int = 10 ** 6,
                    samples: int = 10 ** 4, seed: int = 0) -> Agreement:
    """Compare a vectorised acceptor against the formula on all (or sampled) assignments."""
    d, n = f.domain.size, f.n
    if d ** n <= exhaustive_limit:
        rows, mode = all_assignments(n, d), "exhaustive"
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        rows, mode = rng.integers(0, d, size=(samples, n)), "sampled"
    want = formula_rows(f, rows)
    got = np.asarray(accept_rows(rows), dtype=bool)
    bad = np.flatnonzero(want != got)
    if bad.size:
        row = rows[bad[0]]
        ce = {v: f.domain.elements[int(a)] for v, a in zip(f.variables, row)}
        return Agreement(False, mode, len(rows), ce)
    return Agreement(True, mode, len(rows))


def diagram_agrees(f: Formula, dd: DecisionDiagram, **kw) -> Agreement:
    return check_agreement(f, lambda rows: diagram_rows(dd, rows, f.variables), **kw)
