"""Co-clone machinery and the language classifier.

Membership uses the indicator instance: its variables are the
m-sequences over the domain, one constraint per relation S of the
language and per choice of m tuples of S.  Its solutions are exactly
the m-ary polymorphisms, so a relation with m tuples is pp-definable
iff every solution maps its columns back into it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .blockstruct import (NotProper, binarization, first_failure, pattern_blocks, relation_constraint)
from .core import Constraint, Domain, DomainError, Formula, Relation, Solver, parse_instance, project

UNIFORM_ODD = "UNIFORM_ODD"
NONUNIFORM_FDD = "NONUNIFORM_FDD"
HARD = "HARD"
UNKNOWN_BUDGET = "UNKNOWN_BUDGET"

BLOCKWISE = "BLOCKWISE"
UNIFORM = "UNIFORM"

EXACT = "EXACT"
LOWER_BOUND_ONLY = "LOWER_BOUND_ONLY"


class BudgetExceeded(RuntimeError):
    pass


# languages and pp-formulas ----------------------------------------------------------------

@dataclass(frozen=True)
class Language:
    domain: Domain
    relations: Tuple[Tuple[str, Relation], ...]

    def __post_init__(self):
        for name, r in self.relations:
            if r.domain != self.domain:
                raise DomainError(f"relation {name!r} is over another domain")

    @classmethod
    def of(cls, relations: Mapping[str, Relation], domain: Optional[Domain] = None) -> "Language":
        items = tuple(relations.items())
        if domain is None:
            if not items:
                raise ValueError("an empty language needs an explicit domain")
            domain = items[0][1].domain
        return cls(domain, items)

    @classmethod
    def parse(cls, text: str) -> "Language":
        domain, _, relations, _ = parse_instance(text)
        return cls(domain, tuple(relations.items()))

    def names(self) -> List[str]:
        return [n for n, _ in self.relations]

    def members(self) -> List[Relation]:
        return [r for _, r in self.relations]

    def __iter__(self):
        return iter(self.relations)

    def __len__(self) -> int:
        return len(self.relations)


@dataclass(frozen=True)
class PpFormula:
    """Existential projection of a conjunction; ``base`` may use equality constraints."""

    base: Formula
    output_scope: Tuple[str, ...]

    def relation(self) -> Relation:
        c = project(self.base.as_constraint(), self.output_scope)
        return c.reorder(self.output_scope).relation if self.output_scope else c.relation

    def describe(self, names: Mapping[Relation, str]) -> str:
        atoms = [f"{names.get(c.relation, 'R')}({', '.join(c.scope)})" for c in self.base.constraints]
        hidden = [v for v in self.base.variables if v not in self.output_scope]
        body = " & ".join(atoms) if atoms else "true"
        return (f"exists {' '.join(hidden)}. " if hidden else "") + body


# membership ----------------------------------------------------------------------

class Indicator:
    """The indicator instance of a language for m rows."""

    def __init__(self, g: Language, m: int, budget_vars: int = 200_000, budget_constraints: int = 200_000):
        d = g.domain.size
        n_vars = d ** m
        if n_vars > budget_vars:
            raise BudgetExceeded(f"{n_vars} indicator variables exceed the budget {budget_vars}")
        n_cons = sum(len(r) ** m for r in g.members() if r.arity > 0 and not r.is_full())
        if n_cons > budget_constraints:
            raise BudgetExceeded(f"{n_cons} indicator constraints exceed the budget {budget_constraints}")
        self.g, self.m, self.d = g, m, d
        self.columns = list(itertools.product(range(d), repeat=m))
        self.index = {c: k for k, c in enumerate(self.columns)}
        names = tuple(f"c{k}" for k in range(n_vars))
        cons = []
        for r in g.members():
            if r.arity == 0 or r.is_full():
                continue
            rows = r.sorted_tuples()
            for choice in itertools.product(rows, repeat=m):
                scope = tuple(names[self.index[tuple(t[j] for t in choice)]] for j in range(r.arity))
                cons.append(Constraint(scope, r))
        self.formula = Formula(g.domain, names, tuple(cons))
        self.solver = Solver(self.formula)
        self.names = names

    def variable(self, column: Sequence[int]) -> int:
        return self.index[tuple(column)]

    def image_can_leave(self, r: Relation) -> Optional[Tuple[int, ...]]:
        """A tuple outside r that some polymorphism maps r's columns to, or None."""
        hit = self._leave(r, False)
        return None if hit is None else hit[0]

    def leaving_polymorphism(self, r: Relation) -> Optional[np.ndarray]:
        """An m-ary polymorphism (value per column, in ``columns`` order) not preserving r."""
        hit = self._leave(r, True)
        return None if hit is None else hit[1]

    def _leave(self, r: Relation, want_table: bool):
        rows = r.sorted_tuples()
        if len(rows) != self.m:
            raise ValueError("indicator row count must equal the relation size")
        cols = [self.variable([t[j] for t in rows]) for j in range(r.arity)]
        seen = set()
        for t in itertools.product(range(self.d), repeat=r.arity):
            if t in r.tuples:
                continue
            pins: Dict[int, int] = {}
            ok = True
            for v, a in zip(cols, t):
                if pins.setdefault(v, a) != a:
                    ok = False
                    break
            if not ok:
                continue
            key = tuple(sorted(pins.items()))
            if key in seen:
                continue
            seen.add(key)
            doms = self.solver.initial({self.names[v]: (a,) for v, a in pins.items()})
            if not want_table:
                if self.solver.satisfiable(doms):
                    return t, None
                continue
            sol = self.solver.find(doms)
            if sol is not None:
                return t, np.array(sol, dtype=np.int64)
        return None


def _preserves(table: np.ndarray, m: int, d: int, r: Relation, samples: int = 4096,
               rng: Optional[np.random.Generator] = None) -> bool:
    """Whether the m-ary operation ``table`` maps every m rows of r back into r.

    Exhaustive when |r|^m <= samples, else a pseudo-random subset (so True is only a guess).
    """
    rows = np.array(r.sorted_tuples(), dtype=np.int64)
    n = len(rows)
    if n ** m <= samples:
        picks = np.array(list(itertools.product(range(n), repeat=m)), dtype=np.int64).reshape(-1, m)
    else:
        rng = rng or np.random.default_rng(0)
        picks = rng.integers(0, n, size=(samples, m))
    weights = d ** np.arange(m - 1, -1, -1, dtype=np.int64)
    # cols[s, j]: column index of the m chosen rows read at position j
    cols = np.einsum("smj,m->sj", rows[picks], weights)
    image = table[cols]
    inside = np.zeros((d,) * r.arity, dtype=bool)
    inside[tuple(rows.T)] = True
    return bool(inside[tuple(image.T)].all())


def _common_constant(g: Language) -> bool:
    """Some value a with (a, ..., a) in every relation (then no pp-formula is unsatisfiable)."""
    for a in range(g.domain.size):
        if all((a,) * r.arity in r.tuples for r in g.members()):
            return True
    return False


def coclone_member(r: Relation, g: Language, budget_vars: int = 200_000,
                   budget_constraints: int = 200_000) -> bool:
    """True iff r is pp-definable over g (with equality)."""
    if r.domain != g.domain:
        raise DomainError("relation and language use different domains")
    if not r.tuples:
        return not _common_constant(g)
    if r.arity == 0 or r.is_full():
        return True
    ind = Indicator(g, len(r), budget_vars, budget_constraints)
    return ind.image_can_leave(r) is None


# Boolean polymorphisms ----------------------------------------------------------------------

_POLY_ARITY = 3          # enough for every non-full Boolean relation of arity <= 2


@lru_cache(maxsize=None)
def _function_table(arity: int) -> np.ndarray:
    """Row f holds the values of the f-th Boolean function of ``arity`` arguments."""
    n_in = 1 << arity
    fs = np.arange(1 << n_in, dtype=np.int64)
    return ((fs[:, None] >> np.arange(n_in)[None, :]) & 1).astype(np.int64)


@lru_cache(maxsize=None)
def _preserved_by(r: Relation) -> np.ndarray:
    """Boolean mask over all ternary Boolean functions: which ones preserve r."""
    table = _function_table(_POLY_ARITY)
    n_funcs = table.shape[0]
    if r.arity == 0 or not r.tuples or r.is_full():
        return np.ones(n_funcs, dtype=bool)
    rows = np.array(r.sorted_tuples(), dtype=np.int64)
    lookup = np.zeros(1 << r.arity, dtype=bool)
    weights = 1 << np.arange(r.arity - 1, -1, -1)
    lookup[rows @ weights] = True
    choice = np.array(list(itertools.product(range(len(rows)), repeat=_POLY_ARITY)), dtype=np.int64)
    # column j of a choice is the input vector (t1[j], t2[j], t3[j]), read with t1 as bit 0
    cols = np.zeros((len(choice), r.arity), dtype=np.int64)
    for i in range(_POLY_ARITY):
        cols += rows[choice[:, i]] << i
    cols = np.unique(cols, axis=0)
    ok = np.ones(n_funcs, dtype=bool)
    for start in range(0, len(cols), 256):
        chunk = cols[start:start + 256]
        code = np.zeros((n_funcs, len(chunk)), dtype=np.int64)
        for j in range(r.arity):
            code = (code << 1) | table[:, chunk[:, j]]
        ok &= lookup[code].all(axis=1)
    return ok


def _boolean_candidates(domain: Domain) -> List[Relation]:
    out = []
    for k in (1, 2):
        allt = list(itertools.product(range(2), repeat=k))
        for mask in range(1 << len(allt)):
            out.append(Relation(domain, k, frozenset(t for i, t in enumerate(allt) if mask >> i & 1)))
    return out


# Pi_2 ----------------------------------------------------------------------

@dataclass(frozen=True)
class Pi2Result:
    domain: Domain
    relations: Tuple[Relation, ...]          # arity 1 and 2, sorted canonically
    status: str                              # EXACT or LOWER_BOUND_ONLY
    fixed_point: bool
    method: str
    notes: Tuple[str, ...] = ()

    @property
    def language(self) -> Language:
        return Language(self.domain, tuple((relation_name(r), r) for r in self.relations))

    def binary(self) -> List[Relation]:
        return [r for r in self.relations if r.arity == 2]

    def unary(self) -> List[Relation]:
        return [r for r in self.relations if r.arity == 1]

    def key(self) -> FrozenSet[Relation]:
        return frozenset(self.relations)


def relation_name(r: Relation) -> str:
    d = r.domain
    if r.arity == 2:
        if r.is_full():
            return "FULL2"
        if r == Relation.equality(d):
            return "EQ"
        if r == Relation.disequality(d):
            return "NEQ"
    if r.arity == 1 and r.is_full():
        return "FULL1"
    body = ",".join("".join(str(v) for v in t) for t in r.values())
    return f"R{r.arity}[{body}]"


def _sort_key(r: Relation):
    return (r.arity, len(r), r.sorted_tuples())


def _finish(domain: Domain, rels: Iterable[Relation], status: str, fixed: bool, method: str,
            notes: Sequence[str] = ()) -> Pi2Result:
    rels = set(rels) | {Relation.full(domain, 1), Relation.full(domain, 2), Relation.equality(domain)}
    return Pi2Result(domain, tuple(sorted(rels, key=_sort_key)), status, fixed, method, tuple(notes))


def pi2_polymorphisms(g: Language) -> Pi2Result:
    """Exact Pi_2 of a Boolean language from its ternary polymorphisms."""
    if g.domain.size != 2:
        raise DomainError("the polymorphism route needs a two-element domain")
    pol = np.ones(_function_table(_POLY_ARITY).shape[0], dtype=bool)
    for r in g.members():
        pol &= _preserved_by(_canonical_bool(r))
    has_empty = not _common_constant(g)
    out = []
    for cand in _boolean_candidates(g.domain):
        if not cand.tuples:
            if has_empty:
                out.append(cand)
        elif not (pol & ~_preserved_by(_canonical_bool(cand))).any():
            out.append(cand)
    return _finish(g.domain, out, EXACT, True, "polymorphisms")


_BOOL = Domain((0, 1))


def _canonical_bool(r: Relation) -> Relation:
    """Same relation over the canonical domain (0, 1), so the cache is shared across value names."""
    return Relation(_BOOL, r.arity, r.tuples)


class _Saturation:
    """Closure of a set of atoms under minors into ``bound`` coordinates, intersection and projection."""

    def __init__(self, domain: Domain, bound: int, closure_budget: int):
        self.d = domain.size
        self.domain = domain
        self.bound = bound
        self.budget = closure_budget
        self.digits = np.array(list(itertools.product(range(self.d), repeat=bound)), dtype=np.int64)
        self.atoms: Dict[Tuple[int, bytes], np.ndarray] = {}
        self.gens: List[int] = []
        self.gen_set = set()
        self.closed: set = set()
        self.projected: set = set()
        self.proj: Dict[Tuple[int, bytes], np.ndarray] = {}

    def _bits(self, mask: np.ndarray) -> int:
        return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")

    def _unbits(self, x: int) -> np.ndarray:
        n = self.d ** self.bound
        raw = np.frombuffer(x.to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[:n].astype(bool)

    def add_atom(self, table: np.ndarray) -> bool:
        table = np.asarray(table, dtype=bool)
        key = (table.ndim, table.tobytes())
        if key in self.atoms:
            return False
        self.atoms[key] = table
        k = table.ndim
        flat = table.reshape(-1)
        for phi in itertools.product(range(self.bound), repeat=k):
            idx = np.zeros(len(self.digits), dtype=np.int64)
            for j in phi:
                idx = idx * self.d + self.digits[:, j]
            g = self._bits(flat[idx])
            if g not in self.gen_set:
                self.gen_set.add(g)
                self.gens.append(g)
        return True

    def close(self) -> bool:
        """Intersection closure of the generators; False if the budget is exhausted."""
        new_gens = [g for g in self.gens if g not in self.closed]
        fresh = set(new_gens)
        old = [x for x in self.closed if x not in fresh]
        self.closed.update(fresh)
        if self.d ** self.bound <= 64:
            return self._close_packed(old, new_gens)
        pending = list(new_gens)
        for x in old:
            for g in new_gens:
                y = x & g
                if y not in self.closed:
                    self.closed.add(y)
                    pending.append(y)
        while pending:
            x = pending.pop()
            for g in self.gens:
                y = x & g
                if y not in self.closed:
                    self.closed.add(y)
                    pending.append(y)
                    if len(self.closed) > self.budget:
                        return False
        return True

    def _close_packed(self, old: List[int], new_gens: List[int]) -> bool:
        # same closure with every table packed into one uint64
        closed = np.array(sorted(self.closed), dtype=np.uint64)
        gens = np.array(self.gens, dtype=np.uint64)
        first = np.array(new_gens, dtype=np.uint64)
        if old:
            pairs = (np.array(old, dtype=np.uint64)[:, None] & np.array(new_gens, dtype=np.uint64)[None, :]).ravel()
            first = np.union1d(first, np.setdiff1d(pairs, closed))
            closed = np.union1d(closed, first)
        pending = first
        while pending.size:
            prod = np.unique((pending[:, None] & gens[None, :]).ravel())
            pending = np.setdiff1d(prod, closed, assume_unique=True)
            closed = np.union1d(closed, pending)
            if closed.size > self.budget:
                self.closed = set(int(x) for x in closed)
                return False
        self.closed = set(int(x) for x in closed)
        return True

    def projections(self, max_arity: int) -> List[np.ndarray]:
        todo = [x for x in self.closed if x not in self.projected]
        self.projected.update(todo)
        n = self.d ** self.bound
        for lo in range(0, len(todo), 4096):
            chunk = todo[lo:lo + 4096]
            if n <= 64:
                vals = np.array(chunk, dtype=np.uint64)
                flat = ((vals[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(bool)
            else:
                flat = np.stack([self._unbits(x) for x in chunk])
            cubes = flat.reshape((len(chunk),) + (self.d,) * self.bound)
            for k in range(1, max_arity + 1):
                for keep in itertools.combinations(range(self.bound), k):
                    drop = tuple(i + 1 for i in range(self.bound) if i not in keep)
                    ts = cubes.any(axis=drop) if drop else cubes
                    for t in np.unique(ts.reshape(len(chunk), -1), axis=0):
                        t = t.reshape((self.d,) * k)
                        self.proj.setdefault((k, t.tobytes()), t)
        return [t for (k, _), t in self.proj.items() if k <= max_arity]


def _table(r: Relation) -> np.ndarray:
    t = np.zeros((r.domain.size,) * r.arity, dtype=bool)
    for tup in r.tuples:
        t[tup] = True
    return t


def _relation(domain: Domain, table: np.ndarray) -> Relation:
    return Relation(domain, table.ndim, frozenset(tuple(int(a) for a in idx) for idx in np.argwhere(table)))


def pi2_saturation(g: Language, aux_arity_bound: int = 4, closure_budget: int = 200_000,
                   max_rounds: int = 20) -> Tuple[List[Relation], bool]:
    """Sound lower bound for Pi_2 and whether a fixed point was reached."""
    if aux_arity_bound < 2:
        raise ValueError("aux_arity_bound must be at least 2")
    sat = _Saturation(g.domain, aux_arity_bound, closure_budget)
    sat.add_atom(_table(Relation.equality(g.domain)))
    sat.add_atom(_table(Relation.full(g.domain, 1)))
    for r in g.members():
        if r.arity <= aux_arity_bound:
            sat.add_atom(_table(r))
        else:
            c = relation_constraint(r)
            for keep in itertools.combinations(c.scope, aux_arity_bound):
                sat.add_atom(_table(project(c, keep).relation))
    fixed = False
    for _ in range(max_rounds):
        if not sat.close():
            break
        grew = False
        for t in sat.projections(aux_arity_bound - 1):
            grew |= sat.add_atom(t)
        if not grew:
            fixed = True
            break
    rels = [_relation(g.domain, t) for t in sat.projections(2)]
    return rels, fixed


def pi2_closure(g: Language, aux_arity_bound: int = 4, method: str = "auto",
                closure_budget: int = 200_000, budget_vars: int = 200_000,
                budget_constraints: int = 200_000, max_candidates: int = 1024) -> Pi2Result:
    """All pp-definable relations of arity at most two.

    Over {0,1} the polymorphism route is exact.  Otherwise saturation
    gives a sound set; it is certified exact when indicator membership
    rules out every other candidate within budget.
    """
    if method == "auto":
        method = "polymorphisms" if g.domain.size == 2 else "saturation"
    if method == "polymorphisms":
        return pi2_polymorphisms(g)
    if method != "saturation":
        raise ValueError(f"unknown method {method!r}")
    rels, fixed = pi2_saturation(g, aux_arity_bound, closure_budget)
    found = set(rels)
    notes = []
    d = g.domain.size
    n_candidates = 2 ** d + 2 ** (d * d)
    if not fixed:
        notes.append("saturation stopped before a fixed point")
        return _finish(g.domain, found, LOWER_BOUND_ONLY, False, "saturation", notes)
    if n_candidates > max_candidates:
        notes.append(f"{n_candidates} candidates exceed the certification limit {max_candidates}")
        return _finish(g.domain, found, LOWER_BOUND_ONLY, True, "saturation", notes)
    certified = True
    indicators: Dict[int, Optional[Indicator]] = {}
    has_empty = not _common_constant(g)
    polys: List[Tuple[int, np.ndarray]] = []
    for k in (1, 2):
        for cells in itertools.product((False, True), repeat=d ** k):
            table = np.array(cells, dtype=bool).reshape((d,) * k)
            cand = _relation(g.domain, table)
            if cand in found or cand.is_full():
                continue
            if not cand.tuples:
                if has_empty:
                    found.add(cand)
                continue
            m = len(cand)
            if m not in indicators:
                try:
                    indicators[m] = Indicator(g, m, budget_vars, budget_constraints)
                except BudgetExceeded:
                    indicators[m] = None
            ind = indicators[m]
            if ind is None:
                certified = False
                continue
            if any(not _preserves(f, fm, d, cand) for fm, f in polys):
                continue
            f = ind.leaving_polymorphism(cand)
            if f is not None:
                polys.append((m, f))
            else:
                found.add(cand)
                notes.append(f"membership added {relation_name(cand)} beyond saturation")
    status = EXACT if certified else LOWER_BOUND_ONLY
    if not certified:
        notes.append("some candidates exceed the membership budget")
    return _finish(g.domain, found, status, True, "saturation", notes)


# block structure of binary languages ------------------------------------------------------------

def binary_closure(g2: Iterable[Relation], domain: Domain) -> List[Relation]:
    """Binary relations of g2 with transposes, unary restrictions and pairwise intersections."""
    d = domain.size
    tables = {}
    unary = [r for r in g2 if r.arity == 1]

    def add(t):
        tables.setdefault(t.tobytes(), t)

    add(np.ones((d, d), dtype=bool))
    add(np.eye(d, dtype=bool))
    for r in g2:
        if r.arity == 2:
            add(_table(r))
            add(_table(r).T.copy())
    for u in unary:
        mask = _table(u)
        add(np.outer(mask, np.ones(d, dtype=bool)))
        add(np.outer(np.ones(d, dtype=bool), mask))
    changed = True
    while changed:
        changed = False
        items = list(tables.values())
        for a, b in itertools.product(items, repeat=2):
            for t in (a & b, (a & b).T.copy()):
                key = t.tobytes()
                if key not in tables:
                    tables[key] = t
                    changed = True
    return sorted((_relation(domain, t) for t in tables.values()), key=_sort_key)


@dataclass(frozen=True)
class IncompatibleBlocks:
    r1: Relation
    r2: Relation
    a: Tuple[FrozenSet[int], FrozenSet[int]]      # (A_x, A_z) of r1(x, z)
    b: Tuple[FrozenSet[int], FrozenSet[int]]
    c: Tuple[FrozenSet[int], FrozenSet[int]]      # (C_z, C_y) of r2(z, y)
    e: Tuple[FrozenSet[int], FrozenSet[int]]

    def relation(self) -> Relation:
        """R1(x, z) & R2(z, y) over (x, y, z); never blockwise decomposable."""
        t1, t2 = self.r1.tuples, self.r2.tuples
        d = self.r1.domain.size
        return Relation(self.r1.domain, 3, frozenset(
            (x, y, z) for x in range(d) for y in range(d) for z in range(d)
            if (x, z) in t1 and (z, y) in t2))


def _blocks(r: Relation):
    res = pattern_blocks(_table(r))
    if isinstance(res, NotProper):
        return None
    return [(frozenset(rows), frozenset(cols)) for rows, cols in res]


def has_incompatible_block_structure(g2: Iterable[Relation],
                                     domain: Optional[Domain] = None) -> Optional[IncompatibleBlocks]:
    rels = [r for r in g2 if r.arity == 2]
    if any(r.arity > 2 for r in g2):
        raise ValueError("g2 may only contain relations of arity at most two")
    pool = []
    for r in rels:
        for s in (r, r.transpose()):
            if s not in pool:
                pool.append(s)
    blocks = {r: _blocks(r) for r in pool}
    for r1 in pool:
        b1 = blocks[r1]
        if not b1 or len(b1) < 2:
            continue
        for r2 in pool:
            b2 = blocks[r2]
            if not b2 or len(b2) < 2:
                continue
            for (ax, az), (bx, bz) in itertools.permutations(b1, 2):
                for (cz, cy), (dz, dy) in itertools.permutations(b2, 2):
                    if az & cz and az & dz and bz & cz and bz & dz:
                        return IncompatibleBlocks(r1, r2, (ax, az), (bx, bz), (cz, cy), (dz, dy))
    return None


@dataclass(frozen=True)
class SweepFailure:
    r_xy: Relation
    r_xz: Relation
    r_yz: Relation
    relation: Relation                     # over (x, y, z)
    detail: object = field(compare=False, default=None)

    def describe(self) -> str:
        return f"{relation_name(self.r_xy)}(x,y) & {relation_name(self.r_xz)}(x,z) & {relation_name(self.r_yz)}(y,z)"


def ternary_conjunction_sweep(g2: Iterable[Relation], mode: str, domain: Optional[Domain] = None,
                              cache: Optional[Dict] = None) -> Optional[SweepFailure]:
    """First triple R_xy(x,y) & R_xz(x,z) & R_yz(y,z) failing the decomposability mode, else None."""
    g2 = list(g2)
    if domain is None:
        if not g2:
            raise ValueError("cannot infer the domain of an empty language")
        domain = g2[0].domain
    if mode not in (BLOCKWISE, UNIFORM):
        raise ValueError(f"unknown mode {mode!r}")
    closure = binary_closure(g2, domain)
    tables = [_table(r) for r in closure]
    verdicts: Dict[bytes, Optional[object]] = {} if cache is None else cache.setdefault(mode, {})
    for i, j, k in itertools.product(range(len(closure)), repeat=3):
        t = tables[i][:, :, None] & tables[j][:, None, :] & tables[k][None, :, :]
        key = (domain.size, t.tobytes())
        if key not in verdicts:
            c = Constraint(("x", "y", "z"), _relation(domain, t))
            verdicts[key] = first_failure(c, uniform=(mode == UNIFORM))
        bad = verdicts[key]
        if bad is not None:
            return SweepFailure(closure[i], closure[j], closure[k], _relation(domain, t), bad)
    return None


# classification ----------------------------------------------------------------------

@dataclass(frozen=True)
class LanguageClass:
    verdict: str
    witness: Optional[dict]
    g2: Optional[Pi2Result]
    evidence: Tuple[str, ...] = ()

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "witness": self.witness, "evidence": list(self.evidence)}
        if self.g2 is not None:
            out["g2"] = {
                "status": self.g2.status, "fixed_point": self.g2.fixed_point, "method": self.g2.method,
                "relations": [{"name": relation_name(r), "arity": r.arity,
                               "tuples": [list(t) for t in r.values()]} for r in self.g2.relations],
                "notes": list(self.g2.notes),
            }
        return out


def _rel_json(r: Relation) -> dict:
    return {"arity": r.arity, "tuples": [list(t) for t in r.values()]}


def _failure_json(v) -> dict:
    return v.to_json() if hasattr(v, "to_json") else {"detail": str(v)}


class Classifier:
    """Classifier with caches shared across many languages (used by the Boolean sweep)."""

    def __init__(self, aux_arity_bound: int = 4, closure_budget: int = 200_000,
                 budget_vars: int = 200_000, budget_constraints: int = 200_000):
        self.kw = dict(aux_arity_bound=aux_arity_bound, closure_budget=closure_budget,
                       budget_vars=budget_vars, budget_constraints=budget_constraints)
        self._bd: Dict[Relation, object] = {}
        self._bin: Dict[Relation, bool] = {}
        self._g2: Dict[frozenset, tuple] = {}
        self._sweep_cache: Dict = {}

    def _bd_failure(self, r: Relation):
        if r not in self._bd:
            self._bd[r] = first_failure(relation_constraint(r)) if r.arity >= 2 else None
        return self._bd[r]

    def _binarize_ok(self, r: Relation) -> bool:
        if r not in self._bin:
            c = relation_constraint(r)
            self._bin[r] = r.arity <= 2 or binarization(c).relation == c.relation
        return self._bin[r]

    def classify(self, g: Language) -> LanguageClass:
        evidence = []
        # every generator is itself in the co-clone, so it must be blockwise decomposable
        for name, r in g:
            bad = self._bd_failure(r)
            if bad is not None:
                return LanguageClass(HARD, {"kind": "generator_not_blockwise", "relation": name,
                                            "tuples": _rel_json(r), "pp_definition": f"{name}(x0..x{r.arity - 1})",
                                            "failure": _failure_json(bad)}, None, tuple(evidence))
        evidence.append("every generator is blockwise decomposable")
        g2 = pi2_closure(g, **self.kw)
        evidence.append(f"Pi2 via {g2.method}: {len(g2.relations)} relations, {g2.status}")
        for name, r in g:
            if not self._binarize_ok(r):
                return LanguageClass(HARD, {"kind": "not_in_binary_coclone", "relation": name,
                                            "tuples": _rel_json(r)}, g2, tuple(evidence))
        evidence.append("every generator equals the conjunction of its binary projections")
        key = g2.key()
        if key not in self._g2:
            self._g2[key] = self._binary_verdict(g2)
        verdict, witness, more = self._g2[key]
        if verdict == HARD or g2.fixed_point:
            return LanguageClass(verdict, witness, g2, tuple(evidence + more))
        return LanguageClass(UNKNOWN_BUDGET, witness, g2, tuple(evidence + more + ["no fixed point"]))

    def _binary_verdict(self, g2: Pi2Result):
        more = []
        for r in g2.binary():
            if _blocks(r) is None:
                return HARD, {"kind": "binary_not_proper", "tuples": _rel_json(r),
                              "name": relation_name(r)}, more
        closure = binary_closure(g2.relations, g2.domain)
        inc = has_incompatible_block_structure(closure, g2.domain)
        if inc is not None:
            t = inc.relation()
            fail = ternary_conjunction_sweep(g2.relations, BLOCKWISE, g2.domain, self._sweep_cache)
            return HARD, {"kind": "incompatible_blocks",
                          "r1": relation_name(inc.r1), "r2": relation_name(inc.r2),
                          "blocks": [[sorted(s) for s in blk] for blk in (inc.a, inc.b, inc.c, inc.e)],
                          "relation": _rel_json(t), "pp_definition": "R1(x,z) & R2(z,y)",
                          "sweep": fail.describe() if fail else None}, more
        more.append("no incompatible block structure")
        fail = ternary_conjunction_sweep(g2.relations, UNIFORM, g2.domain, self._sweep_cache)
        if fail is None:
            more.append("every ternary conjunction is uniformly blockwise decomposable")
            return UNIFORM_ODD, None, more
        return NONUNIFORM_FDD, {"kind": "ternary_not_uniform", "pp_definition": fail.describe(),
                                "relation": _rel_json(fail.relation),
                                "failure": _failure_json(fail.detail)}, more


def classify_language(g: Language, **kw) -> LanguageClass:
    return Classifier(**kw).classify(g)


def is_bijunctive_affine(r: Relation) -> bool:
    """r is the solution set of a conjunction of =, !=, and constants over its columns."""
    if r.domain.size != 2:
        raise DomainError("bijunctive affine relations live on a two-element domain")
    k = r.arity
    tuples = r.tuples
    allowed_pairs = {}
    for i, j in itertools.combinations(range(k), 2):
        allowed_pairs[(i, j)] = [rel for rel in ("eq", "neq")
                                 if all((t[i] == t[j]) == (rel == "eq") for t in tuples)]
    unary = {i: [a for a in (0, 1) if all(t[i] == a for t in tuples)] for i in range(k)}
    sols = set()
    for t in itertools.product((0, 1), repeat=k):
        if any(t[i] != a for i, vals in unary.items() for a in vals):
            continue
        if any((t[i] == t[j]) != (rel == "eq") for (i, j), rels in allowed_pairs.items() for rel in rels):
            continue
        sols.add(t)
    return sols == set(tuples)
