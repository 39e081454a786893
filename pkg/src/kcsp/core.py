"""Finite-domain relations, constraints and CSP instances.

Domain values are opaque hashable symbols.  Internally every value is
replaced by its position in the domain, so relations store tuples of
small integers.  All objects are immutable.

The module also hosts the exact oracles used to validate everything
else: a propagating backtracking search (satisfiability, enumeration),
a component-splitting model counter, and a vectorised brute-force
evaluator over all assignments.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Hashable, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

Value = Hashable
Assignment = Dict[str, Value]
IndexTuple = Tuple[int, ...]


class DomainError(ValueError):
    """Raised when objects over different domains are combined."""


class ScopeError(ValueError):
    """Raised on unknown or invalid variables."""


class FormatError(ValueError):
    """Raised by the text instance parser."""


@dataclass(frozen=True)
class Domain:
    elements: Tuple[Value, ...]
    _index: Dict[Value, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise DomainError("a domain needs at least one element")
        if len(set(elements)) != len(elements):
            raise DomainError(f"repeated domain elements in {elements!r}")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(elements)})

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def size(self) -> int:
        return len(self.elements)

    def index(self, value: Value) -> int:
        try:
            return self._index[value]
        except KeyError:
            raise DomainError(f"{value!r} is not in the domain {self.elements!r}") from None

    def value(self, i: int) -> Value:
        return self.elements[i]

    def indices(self, values: Iterable[Value]) -> FrozenSet[int]:
        return frozenset(self.index(v) for v in values)

    def __repr__(self) -> str:
        return f"Domain({list(self.elements)!r})"


@dataclass(frozen=True)
class Relation:
    """A set of ``arity``-tuples of domain indices."""

    domain: Domain
    arity: int
    tuples: FrozenSet[IndexTuple]

    def __post_init__(self):
        tuples = frozenset(tuple(t) for t in self.tuples)
        d = self.domain.size
        for t in tuples:
            if len(t) != self.arity:
                raise ValueError(f"tuple {t} does not have arity {self.arity}")
            if any(not 0 <= v < d for v in t):
                raise DomainError(f"tuple {t} leaves the domain")
        object.__setattr__(self, "tuples", tuples)

    # constructors -----------------------------------------------------
    @classmethod
    def from_values(cls, domain: Domain, tuples: Iterable[Sequence[Value]],
                    arity: Optional[int] = None) -> "Relation":
        rows = [tuple(domain.index(v) for v in t) for t in tuples]
        if arity is None:
            if not rows:
                raise ValueError("arity is required for an empty relation")
            arity = len(rows[0])
        return cls(domain, arity, frozenset(rows))

    @classmethod
    def full(cls, domain: Domain, arity: int) -> "Relation":
        return cls(domain, arity, frozenset(itertools.product(range(domain.size), repeat=arity)))

    @classmethod
    def empty(cls, domain: Domain, arity: int) -> "Relation":
        return cls(domain, arity, frozenset())

    @classmethod
    def equality(cls, domain: Domain) -> "Relation":
        return cls(domain, 2, frozenset((a, a) for a in range(domain.size)))

    @classmethod
    def disequality(cls, domain: Domain) -> "Relation":
        d = domain.size
        return cls(domain, 2, frozenset((a, b) for a in range(d) for b in range(d) if a != b))

    @classmethod
    def unary(cls, domain: Domain, values: Iterable[Value]) -> "Relation":
        return cls(domain, 1, frozenset((domain.index(v),) for v in values))

    # views ------------------------------------------------------------
    def __len__(self) -> int:
        return len(self.tuples)

    def __contains__(self, t) -> bool:
        return tuple(t) in self.tuples

    def sorted_tuples(self) -> List[IndexTuple]:
        return sorted(self.tuples)

    def values(self) -> List[Tuple[Value, ...]]:
        """Tuples as domain values, in canonical lexicographic order."""
        return [tuple(self.domain.elements[i] for i in t) for t in self.sorted_tuples()]

    def permute(self, positions: Sequence[int]) -> "Relation":
        """Relation whose i-th column is column ``positions[i]`` of self."""
        return Relation(self.domain, len(positions),
                        frozenset(tuple(t[p] for p in positions) for t in self.tuples))

    def transpose(self) -> "Relation":
        if self.arity != 2:
            raise ValueError("transpose needs a binary relation")
        return self.permute((1, 0))

    def is_full(self) -> bool:
        return len(self.tuples) == self.domain.size ** self.arity

    def __repr__(self) -> str:
        shown = ", ".join("(" + ",".join(map(str, t)) + ")" for t in self.values())
        return f"Relation(arity={self.arity}, {{{shown}}})"


def _normalize_scope(scope: Tuple[str, ...], tuples: FrozenSet[IndexTuple]):
    first: Dict[str, int] = {}
    for i, v in enumerate(scope):
        first.setdefault(v, i)
    if len(first) == len(scope):
        return scope, tuples
    keep = sorted(first.values())
    out = set()
    for t in tuples:
        if all(t[i] == t[first[v]] for i, v in enumerate(scope)):
            out.add(tuple(t[i] for i in keep))
    return tuple(scope[i] for i in keep), frozenset(out)


@dataclass(frozen=True)
class Constraint:
    """A relation applied to a scope.

    Repeated scope variables are folded away at construction: the stored
    scope is repeat-free and the relation is filtered accordingly.
    """

    scope: Tuple[str, ...]
    relation: Relation

    def __post_init__(self):
        scope = tuple(self.scope)
        if len(scope) != self.relation.arity:
            raise ScopeError(f"scope {scope} does not match arity {self.relation.arity}")
        new_scope, tuples = _normalize_scope(scope, self.relation.tuples)
        if new_scope != scope:
            object.__setattr__(self, "relation", Relation(self.relation.domain, len(new_scope), tuples))
        object.__setattr__(self, "scope", new_scope)

    @property
    def domain(self) -> Domain:
        return self.relation.domain

    @property
    def arity(self) -> int:
        return len(self.scope)

    @property
    def tuples(self) -> FrozenSet[IndexTuple]:
        return self.relation.tuples

    def position(self, x: str) -> int:
        try:
            return self.scope.index(x)
        except ValueError:
            raise ScopeError(f"{x!r} is not in the scope {self.scope}") from None

    def is_empty(self) -> bool:
        return not self.relation.tuples

    def solution_set(self) -> FrozenSet[FrozenSet[Tuple[str, int]]]:
        """Solutions as frozensets of (variable, index) pairs; scope-order free."""
        return frozenset(frozenset(zip(self.scope, t)) for t in self.relation.tuples)

    def equivalent(self, other: "Constraint") -> bool:
        return set(self.scope) == set(other.scope) and self.solution_set() == other.solution_set()

    def reorder(self, scope: Sequence[str]) -> "Constraint":
        scope = tuple(scope)
        if sorted(scope) != sorted(self.scope):
            raise ScopeError(f"{scope} is not a permutation of {self.scope}")
        return Constraint(scope, self.relation.permute([self.scope.index(v) for v in scope]))

    def assignments(self) -> List[Assignment]:
        dom = self.domain.elements
        return [{v: dom[a] for v, a in zip(self.scope, t)} for t in self.relation.sorted_tuples()]


# relational algebra ---------------------------------------------------------

def _check_same_domain(*domains: Domain) -> None:
    for d in domains[1:]:
        if d != domains[0]:
            raise DomainError("constraints over different domains")


def conjoin(c1: Constraint, c2: Constraint) -> Constraint:
    """Natural join; scope is c1's scope followed by the new variables of c2."""
    _check_same_domain(c1.domain, c2.domain)
    shared = [(c1.scope.index(v), j) for j, v in enumerate(c2.scope) if v in c1.scope]
    extra = [j for j, v in enumerate(c2.scope) if v not in c1.scope]
    index: Dict[IndexTuple, List[IndexTuple]] = {}
    for t in c2.tuples:
        index.setdefault(tuple(t[j] for _, j in shared), []).append(t)
    out = set()
    for s in c1.tuples:
        for t in index.get(tuple(s[i] for i, _ in shared), ()):
            out.add(s + tuple(t[j] for j in extra))
    scope = c1.scope + tuple(c2.scope[j] for j in extra)
    return Constraint(scope, Relation(c1.domain, len(scope), frozenset(out)))


def project(c: Constraint, keep: Iterable[str]) -> Constraint:
    """Keep the columns of ``keep`` in the original scope order."""
    keep = set(keep)
    unknown = keep - set(c.scope)
    if unknown:
        raise ScopeError(f"unknown variables {sorted(unknown)}")
    pos = [i for i, v in enumerate(c.scope) if v in keep]
    return Constraint(tuple(c.scope[i] for i in pos), c.relation.permute(pos))


def select(c: Constraint, x: str, values: Iterable[Value]) -> Constraint:
    """Solutions with the value of ``x`` in ``values``."""
    i = c.position(x)
    allowed = c.domain.indices(values)
    return _select_indices(c, i, allowed)


def _select_indices(c: Constraint, i: int, allowed) -> Constraint:
    return Constraint(c.scope, Relation(c.domain, c.arity,
                                        frozenset(t for t in c.tuples if t[i] in allowed)))


def binary_projections(c: Constraint) -> List[Constraint]:
    """All projections onto at most two scope variables (including the empty set)."""
    out = []
    for k in range(min(2, c.arity) + 1):
        for ys in itertools.combinations(c.scope, k):
            out.append(project(c, ys))
    return out


# formulas -------------------------------------------------------------------

@dataclass(frozen=True)
class Formula:
    domain: Domain
    variables: Tuple[str, ...]
    constraints: Tuple[Constraint, ...]

    def __post_init__(self):
        variables = tuple(self.variables)
        if len(set(variables)) != len(variables):
            raise ScopeError("repeated variable declarations")
        constraints = tuple(self.constraints)
        known = set(variables)
        for c in constraints:
            if c.domain != self.domain:
                raise DomainError("constraint over a different domain")
            missing = set(c.scope) - known
            if missing:
                raise ScopeError(f"undeclared variables {sorted(missing)}")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "constraints", constraints)

    @property
    def n(self) -> int:
        return len(self.variables)

    def as_constraint(self) -> Constraint:
        """The whole formula as one explicit constraint over ``variables``."""
        d = self.domain
        acc = Constraint((), Relation(d, 0, frozenset({()})))
        for c in self.constraints:
            acc = conjoin(acc, c)
        missing = [v for v in self.variables if v not in acc.scope]
        for v in missing:
            acc = conjoin(acc, Constraint((v,), Relation.full(d, 1)))
        return acc.reorder(self.variables)


def formula_of(constraint: Constraint) -> Formula:
    return Formula(constraint.domain, constraint.scope, (constraint,))


# search ---------------------------------------------------------------------

class Solver:
    """Propagating backtracking search over a fixed formula.

    Domains are integer bitmasks over value indices.  A restriction maps
    variable positions to masks; queries are memoised on restrictions.
    """

    def __init__(self, formula: Formula):
        self.formula = formula
        self.d = formula.domain.size
        self.pos = {v: i for i, v in enumerate(formula.variables)}
        self.cons = []
        for c in formula.constraints:
            scope = tuple(self.pos[v] for v in c.scope)
            self.cons.append((scope, tuple(c.tuples)))
        self.watch: List[List[int]] = [[] for _ in formula.variables]
        for k, (scope, _) in enumerate(self.cons):
            for i in scope:
                self.watch[i].append(k)
        self.full = (1 << self.d) - 1
        # variables in no constraint never need branching
        self.branchable = [i for i, w in enumerate(self.watch) if w]
        self.popcount = [bin(m).count("1") for m in range(1 << self.d)] if self.d <= 16 else None
        self._sat_cache: Dict[Tuple[int, ...], bool] = {}
        self._count_cache: Dict[tuple, int] = {}

    def initial(self, restriction: Optional[Mapping[str, Iterable[int]]] = None) -> List[int]:
        doms = [self.full] * len(self.formula.variables)
        if restriction:
            for v, vals in restriction.items():
                m = 0
                for a in vals:
                    m |= 1 << a
                doms[self.pos[v]] &= m
        return doms

    def propagate(self, doms: List[int], todo: Optional[Iterable[int]] = None) -> bool:
        """Generalised arc consistency in place; False on a wipe-out.

        With ``todo`` given, the caller guarantees that no domain is empty yet.
        """
        if todo is None:
            if any(m == 0 for m in doms):
                return False
            queue = list(range(len(self.cons)))
        else:
            queue = list(todo)
        queued = set(queue)
        while queue:
            k = queue.pop()
            queued.discard(k)
            scope, tuples = self.cons[k]
            support = [0] * len(scope)
            alive = False
            for t in tuples:
                for i, a in zip(scope, t):
                    if not (doms[i] >> a) & 1:
                        break
                else:
                    alive = True
                    for j, a in enumerate(t):
                        support[j] |= 1 << a
            if not alive:
                return False
            for j, i in enumerate(scope):
                new = doms[i] & support[j]
                if new != doms[i]:
                    doms[i] = new
                    for k2 in self.watch[i]:
                        if k2 != k and k2 not in queued:
                            queued.add(k2)
                            queue.append(k2)
        return True

    def _search(self, doms: List[int]) -> Optional[List[int]]:
        """Depth-first search with an explicit stack (instances may have thousands of variables)."""
        if not self.propagate(doms):
            return None
        stack = [doms]
        while stack:
            cur = stack.pop()
            best, best_size = -1, self.d + 1
            pc = self.popcount
            for i in self.branchable:
                m = cur[i]
                if m & (m - 1):
                    s = pc[m] if pc is not None else bin(m).count("1")
                    if s < best_size:
                        best, best_size = i, s
                        if s == 2:
                            break
            if best < 0:
                return [m & -m for m in cur]
            m = cur[best]
            children = []
            for a in range(self.d):
                if (m >> a) & 1:
                    child = list(cur)
                    child[best] = 1 << a
                    if self.propagate(child, self.watch[best]):
                        children.append(child)
            stack.extend(reversed(children))
        return None

    def satisfiable(self, doms: Sequence[int]) -> bool:
        key = tuple(doms)
        hit = self._sat_cache.get(key)
        if hit is None:
            hit = self._search(list(doms)) is not None
            self._sat_cache[key] = hit
        return hit

    def find(self, doms: Sequence[int]) -> Optional[List[int]]:
        res = self._search(list(doms))
        if res is None:
            return None
        return [m.bit_length() - 1 for m in res]

    def enumerate(self, doms: Sequence[int]) -> Iterator[Tuple[int, ...]]:
        doms = list(doms)
        if not self.propagate(doms):
            return
        yield from self._enum(doms, 0)

    def _enum(self, doms: List[int], i: int) -> Iterator[Tuple[int, ...]]:
        n = len(doms)
        while i < n and doms[i] & (doms[i] - 1) == 0:
            i += 1
        if i == n:
            yield tuple(m.bit_length() - 1 for m in doms)
            return
        if self._settled(doms):
            # arc consistent and no constraint has two open variables: every combination works
            yield from itertools.product(*[[a for a in range(self.d) if (m >> a) & 1] for m in doms])
            return
        m = doms[i]
        for a in range(self.d):
            if (m >> a) & 1:
                child = list(doms)
                child[i] = 1 << a
                if self.propagate(child, self.watch[i]):
                    yield from self._enum(child, i + 1)

    def _settled(self, doms: Sequence[int]) -> bool:
        for scope, _ in self.cons:
            open_vars = 0
            for i in scope:
                if doms[i] & (doms[i] - 1):
                    open_vars += 1
                    if open_vars > 1:
                        return False
        return True

    def count(self, doms: Sequence[int]) -> int:
        doms = list(doms)
        if not self.propagate(doms):
            return 0
        return self._count(doms, range(len(doms)))

    def _count(self, doms: List[int], among: Iterable[int]) -> int:
        """Count solutions projected to ``among``; other variables are already settled."""
        free = [i for i in among if doms[i] & (doms[i] - 1)]
        if not free:
            return 1
        parent = {i: i for i in free}

        def root(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        cons_of: Dict[int, List[int]] = {}
        for k, (scope, _) in enumerate(self.cons):
            live = [i for i in scope if i in parent]
            if len(live) >= 2:
                r = root(live[0])
                for i in live[1:]:
                    parent[root(i)] = r
        groups: Dict[int, List[int]] = {}
        for i in free:
            groups.setdefault(root(i), []).append(i)
        for k, (scope, _) in enumerate(self.cons):
            live = [i for i in scope if i in parent]
            if len(live) >= 2:
                cons_of.setdefault(root(live[0]), []).append(k)
        total = 1
        for r, members in groups.items():
            ks = cons_of.get(r)
            if not ks:
                # a lone free variable: every remaining value is supported
                sub = bin(doms[members[0]]).count("1")
            else:
                touched = sorted({i for k in ks for i in self.cons[k][0]})
                key = (tuple(ks), tuple(doms[i] for i in touched))
                sub = self._count_cache.get(key)
                if sub is None:
                    sub = self._branch(doms, members, ks)
                    self._count_cache[key] = sub
            if sub == 0:
                return 0
            total *= sub
        return total

    def _branch(self, doms: List[int], members: List[int], ks: List[int]) -> int:
        degree = {i: 0 for i in members}
        for k in ks:
            for i in self.cons[k][0]:
                if i in degree:
                    degree[i] += 1
        pivot = max(members, key=lambda i: (degree[i], -i))
        m = doms[pivot]
        total = 0
        for a in range(self.d):
            if (m >> a) & 1:
                child = list(doms)
                child[pivot] = 1 << a
                if self.propagate(child, self.watch[pivot]):
                    total += self._count(child, members)
        return total


def _partial_restriction(f: Formula, partial: Optional[Mapping[str, Value]]):
    if not partial:
        return None
    out = {}
    for v, val in partial.items():
        if v not in f.variables:
            raise ScopeError(f"unknown variable {v!r}")
        out[v] = (f.domain.index(val),)
    return out


def is_satisfiable(f: Formula, partial: Optional[Mapping[str, Value]] = None) -> bool:
    s = Solver(f)
    return s.satisfiable(s.initial(_partial_restriction(f, partial)))


def enumerate_solutions(f: Formula, partial: Optional[Mapping[str, Value]] = None) -> List[Assignment]:
    """All total solutions extending ``partial``, in lexicographic order."""
    s = Solver(f)
    dom = f.domain.elements
    return [{v: dom[a] for v, a in zip(f.variables, t)}
            for t in s.enumerate(s.initial(_partial_restriction(f, partial)))]


def count_solutions(f: Formula, partial: Optional[Mapping[str, Value]] = None) -> int:
    s = Solver(f)
    return s.count(s.initial(_partial_restriction(f, partial)))


# brute-force oracle ------------------------------------------------------------

def all_assignments(n: int, d: int) -> np.ndarray:
    """Every assignment of n variables over d values, lexicographic, one per row."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.indices((d,) * n, dtype=np.int64)
    return grid.reshape(n, -1).T


def relation_table(r: Relation) -> np.ndarray:
    table = np.zeros((r.domain.size,) * r.arity, dtype=bool)
    for t in r.tuples:
        table[t] = True
    return table


def evaluate_rows(f: Formula, rows: np.ndarray) -> np.ndarray:
    """Boolean vector: which assignment rows (columns in variable order) satisfy f."""
    ok = np.ones(rows.shape[0], dtype=bool)
    pos = {v: i for i, v in enumerate(f.variables)}
    for c in f.constraints:
        table = relation_table(c.relation)
        idx = tuple(rows[:, pos[v]] for v in c.scope)
        ok &= table[idx] if c.arity else bool(table[()])
    return ok


def solution_mask(f: Formula) -> np.ndarray:
    """Brute-force satisfaction vector over all_assignments(n, |D|)."""
    return evaluate_rows(f, all_assignments(f.n, f.domain.size))


# text instance format -------------------------------------------------------------

_REL_HEADER = re.compile(r"^rel\s+(\S+)\s+arity\s*=\s*(\d+)$")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_instance(text: str):
    """Parse the text format; returns (domain, variables, relations, constraints).

    ``relations`` maps names to Relation, ``constraints`` is a list of
    (name, scope) pairs in file order.  Values and variables are strings.
    """
    domain: Optional[Domain] = None
    variables: List[str] = []
    relations: Dict[str, Relation] = {}
    constraints: List[Tuple[str, Tuple[str, ...]]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno, line = i + 1, _strip(lines[i])
        i += 1
        if not line:
            continue
        if line.startswith("domain:"):
            if domain is not None:
                raise FormatError(f"line {lineno}: second domain line")
            domain = Domain(tuple(line[len("domain:"):].split()))
        elif line.startswith("var:"):
            variables.extend(line[len("var:"):].split())
        elif line.startswith("rel"):
            m = _REL_HEADER.match(line)
            if not m:
                raise FormatError(f"line {lineno}: malformed relation header {line!r}")
            if domain is None:
                raise FormatError(f"line {lineno}: relation before domain line")
            name, arity = m.group(1), int(m.group(2))
            if name in relations:
                raise FormatError(f"line {lineno}: relation {name!r} defined twice")
            rows = []
            while True:
                if i >= len(lines):
                    raise FormatError(f"relation {name!r} is missing 'end'")
                row_no, row = i + 1, _strip(lines[i])
                i += 1
                if not row:
                    continue
                if row == "end":
                    break
                vals = row.split()
                if len(vals) != arity:
                    raise FormatError(f"line {row_no}: expected {arity} values, got {len(vals)}")
                try:
                    rows.append(tuple(domain.index(v) for v in vals))
                except DomainError as e:
                    raise FormatError(f"line {row_no}: {e}") from None
            relations[name] = Relation(domain, arity, frozenset(rows))
        elif line.startswith("con"):
            parts = line.split()
            if parts[0] != "con" or len(parts) < 2:
                raise FormatError(f"line {lineno}: malformed constraint {line!r}")
            constraints.append((parts[1], tuple(parts[2:])))
        else:
            raise FormatError(f"line {lineno}: unknown directive {line!r}")
    if domain is None:
        raise FormatError("missing domain line")
    if len(set(variables)) != len(variables):
        raise FormatError("repeated variable declaration")
    declared = set(variables)
    for name, scope in constraints:
        if name not in relations:
            raise FormatError(f"unknown relation {name!r}")
        if len(scope) != relations[name].arity:
            raise FormatError(f"constraint on {name!r} has wrong arity")
        bad = [v for v in scope if v not in declared]
        if bad:
            raise FormatError(f"unknown variables {bad}")
    return domain, variables, relations, constraints


def parse_formula(text: str) -> Formula:
    domain, variables, relations, constraints = parse_instance(text)
    return Formula(domain, tuple(variables),
                   tuple(Constraint(scope, relations[name]) for name, scope in constraints))


def format_formula(f: Formula, names: Optional[Mapping[Relation, str]] = None) -> str:
    """Render a formula in the text format; relations are numbered R0, R1, ..."""
    lines = ["domain: " + " ".join(str(v) for v in f.domain.elements),
             "var: " + " ".join(f.variables)]
    naming: Dict[Relation, str] = dict(names or {})
    order: List[Relation] = []
    for c in f.constraints:
        if c.relation not in order:
            order.append(c.relation)
    counter = 0
    for r in order:
        if r not in naming:
            while f"R{counter}" in naming.values():
                counter += 1
            naming[r] = f"R{counter}"
        lines.append(f"rel {naming[r]} arity={r.arity}")
        lines.extend(" ".join(str(v) for v in t) for t in r.values())
        lines.append("end")
    for c in f.constraints:
        lines.append(" ".join(["con", naming[c.relation], *c.scope]))
    return "\n".join(lines) + "\n"
