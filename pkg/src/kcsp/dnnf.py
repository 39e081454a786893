"""Multi-valued DNNF circuits.

Inputs are literals ``x -> a`` (value index), ``EMPTY`` (captures
nothing) and ``EPS`` (captures only the empty assignment).  Gates are
binary ``AND`` (decomposable product) and ``OR`` (union).  A circuit
accepts a total assignment over its declared variables when the
assignment extends something the output captures.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .core import Domain, ScopeError, Value
from .diagrams import FALSE, TRUE, DecisionDiagram

LIT, EMPTY, EPS, AND, OR = "lit", "empty", "eps", "and", "or"

Partial = FrozenSet[Tuple[str, int]]
Gate = Tuple           # (LIT, var, a) | (EMPTY,) | (EPS,) | (AND, c1, c2) | (OR, c1, c2)


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class DnnfCircuit:
    domain: Domain
    variables: Tuple[str, ...]
    gates: Tuple[Gate, ...]
    output: int

    # structure ----------------------------------------------------------
    def reachable(self) -> List[int]:
        """Gates below the output, children before parents."""
        seen: Set[int] = set()
        post: List[int] = []
        stack = [(self.output, False)]
        while stack:
            g, done = stack.pop()
            if done:
                post.append(g)
                continue
            if g in seen:
                continue
            seen.add(g)
            stack.append((g, True))
            node = self.gates[g]
            if node[0] in (AND, OR):
                for c in (node[2], node[1]):
                    if c not in seen:
                        stack.append((c, False))
        return post

    def var_sets(self) -> Dict[int, FrozenSet[str]]:
        out: Dict[int, FrozenSet[str]] = {}
        for g in self.reachable():
            node = self.gates[g]
            if node[0] == LIT:
                out[g] = frozenset((node[1],))
            elif node[0] in (AND, OR):
                out[g] = out[node[1]] | out[node[2]]
            else:
                out[g] = frozenset()
        return out

    def kind(self, g: int) -> str:
        return self.gates[g][0]

    def is_accept_all(self) -> bool:
        return self.gates[self.output][0] == EPS

    def is_reject_all(self) -> bool:
        return self.gates[self.output][0] == EMPTY


class CircuitBuilder:
    """Hash-consing gate store."""

    def __init__(self, domain: Domain):
        self.domain = domain
        self.gates: List[Gate] = []
        self._table: Dict[Gate, int] = {}

    def _add(self, gate: Gate) -> int:
        hit = self._table.get(gate)
        if hit is None:
            self.gates.append(gate)
            hit = len(self.gates) - 1
            self._table[gate] = hit
        return hit

    def lit(self, var: str, a: int) -> int:
        if not 0 <= a < self.domain.size:
            raise ValueError("literal value outside the domain")
        return self._add((LIT, var, a))

    def empty(self) -> int:
        return self._add((EMPTY,))

    def eps(self) -> int:
        return self._add((EPS,))

    def and2(self, a: int, b: int) -> int:
        return self._add((AND, a, b))

    def or2(self, a: int, b: int) -> int:
        return self._add((OR, a, b))

    def and_(self, children: Sequence[int]) -> int:
        return self._comb(list(children), self.and2, self.eps)

    def or_(self, children: Sequence[int]) -> int:
        return self._comb(list(children), self.or2, self.empty)

    def _comb(self, kids: List[int], op, unit) -> int:
        if not kids:
            return unit()
        while len(kids) > 1:
            nxt = [op(kids[i], kids[i + 1]) for i in range(0, len(kids) - 1, 2)]
            if len(kids) % 2:
                nxt.append(kids[-1])
            kids = nxt
        return kids[0]

    def copy_from(self, o: DnnfCircuit, g: int, memo: Dict[int, int]) -> int:
        """Import the sub-circuit of ``o`` below gate ``g``."""
        for h in _below(o, g):
            if h in memo:
                continue
            node = o.gates[h]
            if node[0] == LIT:
                memo[h] = self.lit(node[1], node[2])
            elif node[0] == EMPTY:
                memo[h] = self.empty()
            elif node[0] == EPS:
                memo[h] = self.eps()
            elif node[0] == AND:
                memo[h] = self.and2(memo[node[1]], memo[node[2]])
            else:
                memo[h] = self.or2(memo[node[1]], memo[node[2]])
        return memo[g]

    def build(self, output: int, variables: Sequence[str]) -> DnnfCircuit:
        return _compact(DnnfCircuit(self.domain, tuple(variables), tuple(self.gates), output))


def _below(o: DnnfCircuit, g: int) -> List[int]:
    return DnnfCircuit(o.domain, o.variables, o.gates, g).reachable()


def _compact(o: DnnfCircuit) -> DnnfCircuit:
    live = o.reachable()
    new = {g: k for k, g in enumerate(live)}
    gates = []
    for g in live:
        node = o.gates[g]
        if node[0] in (AND, OR):
            gates.append((node[0], new[node[1]], new[node[2]]))
        else:
            gates.append(node)
    return DnnfCircuit(o.domain, o.variables, tuple(gates), new[o.output])


def size(o: DnnfCircuit) -> int:
    """Number of gates and inputs below the output."""
    return len(o.reachable())


def check_decomposable(o: DnnfCircuit) -> Optional[int]:
    """None if every AND gate has children over disjoint variables, else an offending gate."""
    vs = o.var_sets()
    for g in o.reachable():
        node = o.gates[g]
        if node[0] == AND and vs[node[1]] & vs[node[2]]:
            return g
    return None


# semantics ----------------------------------------------------------------------

def capture(o: DnnfCircuit, budget: int = 1_000_000) -> Dict[int, FrozenSet[Partial]]:
    """Captured partial assignments for every gate below the output."""
    out: Dict[int, FrozenSet[Partial]] = {}
    for g in o.reachable():
        node = o.gates[g]
        kind = node[0]
        if kind == LIT:
            out[g] = frozenset({frozenset({(node[1], node[2])})})
        elif kind == EMPTY:
            out[g] = frozenset()
        elif kind == EPS:
            out[g] = frozenset({frozenset()})
        elif kind == OR:
            out[g] = out[node[1]] | out[node[2]]
        else:
            left, right = out[node[1]], out[node[2]]
            if len(left) * len(right) > budget:
                raise BudgetExceeded("captured set exceeds the budget")
            out[g] = frozenset(a | b for a in left for b in right)
        if len(out[g]) > budget:
            raise BudgetExceeded("captured set exceeds the budget")
    return out


def captured(o: DnnfCircuit, budget: int = 1_000_000) -> FrozenSet[Partial]:
    return capture(o, budget)[o.output]


def extend(partials: Iterable[Partial], variables: Sequence[str], d: int) -> FrozenSet[Tuple[int, ...]]:
    """All total tuples over ``variables`` extending some partial assignment."""
    out = set()
    for p in partials:
        bound = dict(p)
        free = [k for k, v in enumerate(variables) if v not in bound]
        base = [bound.get(v, 0) for v in variables]
        for vals in itertools.product(range(d), repeat=len(free)):
            for k, a in zip(free, vals):
                base[k] = a
            out.add(tuple(base))
    return frozenset(out)


def accepted_by_capture(o: DnnfCircuit, budget: int = 1_000_000) -> FrozenSet[Tuple[int, ...]]:
    """Accepted total assignments (value indices, ``o.variables`` order) via the capture oracle."""
    return extend(captured(o, budget), o.variables, o.domain.size)


def accepts(o: DnnfCircuit, assignment: Mapping[str, Value]) -> bool:
    vals = {}
    for v in o.variables:
        if v not in assignment:
            raise ScopeError(f"assignment does not bind {v!r}")
        vals[v] = o.domain.index(assignment[v])
    ok: Dict[int, bool] = {}
    for g in o.reachable():
        node = o.gates[g]
        kind = node[0]
        if kind == LIT:
            ok[g] = vals[node[1]] == node[2]
        elif kind == EMPTY:
            ok[g] = False
        elif kind == EPS:
            ok[g] = True
        elif kind == AND:
            ok[g] = ok[node[1]] and ok[node[2]]
        else:
            ok[g] = ok[node[1]] or ok[node[2]]
    return ok[o.output]


def accepts_rows(o: DnnfCircuit, rows: np.ndarray, variables: Sequence[str]) -> np.ndarray:
    """Vectorised acceptance over assignment rows (value indices)."""
    col = {v: k for k, v in enumerate(variables)}
    ok: Dict[int, np.ndarray] = {}
    n = rows.shape[0]
    for g in o.reachable():
        node = o.gates[g]
        kind = node[0]
        if kind == LIT:
            ok[g] = rows[:, col[node[1]]] == node[2]
        elif kind == EMPTY:
            ok[g] = np.zeros(n, dtype=bool)
        elif kind == EPS:
            ok[g] = np.ones(n, dtype=bool)
        elif kind == AND:
            ok[g] = ok[node[1]] & ok[node[2]]
        else:
            ok[g] = ok[node[1]] | ok[node[2]]
    return ok[o.output]


# normalisation and transformations ------------------------------------------------------

def _rebuild(o: DnnfCircuit, leaf) -> DnnfCircuit:
    """Rebuild bottom-up, mapping inputs through ``leaf`` and simplifying constants."""
    b = CircuitBuilder(o.domain)
    E, P = b.empty(), b.eps()
    new: Dict[int, int] = {}
    for g in o.reachable():
        node = o.gates[g]
        kind = node[0]
        if kind in (LIT, EMPTY, EPS):
            new[g] = leaf(b, node)
            continue
        c1, c2 = new[node[1]], new[node[2]]
        if kind == AND:
            if c1 == E or c2 == E:
                new[g] = E
            elif c2 == P:
                new[g] = c1
            elif c1 == P:
                new[g] = c2
            else:
                new[g] = b.and2(c1, c2)
        else:
            if c1 == E:
                new[g] = c2
            elif c2 == E:
                new[g] = c1
            elif c1 == P or c2 == P:
                new[g] = P
            else:
                new[g] = b.or2(c1, c2)
    return b.build(new[o.output], o.variables)


def _same_leaf(b: CircuitBuilder, node: Gate) -> int:
    if node[0] == LIT:
        return b.lit(node[1], node[2])
    return b.empty() if node[0] == EMPTY else b.eps()


def eliminate_special_inputs(o: DnnfCircuit) -> DnnfCircuit:
    """Remove EMPTY and EPS inputs; the result is an EMPTY/EPS sentinel or has neither."""
    res = _rebuild(o, _same_leaf)
    assert size(res) <= size(o)
    return res


def mandatory(o: DnnfCircuit, x: str) -> bool:
    """True when every proof tree of the output binds x."""
    bound: Dict[int, bool] = {}
    for g in o.reachable():
        node = o.gates[g]
        if node[0] == LIT:
            bound[g] = node[1] == x
        elif node[0] == EMPTY:
            bound[g] = True
        elif node[0] == EPS:
            bound[g] = False
        elif node[0] == AND:
            bound[g] = bound[node[1]] or bound[node[2]]
        else:
            bound[g] = bound[node[1]] and bound[node[2]]
    return bound[o.output]


def restrict(o: DnnfCircuit, x: str, values: Iterable[Value]) -> DnnfCircuit:
    """Circuit accepting exactly the accepted assignments with x in ``values``.

    Literals x -> a with a outside the set become EMPTY.  Where a proof
    tree leaves x unbound, x is first made explicit by a product with
    the allowed literals (this may grow the circuit; when x is bound on
    every proof tree nothing is added and the size cannot grow).
    """
    if x not in o.variables:
        raise ScopeError(f"{x!r} is not a circuit variable")
    allowed = sorted(o.domain.indices(values))
    b = CircuitBuilder(o.domain)
    vs = o.var_sets()
    imported: Dict[int, int] = {}
    done: Dict[int, int] = {}
    gadget = b.or_([b.lit(x, a) for a in allowed])

    for g in o.reachable():
        node = o.gates[g]
        kind = node[0]
        if x not in vs[g]:
            body = b.copy_from(o, g, imported)
            done[g] = b.and2(body, gadget) if kind != EMPTY else b.empty()
        elif kind == LIT:
            done[g] = b.lit(x, node[2]) if node[2] in allowed else b.empty()
        elif kind == OR:
            done[g] = b.or2(done[node[1]], done[node[2]])
        else:
            c1, c2 = node[1], node[2]
            if x in vs[c1]:
                done[g] = b.and2(done[c1], b.copy_from(o, c2, imported))
            else:
                done[g] = b.and2(b.copy_from(o, c1, imported), done[c2])
    res = eliminate_special_inputs(b.build(done[o.output], o.variables))
    if mandatory(o, x):
        assert size(res) <= size(o)
    return res


def project(o: DnnfCircuit, keep: Iterable[str]) -> DnnfCircuit:
    """Existentially quantify every variable outside ``keep``."""
    keep = set(keep)
    unknown = keep - set(o.variables)
    if unknown:
        raise ScopeError(f"unknown variables {sorted(unknown)}")

    def leaf(b, node):
        if node[0] == LIT and node[1] not in keep:
            return b.eps()
        return _same_leaf(b, node)

    res = _rebuild(o, leaf)
    res = DnnfCircuit(res.domain, tuple(v for v in o.variables if v in keep), res.gates, res.output)
    assert size(res) <= size(o)
    return res


# proof trees ----------------------------------------------------------------------

@dataclass(frozen=True)
class ProofTree:
    gates: FrozenSet[int]
    choices: Tuple[Tuple[int, int], ...]     # (or gate, chosen child)

    def assignment(self, o: DnnfCircuit) -> Optional[Partial]:
        """The captured assignment, or None if the tree contains an EMPTY input."""
        out = set()
        for g in self.gates:
            node = o.gates[g]
            if node[0] == EMPTY:
                return None
            if node[0] == LIT:
                out.add((node[1], node[2]))
        return frozenset(out)


def proof_trees(o: DnnfCircuit, budget: int = 100_000) -> Iterator[ProofTree]:
    """Every proof tree of the output (at most ``budget`` of them)."""
    count = 0
    for gates, choices in _trees(o, o.output):
        count += 1
        if count > budget:
            raise BudgetExceeded("too many proof trees")
        yield ProofTree(frozenset(gates), tuple(sorted(choices)))


def _trees(o: DnnfCircuit, g: int):
    node = o.gates[g]
    if node[0] == AND:
        for g1, ch1 in _trees(o, node[1]):
            for g2, ch2 in _trees(o, node[2]):
                yield g1 | g2 | {g}, ch1 | ch2
    elif node[0] == OR:
        for k in (1, 2):
            for gs, ch in _trees(o, node[k]):
                yield gs | {g}, ch | {(g, node[k])}
    else:
        yield {g}, set()


def first_proof_tree(o: DnnfCircuit, live: Optional[Mapping[int, bool]] = None) -> List[int]:
    """Gates of one proof tree, parents before children, avoiding gates that capture nothing."""
    if live is None:
        live = _nonempty(o)
    order = []
    stack = [o.output]
    while stack:
        g = stack.pop()
        order.append(g)
        node = o.gates[g]
        if node[0] == AND:
            stack.extend((node[2], node[1]))
        elif node[0] == OR:
            stack.append(node[1] if live[node[1]] else node[2])
    return order


def _nonempty(o: DnnfCircuit) -> Dict[int, bool]:
    live: Dict[int, bool] = {}
    for g in o.reachable():
        node = o.gates[g]
        if node[0] in (LIT, EPS):
            live[g] = True
        elif node[0] == EMPTY:
            live[g] = False
        elif node[0] == AND:
            live[g] = live[node[1]] and live[node[2]]
        else:
            live[g] = live[node[1]] or live[node[2]]
    return live


# v-trees ----------------------------------------------------------------------

@dataclass(frozen=True)
class VTree:
    var: Optional[str] = None
    left: Optional["VTree"] = None
    right: Optional["VTree"] = None

    @staticmethod
    def leaf(var: str) -> "VTree":
        return VTree(var=var)

    @property
    def is_leaf(self) -> bool:
        return self.var is not None

    def leaves(self) -> Tuple[str, ...]:
        if self.is_leaf:
            return (self.var,)
        return self.left.leaves() + self.right.leaves()

    def nodes(self) -> Iterator["VTree"]:
        yield self
        if not self.is_leaf:
            yield from self.left.nodes()
            yield from self.right.nodes()

    def to_json(self):
        return self.var if self.is_leaf else [self.left.to_json(), self.right.to_json()]

    @staticmethod
    def from_json(obj) -> "VTree":
        if isinstance(obj, str):
            return VTree.leaf(obj)
        return VTree(left=VTree.from_json(obj[0]), right=VTree.from_json(obj[1]))


def right_comb(order: Sequence[str]) -> VTree:
    if not order:
        raise ValueError("a v-tree needs at least one variable")
    t = VTree.leaf(order[-1])
    for v in reversed(order[:-1]):
        t = VTree(left=VTree.leaf(v), right=t)
    return t


def check_structured(o: DnnfCircuit, t: VTree) -> bool:
    """Each AND gate splits its variables along the two children of some v-tree node."""
    leaves = t.leaves()
    if len(set(leaves)) != len(leaves):
        raise ValueError("v-tree leaves must be distinct")
    vs = o.var_sets()
    if not vs[o.output] <= set(leaves):
        return False
    nodes = [(frozenset(n.left.leaves()), frozenset(n.right.leaves()))
             for n in t.nodes() if not n.is_leaf]
    for g in o.reachable():
        node = o.gates[g]
        if node[0] != AND:
            continue
        a, b = vs[node[1]], vs[node[2]]
        if not a or not b:
            continue
        if not any((a <= l and b <= r) or (a <= r and b <= l) for l, r in nodes):
            return False
    return True


# rectangles ----------------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    """Product of a relation over ``left_vars`` and one over ``right_vars``."""

    left_vars: Tuple[str, ...]
    right_vars: Tuple[str, ...]
    left: FrozenSet[Tuple[int, ...]]
    right: FrozenSet[Tuple[int, ...]]
    gate: Optional[int] = None

    def tuples(self, variables: Sequence[str]) -> FrozenSet[Tuple[int, ...]]:
        pos = {v: k for k, v in enumerate(variables)}
        out = set()
        for a in self.left:
            for b in self.right:
                t = [0] * len(variables)
                for v, x in zip(self.left_vars, a):
                    t[pos[v]] = x
                for v, x in zip(self.right_vars, b):
                    t[pos[v]] = x
                out.add(tuple(t))
        return frozenset(out)

    def balanced(self, z: Iterable[str], beta: float) -> bool:
        z = set(z)
        k = len(z & set(self.left_vars))
        return beta * len(z) / 2 <= k <= beta * len(z)


@dataclass(frozen=True)
class RectangleCover:
    variables: Tuple[str, ...]
    z: Tuple[str, ...]
    beta: float
    rectangles: Tuple[Rectangle, ...]

    def __len__(self) -> int:
        return len(self.rectangles)

    def union(self) -> FrozenSet[Tuple[int, ...]]:
        out: Set[Tuple[int, ...]] = set()
        for r in self.rectangles:
            out |= r.tuples(self.variables)
        return frozenset(out)

    def partitions(self) -> Set[FrozenSet[str]]:
        return {frozenset(r.left_vars) for r in self.rectangles}


def _split_relation(tuples: FrozenSet[Tuple[int, ...]], variables: Sequence[str],
                    left: Sequence[str]) -> Optional[Tuple[FrozenSet, FrozenSet]]:
    """(pi_left, pi_rest) if the relation is their product, else None."""
    li = [variables.index(v) for v in left]
    ri = [k for k in range(len(variables)) if k not in li]
    a = frozenset(tuple(t[k] for k in li) for t in tuples)
    b = frozenset(tuple(t[k] for k in ri) for t in tuples)
    if len(a) * len(b) != len(tuples):
        return None
    return a, b


def _free_vars(tuples: FrozenSet[Tuple[int, ...]], variables: Sequence[str], d: int) -> Set[str]:
    out = set()
    for k, v in enumerate(variables):
        rest = {t[:k] + t[k + 1:] for t in tuples}
        if len(rest) * d == len(tuples):
            out.add(v)
    return out


def _contexts(o: DnnfCircuit, S: Mapping[int, FrozenSet[Partial]], budget: int) -> Dict[int, Set[Partial]]:
    """For each gate, the assignments the rest of a proof tree contributes around it."""
    ctx: Dict[int, Set[Partial]] = {g: set() for g in o.reachable()}
    ctx[o.output] = {frozenset()}
    for g in reversed(o.reachable()):
        node = o.gates[g]
        if node[0] == OR:
            ctx[node[1]] |= ctx[g]
            ctx[node[2]] |= ctx[g]
        elif node[0] == AND:
            for me, sib in ((node[1], node[2]), (node[2], node[1])):
                if len(ctx[g]) * len(S[sib]) > budget:
                    raise BudgetExceeded("context set exceeds the budget")
                ctx[me] |= {a | b for a in ctx[g] for b in S[sib]}
    return ctx


def _target(nz: int, beta: float) -> Tuple[float, float]:
    return beta * nz / 2, beta * nz


def _delete_gate(o: DnnfCircuit, gate: int) -> DnnfCircuit:
    def leaf(b, node):
        return _same_leaf(b, node)
    b = CircuitBuilder(o.domain)
    E, P = b.empty(), b.eps()
    new: Dict[int, int] = {}
    for g in o.reachable():
        if g == gate:
            new[g] = E
            continue
        node = o.gates[g]
        kind = node[0]
        if kind in (LIT, EMPTY, EPS):
            new[g] = leaf(b, node)
        elif kind == AND:
            c1, c2 = new[node[1]], new[node[2]]
            new[g] = E if E in (c1, c2) else c1 if c2 == P else c2 if c1 == P else b.and2(c1, c2)
        else:
            c1, c2 = new[node[1]], new[node[2]]
            new[g] = c2 if c1 == E else c1 if c2 == E else P if P in (c1, c2) else b.or2(c1, c2)
    return b.build(new[o.output], o.variables)


def extract_rectangle_cover(o: DnnfCircuit, z: Iterable[str], beta: float = 2 / 3,
                            vtree: Optional[VTree] = None, budget: int = 1_000_000) -> RectangleCover:
    """A Z-beta-balanced rectangle cover of the accepted set with at most size(o) rectangles.

    Repeatedly pick a proof tree, descend to a gate whose variables hold
    the right share of Z, emit the rectangle of all proof trees through
    that gate, and delete the gate.  With a v-tree, a node below which
    the share of Z is right fixes one partition (X_down, X_up) and the
    gate is the topmost one of the proof tree inside X_down.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    X = tuple(o.variables)
    z = tuple(v for v in X if v in set(z))
    d = o.domain.size
    lo, hi = _target(len(z), beta)
    if not any(lo <= k <= hi for k in range(len(z) + 1)):
        raise ValueError(f"no integer share of |Z|={len(z)} lies in [{lo}, {hi}]")
    start_size = size(o)
    target = accepted_by_capture(o, budget)
    fixed_down: Optional[FrozenSet[str]] = None
    if vtree is not None:
        if not check_structured(o, vtree):
            raise ValueError("circuit is not structured by the given v-tree")
        fixed_down = _vtree_cut(vtree, z, lo, hi)
    cur = eliminate_special_inputs(o)
    rects: List[Rectangle] = []
    while not cur.is_reject_all():
        if cur.is_accept_all():
            left = fixed_down if fixed_down is not None else _balanced_prefix(X, z, lo, hi)
            lv = tuple(v for v in X if v in left)
            rv = tuple(v for v in X if v not in left)
            rects.append(Rectangle(lv, rv, frozenset(itertools.product(range(d), repeat=len(lv))),
                                   frozenset(itertools.product(range(d), repeat=len(rv)))))
            break
        S = capture(cur, budget)
        ctx = _contexts(cur, S, budget)
        vs = cur.var_sets()
        tree = first_proof_tree(cur)
        if fixed_down is not None:
            gate = next((g for g in tree if vs[g] <= fixed_down), None)
            if gate is None:
                raise ValueError("a proof tree binds no variable below the chosen v-tree node")
            rect = _materialise(cur, gate, S, ctx, vs, X, d)
            rect = _rebalance_to(rect, X, d, fixed_down)
        else:
            rect = None
            for gate in _descent(cur, tree, vs, z):
                cand = _materialise(cur, gate, S, ctx, vs, X, d)
                rect = _rebalance(cand, X, d, z, lo, hi)
                if rect is not None:
                    break
            if rect is None:
                raise AssertionError("descent found no balanced gate")
        rects.append(rect)
        nxt = _delete_gate(cur, rect.gate)
        assert size(nxt) < size(cur)
        cur = nxt
    cover = RectangleCover(X, z, beta, tuple(rects))
    assert len(cover) <= start_size, "cover larger than the circuit"
    assert cover.union() == target, "cover does not reproduce the accepted set"
    for r in cover.rectangles:
        assert r.balanced(z, beta), "unbalanced rectangle"
    if fixed_down is not None:
        assert len(cover.partitions()) <= 1
    return cover


def _descent(o: DnnfCircuit, tree: List[int], vs: Mapping[int, FrozenSet[str]], z: Sequence[str]):
    """Gates along the proof tree, from the output, following the larger Z share at products."""
    in_tree = set(tree)
    zset = set(z)
    g = o.output
    while True:
        yield g
        node = o.gates[g]
        if node[0] == OR:
            g = node[1] if node[1] in in_tree else node[2]
        elif node[0] == AND:
            c1, c2 = node[1], node[2]
            g = c1 if len(vs[c1] & zset) >= len(vs[c2] & zset) else c2
        else:
            return


def _materialise(o, gate, S, ctx, vs, X, d) -> Rectangle:
    inner = sorted(vs[gate], key=X.index)
    outer = [v for v in X if v not in vs[gate]]
    left = extend(S[gate], inner, d)
    right = extend(ctx[gate], outer, d)
    return Rectangle(tuple(inner), tuple(outer), left, right, gate)


def _move(rect: Rectangle, X, d, new_left: Set[str]) -> Optional[Rectangle]:
    full = rect.tuples(X)
    lv = tuple(v for v in X if v in new_left)
    rv = tuple(v for v in X if v not in new_left)
    parts = _split_relation(full, X, lv)
    if parts is None:
        return None
    return Rectangle(lv, rv, parts[0], parts[1], rect.gate)


def _rebalance(rect: Rectangle, X, d, z, lo, hi) -> Optional[Rectangle]:
    zset = set(z)
    count = len(zset & set(rect.left_vars))
    if lo <= count <= hi:
        return rect
    left_free = [v for v in rect.left_vars if v in zset and v in _free_vars(rect.left, rect.left_vars, d)]
    right_free = [v for v in rect.right_vars if v in zset and v in _free_vars(rect.right, rect.right_vars, d)]
    new_left = set(rect.left_vars)
    if count > hi:
        need = int(np.ceil(count - hi))
        if need > len(left_free):
            return None
        new_left -= set(left_free[:need])
    else:
        need = int(np.ceil(lo - count))
        if need > len(right_free):
            return None
        new_left |= set(right_free[:need])
    return _move(rect, X, d, new_left)


def _rebalance_to(rect: Rectangle, X, d, down: FrozenSet[str]) -> Rectangle:
    moved = _move(rect, X, d, set(down))
    if moved is None:
        raise AssertionError("rectangle does not respect the v-tree partition")
    return moved


def _vtree_cut(t: VTree, z: Sequence[str], lo: float, hi: float) -> FrozenSet[str]:
    zset = set(z)
    for node in t.nodes():
        k = len(zset & set(node.leaves()))
        if lo <= k <= hi:
            return frozenset(node.leaves())
    if lo <= 0:
        return frozenset()
    raise ValueError("no v-tree node holds a balanced share of Z")


def _balanced_prefix(X, z, lo, hi) -> FrozenSet[str]:
    for k in range(len(z) + 1):
        if lo <= k <= hi:
            return frozenset(z[:k])
    raise ValueError("no balanced share exists")


# translations from decision diagrams -------------------------------------------------------

def _diagram_to_circuit(dd: DecisionDiagram) -> DnnfCircuit:
    b = CircuitBuilder(dd.domain)
    new = {FALSE: b.empty(), TRUE: b.eps()}
    for i in reversed(dd.reachable()):
        var, children = dd.nodes[i]
        new[i] = b.or_([b.and2(b.lit(var, a), new[c]) for a, c in enumerate(children)])
    return eliminate_special_inputs(b.build(new[dd.source], dd.variables))


def fdd_to_dnnf(dd: DecisionDiagram) -> DnnfCircuit:
    """Each node becomes a union over values of (literal AND child)."""
    return _diagram_to_circuit(dd)


def odd_to_structured_dnnf(dd: DecisionDiagram) -> Tuple[DnnfCircuit, VTree]:
    """Translation of an ordered diagram together with the right-comb v-tree of its order."""
    if dd.order is None:
        raise ValueError("an ordered diagram is required")
    order = list(dd.order) + [v for v in dd.variables if v not in dd.order]
    return _diagram_to_circuit(dd), right_comb(order)


# serialisation ----------------------------------------------------------------------

def to_json(o: DnnfCircuit) -> dict:
    el = o.domain.elements
    gates = []
    for k, node in enumerate(o.gates):
        if node[0] == LIT:
            gates.append({"id": k, "kind": LIT, "var": node[1], "value": el[node[2]]})
        elif node[0] in (EMPTY, EPS):
            gates.append({"id": k, "kind": node[0]})
        else:
            gates.append({"id": k, "kind": node[0], "children": [node[1], node[2]]})
    return {"format": "dnnf", "domain": list(el), "variables": list(o.variables),
            "output": o.output, "gates": gates}


def from_json(obj: dict) -> DnnfCircuit:
    domain = Domain(tuple(obj["domain"]))
    gates: List[Gate] = []
    for k, g in enumerate(obj["gates"]):
        if g["id"] != k:
            raise ValueError("gate ids must be consecutive from 0")
        if g["kind"] == LIT:
            gates.append((LIT, g["var"], domain.index(g["value"])))
        elif g["kind"] in (EMPTY, EPS):
            gates.append((g["kind"],))
        elif g["kind"] in (AND, OR):
            a, b = g["children"]
            gates.append((g["kind"], int(a), int(b)))
        else:
            raise ValueError(f"unknown gate kind {g['kind']!r}")
    return DnnfCircuit(domain, tuple(obj["variables"]), tuple(gates), int(obj["output"]))


def dumps(o: DnnfCircuit) -> str:
    return json.dumps(to_json(o), indent=1, sort_keys=True)


# random circuits ----------------------------------------------------------------------

def random_circuit(rng: np.random.Generator, domain: Domain, variables: Sequence[str],
                   max_gates: int = 60, vtree: Optional[VTree] = None,
                   special_inputs: bool = True) -> DnnfCircuit:
    """A random DNNF whose every proof tree binds all variables.

    Without a v-tree the products split variable sets at random; with one,
    every product follows a v-tree node.  EMPTY inputs under unions and EPS
    inputs under products are sprinkled in when ``special_inputs`` is set.
    Retries until the circuit has at most ``max_gates`` nodes.
    """
    for _ in range(200):
        b = CircuitBuilder(domain)
        pools: Dict[FrozenSet[str], List[int]] = {}
        if vtree is None:
            out = _random_free(rng, b, tuple(variables), pools, depth=0)
        else:
            out = _random_structured(rng, b, vtree, pools)
        if special_inputs:
            out = _sprinkle(rng, b, out)
        o = b.build(out, variables)
        if size(o) <= max_gates:
            return o
    raise RuntimeError("could not draw a small enough circuit")


def random_vtree(rng: np.random.Generator, variables: Sequence[str]) -> VTree:
    """A uniformly split random v-tree over the variables (in a shuffled order)."""
    vs = [variables[int(i)] for i in rng.permutation(len(variables))]

    def build(part):
        if len(part) == 1:
            return VTree.leaf(part[0])
        cut = int(rng.integers(1, len(part)))
        return VTree(left=build(part[:cut]), right=build(part[cut:]))
    return build(vs)


def _random_leaf(rng, b: CircuitBuilder, var: str) -> int:
    k = b.domain.size
    vals = [a for a in range(k) if rng.random() < 0.5] or [int(rng.integers(k))]
    return b.or_([b.lit(var, a) for a in vals])


def _random_free(rng, b, vs: Tuple[str, ...], pools, depth: int) -> int:
    key = frozenset(vs)
    pool = pools.setdefault(key, [])
    if pool and rng.random() < 0.35:
        return pool[int(rng.integers(len(pool)))]
    if len(vs) == 1:
        g = _random_leaf(rng, b, vs[0])
    elif depth > 3 or rng.random() < 0.6:
        perm = list(rng.permutation(len(vs)))
        cut = int(rng.integers(1, len(vs)))
        left = tuple(vs[i] for i in sorted(perm[:cut]))
        right = tuple(vs[i] for i in sorted(perm[cut:]))
        g = b.and2(_random_free(rng, b, left, pools, depth + 1), _random_free(rng, b, right, pools, depth + 1))
    else:
        g = b.or2(_random_free(rng, b, vs, pools, depth + 1), _random_free(rng, b, vs, pools, depth + 1))
    pool.append(g)
    return g


def _random_structured(rng, b, t: VTree, pools) -> int:
    key = frozenset(t.leaves())
    if key not in pools:
        if t.is_leaf:
            pool = [_random_leaf(rng, b, t.var) for _ in range(int(rng.integers(1, 3)))]
        else:
            _random_structured(rng, b, t.left, pools)
            _random_structured(rng, b, t.right, pools)
            lp = pools[frozenset(t.left.leaves())]
            rp = pools[frozenset(t.right.leaves())]
            pool = []
            for _ in range(int(rng.integers(1, 3))):
                prods = [b.and2(lp[int(rng.integers(len(lp)))], rp[int(rng.integers(len(rp)))])
                         for _ in range(int(rng.integers(1, 3)))]
                pool.append(b.or_(prods))
        pools[key] = pool
    pool = pools[key]
    return pool[int(rng.integers(len(pool)))]


def _sprinkle(rng, b: CircuitBuilder, out: int) -> int:
    if rng.random() < 0.5:
        out = b.and2(out, b.eps())
    if rng.random() < 0.5:
        out = b.or2(b.empty(), out)
    return out
