"""Multi-valued decision diagrams (ordered and free).

Node ids 0 and 1 are the shared false and true sinks; inner nodes carry
a variable and one child per domain value, indexed by value position.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import Domain, ScopeError, Value

FALSE, TRUE = 0, 1
ODD, FDD = "ODD", "FDD"

Node = Tuple[str, Tuple[int, ...]]


@dataclass(frozen=True)
class DecisionDiagram:
    domain: Domain
    variables: Tuple[str, ...]
    nodes: Tuple[Optional[Node], ...]      # entries 0 and 1 are None (sinks)
    source: int
    kind: str = FDD
    order: Optional[Tuple[str, ...]] = None

    def node(self, i: int) -> Node:
        if i < 2:
            raise ValueError("sinks carry no variable")
        return self.nodes[i]

    def reachable(self) -> List[int]:
        """Inner nodes reachable from the source, in a topological order (parents first)."""
        seen, post = set(), []
        stack = [(self.source, False)]
        while stack:
            i, done = stack.pop()
            if i < 2:
                continue
            if done:
                post.append(i)
                continue
            if i in seen:
                continue
            seen.add(i)
            stack.append((i, True))
            for c in reversed(self.nodes[i][1]):
                if c >= 2 and c not in seen:
                    stack.append((c, False))
        return post[::-1]


class DiagramBuilder:
    """Append-only node store.  ``unique=True`` hash-conses identical nodes."""

    def __init__(self, domain: Domain, unique: bool = False):
        self.domain = domain
        self.nodes: List[Optional[Node]] = [None, None]
        self.unique = unique
        self._table: Dict[Node, int] = {}

    def add(self, var: str, children: Sequence[int]) -> int:
        children = tuple(children)
        if len(children) != self.domain.size:
            raise ValueError("a decision node needs one child per domain value")
        key = (var, children)
        if self.unique:
            hit = self._table.get(key)
            if hit is not None:
                return hit
        self.nodes.append(key)
        i = len(self.nodes) - 1
        if self.unique:
            self._table[key] = i
        return i

    def build(self, source: int, variables: Sequence[str], kind: str = FDD,
              order: Optional[Sequence[str]] = None) -> DecisionDiagram:
        return compact(DecisionDiagram(self.domain, tuple(variables), tuple(self.nodes), source, kind,
                                       tuple(order) if order is not None else None))


def compact(d: DecisionDiagram) -> DecisionDiagram:
    """Drop unreachable nodes and renumber in topological order."""
    live = d.reachable()
    new_id = {FALSE: FALSE, TRUE: TRUE}
    for k, i in enumerate(live):
        new_id[i] = k + 2
    nodes: List[Optional[Node]] = [None, None]
    for i in live:
        var, children = d.nodes[i]
        nodes.append((var, tuple(new_id[c] for c in children)))
    return DecisionDiagram(d.domain, d.variables, tuple(nodes), new_id[d.source], d.kind, d.order)


def size(d: DecisionDiagram) -> int:
    """Number of inner nodes reachable from the source."""
    return len(d.reachable())


def evaluate(d: DecisionDiagram, assignment: Mapping[str, Value]) -> bool:
    i = d.source
    while i >= 2:
        var, children = d.nodes[i]
        if var not in assignment:
            raise ScopeError(f"assignment does not bind {var!r}")
        i = children[d.domain.index(assignment[var])]
    return i == TRUE


def evaluate_rows(d: DecisionDiagram, rows: np.ndarray, variables: Sequence[str]) -> np.ndarray:
    """Vectorised evaluation; ``rows`` holds value indices, columns in ``variables`` order."""
    col = {v: k for k, v in enumerate(variables)}
    n_nodes = len(d.nodes)
    var_col = np.zeros(n_nodes, dtype=np.int64)
    child = np.zeros((n_nodes, d.domain.size), dtype=np.int64)
    child[TRUE, :] = TRUE
    for i in range(2, n_nodes):
        var, children = d.nodes[i]
        if var not in col:
            raise ScopeError(f"rows do not bind {var!r}")
        var_col[i] = col[var]
        child[i] = children
    cur = np.full(rows.shape[0], d.source, dtype=np.int64)
    ar = np.arange(rows.shape[0])
    active = cur >= 2
    while active.any():
        idx = ar[active]
        c = cur[idx]
        cur[idx] = child[c, rows[idx, var_col[c]]]
        active = cur >= 2
    return cur == TRUE


@dataclass(frozen=True)
class Violation:
    reason: str
    path: Tuple[int, ...]
    variables: Tuple[str, ...]


def validate(d: DecisionDiagram) -> Optional[Violation]:
    """None if every path reads each variable at most once (and respects the order for ODDs)."""
    known = set(d.variables)
    rank = {v: k for k, v in enumerate(d.order)} if d.order is not None else None
    if d.kind == ODD and rank is None:
        return Violation("ODD without an order", (), ())
    for i in d.reachable():
        var, children = d.nodes[i]
        if len(children) != d.domain.size:
            return Violation("wrong out-degree", (i,), (var,))
        if var not in known:
            return Violation("undeclared variable", (i,), (var,))
        if any(not 0 <= c < len(d.nodes) or (c >= 2 and d.nodes[c] is None) for c in children):
            return Violation("dangling edge", (i,), (var,))
        if rank is not None and var not in rank:
            return Violation("variable missing from order", (i,), (var,))
    order = d.reachable()
    parents: Dict[int, int] = {}
    for i in order:
        for c in d.nodes[i][1]:
            if c >= 2:
                parents.setdefault(c, i)
    if rank is not None:
        for i in order:
            var = d.nodes[i][0]
            for c in d.nodes[i][1]:
                if c >= 2 and rank[d.nodes[c][0]] <= rank[var]:
                    path = _path_to(d, parents, i) + (c,)
                    return Violation("order violated", path, tuple(d.nodes[q][0] for q in path))
    # a variable is read twice iff some x-node reaches another x-node
    below: Dict[int, frozenset] = {}
    for i in reversed(order):
        var, children = d.nodes[i]
        acc = {var}
        for c in children:
            if c >= 2:
                if var in below[c]:
                    tail = _descend_to(d, c, var)
                    path = _path_to(d, parents, i) + tail
                    return Violation("variable read twice", path, tuple(d.nodes[q][0] for q in path))
                acc |= below[c]
        below[i] = frozenset(acc)
    return None


def _path_to(d: DecisionDiagram, parents: Dict[int, int], i: int) -> Tuple[int, ...]:
    path = [i]
    while path[-1] != d.source:
        path.append(parents[path[-1]])
    return tuple(reversed(path))


def _descend_to(d: DecisionDiagram, start: int, var: str) -> Tuple[int, ...]:
    prev = {start: None}
    queue = [start]
    while queue:
        i = queue.pop(0)
        if d.nodes[i][0] == var:
            path = [i]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return tuple(reversed(path))
        for c in d.nodes[i][1]:
            if c >= 2 and c not in prev:
                prev[c] = i
                queue.append(c)
    raise AssertionError("no node labelled with the variable below")


def count_models(d: DecisionDiagram, n_vars: Optional[int] = None) -> int:
    """Satisfying assignments over ``n_vars`` variables (default: the declared ones).

    A uniformly random assignment follows each edge of a node with
    probability 1/|D| because no variable is read twice on a path.
    """
    n = len(d.variables) if n_vars is None else n_vars
    k = d.domain.size
    prob: Dict[int, Fraction] = {FALSE: Fraction(0), TRUE: Fraction(1)}
    for i in reversed(d.reachable()):
        prob[i] = sum((prob[c] for c in d.nodes[i][1]), Fraction(0)) / k
    total = prob[d.source] * k ** n
    assert total.denominator == 1
    return int(total)


def reduce(d: DecisionDiagram) -> DecisionDiagram:
    """Merge isomorphic nodes and bypass nodes whose children all coincide."""
    new: Dict[int, int] = {FALSE: FALSE, TRUE: TRUE}
    b = DiagramBuilder(d.domain, unique=True)
    for i in reversed(d.reachable()):
        var, children = d.nodes[i]
        kids = tuple(new[c] for c in children)
        new[i] = kids[0] if len(set(kids)) == 1 else b.add(var, kids)
    return b.build(new[d.source], d.variables, d.kind, d.order)


def to_dot(d: DecisionDiagram) -> str:
    lines = ["digraph DD {", '  n0 [shape=box,label="0"];', '  n1 [shape=box,label="1"];']
    for i in d.reachable():
        var, _ = d.nodes[i]
        lines.append(f'  n{i} [label="{var}"];')
    for i in d.reachable():
        _, children = d.nodes[i]
        grouped: Dict[int, List[str]] = {}
        for a, c in enumerate(children):
            grouped.setdefault(c, []).append(str(d.domain.elements[a]))
        for c in sorted(grouped):
            lines.append(f'  n{i} -> n{c} [label="{",".join(grouped[c])}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(d: DecisionDiagram) -> dict:
    el = d.domain.elements
    return {
        "format": "decision-diagram",
        "kind": d.kind,
        "domain": list(el),
        "variables": list(d.variables),
        "order": list(d.order) if d.order is not None else None,
        "source": d.source,
        "nodes": [{"id": i, "var": d.nodes[i][0],
                   "edges": {str(el[a]): c for a, c in enumerate(d.nodes[i][1])}}
                  for i in range(2, len(d.nodes))],
    }


def from_json(obj: dict) -> DecisionDiagram:
    domain = Domain(tuple(obj["domain"]))
    nodes: List[Optional[Node]] = [None, None]
    for k, entry in enumerate(obj["nodes"]):
        if entry["id"] != k + 2:
            raise ValueError("node ids must be consecutive from 2")
        edges = entry["edges"]
        nodes.append((entry["var"], tuple(int(edges[str(v)]) for v in domain.elements)))
    order = obj.get("order")
    return DecisionDiagram(domain, tuple(obj["variables"]), tuple(nodes), int(obj["source"]),
                           obj["kind"], tuple(order) if order is not None else None)


def dumps(d: DecisionDiagram) -> str:
    return json.dumps(to_json(d), indent=1, sort_keys=True)
