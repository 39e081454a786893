"""Selection matrices, block structure and the decomposability notions.

For a constraint R over scope u and two scope variables x, y the
selection matrix has one entry per value pair (a, b): the rest of R
once x = a and y = b are pinned.  Everything in this module works on
the non-emptiness pattern of such matrices (or their generalisation to
variable sets) and on product decompositions of constraints.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import Constraint, Domain, Relation, ScopeError, Value, binary_projections, conjoin, project

Block = Tuple[Tuple[int, ...], Tuple[int, ...]]

_PRODUCT_LIMIT = 200_000


def relation_constraint(r: Relation, prefix: str = "x") -> Constraint:
    """The constraint r(x0, ..., x{k-1})."""
    return Constraint(tuple(f"{prefix}{i}" for i in range(r.arity)), r)


# block patterns ----------------------------------------------------------------

@dataclass(frozen=True)
class NotProper:
    """Two rows and two columns whose 2x2 submatrix has exactly one empty entry."""

    rows: Tuple[int, int]
    cols: Tuple[int, int]


def pattern_blocks(pattern: np.ndarray) -> Union[List[Block], NotProper]:
    """Blocks of a 0/1 matrix, or a 2x2 witness that it is not a proper block matrix.

    A pattern is proper exactly when any two non-empty rows have equal or
    disjoint supports.  Blocks come out in order of their first row.
    """
    pattern = np.asarray(pattern, dtype=bool)
    supports: Dict[Tuple[int, ...], List[int]] = {}
    order: List[Tuple[int, ...]] = []
    seen_cols: Dict[int, Tuple[int, ...]] = {}
    for r in range(pattern.shape[0]):
        supp = tuple(int(c) for c in np.flatnonzero(pattern[r]))
        if not supp:
            continue
        if supp in supports:
            supports[supp].append(r)
            continue
        for c in supp:
            other = seen_cols.get(c)
            if other is not None:
                r0 = supports[other][0]
                # c is shared; find a column in one support but not the other
                extra = [c2 for c2 in supp if c2 not in other]
                if extra:
                    return NotProper((r0, r), (c, extra[0]))
                extra = [c2 for c2 in other if c2 not in supp]
                return NotProper((r0, r), (c, extra[0]))
        supports[supp] = [r]
        order.append(supp)
        for c in supp:
            seen_cols[c] = supp
    return [(tuple(supports[s]), s) for s in order]


def has_one_empty_2x2(pattern: np.ndarray) -> Optional[NotProper]:
    """Exhaustive scan for a 2x2 submatrix with exactly one empty entry."""
    p = np.asarray(pattern, dtype=bool)
    rows, cols = p.shape
    for r1, r2 in itertools.combinations(range(rows), 2):
        for c1, c2 in itertools.combinations(range(cols), 2):
            if int(p[r1, c1]) + int(p[r1, c2]) + int(p[r2, c1]) + int(p[r2, c2]) == 3:
                return NotProper((r1, r2), (c1, c2))
    return None


# selection matrices ----------------------------------------------------------------

@dataclass(frozen=True)
class SelectionMatrix:
    row_var: str
    col_var: str
    rest: Tuple[str, ...]
    domain: Domain
    entries: Tuple[Tuple[Constraint, ...], ...]

    @property
    def pattern(self) -> np.ndarray:
        return np.array([[not e.is_empty() for e in row] for row in self.entries], dtype=bool)

    def entry(self, a: Value, b: Value) -> Constraint:
        return self.entries[self.domain.index(a)][self.domain.index(b)]


def selection_matrix(c: Constraint, x: str, y: str) -> SelectionMatrix:
    if x == y:
        raise ScopeError("the two matrix variables must differ")
    i, j = c.position(x), c.position(y)
    d = c.domain.size
    rest_pos = [k for k in range(c.arity) if k not in (i, j)]
    rest = tuple(c.scope[k] for k in rest_pos)
    cells: Dict[Tuple[int, int], set] = {(a, b): set() for a in range(d) for b in range(d)}
    for t in c.tuples:
        cells[(t[i], t[j])].add(tuple(t[k] for k in rest_pos))
    entries = tuple(
        tuple(Constraint(rest, Relation(c.domain, len(rest), frozenset(cells[(a, b)]))) for b in range(d))
        for a in range(d))
    return SelectionMatrix(x, y, rest, c.domain, entries)


@dataclass(frozen=True)
class BlockPartition:
    domain: Domain
    index_blocks: Tuple[Block, ...]

    @property
    def blocks(self) -> List[Tuple[FrozenSet[Value], FrozenSet[Value]]]:
        el = self.domain.elements
        return [(frozenset(el[a] for a in rows), frozenset(el[b] for b in cols))
                for rows, cols in self.index_blocks]

    def __len__(self) -> int:
        return len(self.index_blocks)

    def value_lists(self) -> List[List[List[Value]]]:
        el = self.domain.elements
        return [[[el[a] for a in rows], [el[b] for b in cols]] for rows, cols in self.index_blocks]


def proper_block_partition(m: SelectionMatrix) -> Union[BlockPartition, NotProper]:
    res = pattern_blocks(m.pattern)
    if isinstance(res, NotProper):
        return res
    return BlockPartition(m.domain, tuple(res))


def block_constraint(c: Constraint, x: str, y: str, rows, cols) -> Constraint:
    """R restricted to x in rows and y in cols (index sets)."""
    i, j = c.position(x), c.position(y)
    rows, cols = set(rows), set(cols)
    return Constraint(c.scope, Relation(c.domain, c.arity,
                                        frozenset(t for t in c.tuples if t[i] in rows and t[j] in cols)))


# product decompositions ----------------------------------------------------------------

def _check_partition(c: Constraint, parts: Sequence[Sequence[str]]) -> List[Tuple[str, ...]]:
    parts = [tuple(p) for p in parts]
    flat = [v for p in parts for v in p]
    if any(not p for p in parts) or len(flat) != len(set(flat)) or set(flat) != set(c.scope):
        raise ScopeError(f"{parts} is not a partition of {c.scope}")
    return parts


def is_decomposable_wrt(c: Constraint, parts: Sequence[Sequence[str]]) -> bool:
    """R equals the product of its projections onto the parts."""
    parts = _check_partition(c, parts)
    projections = [project(c, p) for p in parts]
    product_size = 1
    for p in projections:
        product_size *= len(p.tuples)
    by_count = len(c.tuples) == product_size
    if product_size > _PRODUCT_LIMIT:
        # the product always contains R, so a size gap already settles it
        return by_count
    by_set = _product_set(c, projections) == c.tuples
    assert by_count == by_set, "cardinality and set checks disagree"
    return by_set


def _product_set(c: Constraint, projections: Sequence[Constraint]):
    pos = {v: i for i, v in enumerate(c.scope)}
    out = set()
    for combo in itertools.product(*[p.relation.sorted_tuples() for p in projections]):
        t = [0] * c.arity
        for p, part in zip(projections, combo):
            for v, a in zip(p.scope, part):
                t[pos[v]] = a
        out.add(tuple(t))
    return frozenset(out)


def _separable(c: Constraint, side: FrozenSet[str]) -> bool:
    rest = [v for v in c.scope if v not in side]
    a, b = project(c, side), project(c, rest)
    return len(a.tuples) * len(b.tuples) == len(c.tuples)


def factors_brute_force(c: Constraint) -> List[Tuple[str, ...]]:
    """Finest product decomposition by testing every bipartition."""
    scope = c.scope
    if len(scope) <= 1:
        return [scope] if scope else []
    if not c.tuples:
        return [(v,) for v in scope]
    first, others = scope[0], scope[1:]
    cuts = []
    for k in range(len(others) + 1):
        for extra in itertools.combinations(others, k):
            side = frozenset((first,) + extra)
            if len(side) < len(scope) and _separable(c, side):
                cuts.append(side)
    classes: List[List[str]] = []
    for v in scope:
        for cls in classes:
            w = cls[0]
            if all((v in s) == (w in s) for s in cuts):
                cls.append(v)
                break
        else:
            classes.append([v])
    return [tuple(cls) for cls in classes]


def _factors_graph(c: Constraint) -> Optional[List[Tuple[str, ...]]]:
    """Components of the 'at least two blocks' graph, or None if some matrix is not proper."""
    scope = c.scope
    parent = {v: v for v in scope}

    def root(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for x, y in itertools.combinations(scope, 2):
        blocks = pattern_blocks(selection_matrix(c, x, y).pattern)
        if isinstance(blocks, NotProper):
            return None
        if len(blocks) >= 2:
            parent[root(y)] = root(x)
    groups: Dict[str, List[str]] = {}
    for v in scope:
        groups.setdefault(root(v), []).append(v)
    return [tuple(g) for g in groups.values()]


def indecomposable_factors(c: Constraint, cross_check_arity: int = 6) -> List[Tuple[str, ...]]:
    """Finest partition of the scope into product factors, classes in scope order."""
    if c.arity <= 1:
        return [c.scope] if c.scope else []
    if not c.tuples:
        return [(v,) for v in c.scope]
    parts = _factors_graph(c)
    if parts is not None and not is_decomposable_wrt(c, parts):
        parts = None
    if parts is None:
        return factors_brute_force(c)
    if c.arity <= cross_check_arity:
        assert sorted(parts) == sorted(factors_brute_force(c)), "graph method disagrees with brute force"
    return parts


# blockwise decomposability ----------------------------------------------------------------

@dataclass(frozen=True)
class BlockwiseVerdict:
    ok: bool
    x: str
    y: str
    blocks: Optional[BlockPartition] = None
    reason: Optional[str] = None            # NOT_PROPER or UNSPLITTABLE_BLOCK
    witness: Optional[NotProper] = None
    failing_block: Optional[int] = None
    splits: Tuple[Tuple[Tuple[str, ...], Tuple[str, ...]], ...] = ()

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self, pattern: Optional[np.ndarray] = None) -> dict:
        out = {"ok": self.ok, "pair": [self.x, self.y]}
        if pattern is not None:
            out["pattern"] = [[int(v) for v in row] for row in pattern]
        if self.blocks is not None:
            out["blocks"] = self.blocks.value_lists()
        if self.reason:
            out["reason"] = self.reason
        if self.witness is not None:
            out["witness"] = {"rows": list(self.witness.rows), "cols": list(self.witness.cols)}
        if self.failing_block is not None:
            out["failing_block"] = self.failing_block
        if self.splits:
            out["splits"] = [[list(v), list(w)] for v, w in self.splits]
        return out


def _closure(start: str, partitions: Sequence[Sequence[Tuple[str, ...]]]) -> FrozenSet[str]:
    side = {start}
    changed = True
    while changed:
        changed = False
        for parts in partitions:
            for p in parts:
                if side.intersection(p) and not side.issuperset(p):
                    side.update(p)
                    changed = True
    return frozenset(side)


def _split(scope: Tuple[str, ...], side: FrozenSet[str]):
    return (tuple(v for v in scope if v in side), tuple(v for v in scope if v not in side))


def is_blockwise_decomposable(c: Constraint, x: str, y: str) -> BlockwiseVerdict:
    res = proper_block_partition(selection_matrix(c, x, y))
    if isinstance(res, NotProper):
        return BlockwiseVerdict(False, x, y, reason="NOT_PROPER", witness=res)
    splits = []
    for k, (rows, cols) in enumerate(res.index_blocks):
        block = block_constraint(c, x, y, rows, cols)
        parts = indecomposable_factors(block)
        side = _closure(x, [parts])
        if y in side:
            return BlockwiseVerdict(False, x, y, blocks=res, reason="UNSPLITTABLE_BLOCK", failing_block=k)
        splits.append(_split(c.scope, side))
    return BlockwiseVerdict(True, x, y, blocks=res, splits=tuple(splits))


def is_uniformly_blockwise_decomposable(c: Constraint, x: str, y: str) -> BlockwiseVerdict:
    """One split (V, W) with x in V, y in W shared by every block.

    The smallest such V is the closure of {x} under the factors of all
    blocks, so it is also the first one in increasing-size order.
    """
    res = proper_block_partition(selection_matrix(c, x, y))
    if isinstance(res, NotProper):
        return BlockwiseVerdict(False, x, y, reason="NOT_PROPER", witness=res)
    partitions = [indecomposable_factors(block_constraint(c, x, y, rows, cols))
                  for rows, cols in res.index_blocks]
    side = _closure(x, partitions)
    if y in side:
        return BlockwiseVerdict(False, x, y, blocks=res, reason="UNSPLITTABLE_BLOCK")
    return BlockwiseVerdict(True, x, y, blocks=res, splits=(_split(c.scope, side),))


def _all_pairs(c: Constraint, check) -> bool:
    return all(check(c, x, y).ok for x, y in itertools.combinations(c.scope, 2))


def is_constraint_blockwise_decomposable(c: Constraint) -> bool:
    return _all_pairs(c, is_blockwise_decomposable)


def is_constraint_uniformly_blockwise_decomposable(c: Constraint) -> bool:
    return _all_pairs(c, is_uniformly_blockwise_decomposable)


def first_failure(c: Constraint, uniform: bool = False) -> Optional[BlockwiseVerdict]:
    check = is_uniformly_blockwise_decomposable if uniform else is_blockwise_decomposable
    for x, y in itertools.combinations(c.scope, 2):
        v = check(c, x, y)
        if not v.ok:
            return v
    return None


def is_relation_blockwise_decomposable(r: Relation) -> bool:
    return is_constraint_blockwise_decomposable(relation_constraint(r))


def is_relation_uniformly_blockwise_decomposable(r: Relation) -> bool:
    return is_constraint_uniformly_blockwise_decomposable(relation_constraint(r))


# set versions and counting ----------------------------------------------------------------

def _set_matrix(c: Constraint, xs: Sequence[str], ys: Sequence[str], counts: bool = False):
    d = c.domain.size
    xi = [c.position(v) for v in xs]
    yi = [c.position(v) for v in ys]
    rows = list(itertools.product(range(d), repeat=len(xs)))
    cols = list(itertools.product(range(d), repeat=len(ys)))
    rpos = {t: k for k, t in enumerate(rows)}
    cpos = {t: k for k, t in enumerate(cols)}
    zi = [k for k in range(c.arity) if k not in xi and k not in yi]
    if counts:
        mat = np.zeros((len(rows), len(cols)), dtype=np.int64)
        for t in c.tuples:
            mat[rpos[tuple(t[k] for k in xi)], cpos[tuple(t[k] for k in yi)]] += 1
        return mat, rows, cols
    mat = np.zeros((len(rows), len(cols)), dtype=bool)
    for t in c.tuples:
        mat[rpos[tuple(t[k] for k in xi)], cpos[tuple(t[k] for k in yi)]] = True
    return mat, rows, cols


def _disjoint_pairs(scope: Sequence[str]):
    """Unordered pairs of disjoint non-empty variable sets."""
    k = len(scope)
    for labels in itertools.product((0, 1, 2), repeat=k):
        xs = tuple(v for v, l in zip(scope, labels) if l == 1)
        ys = tuple(v for v, l in zip(scope, labels) if l == 2)
        if xs and ys and labels.index(1) < labels.index(2):
            yield xs, ys


def is_blockwise_set_decomposable(r: Relation, max_arity: int = 5) -> bool:
    if r.arity > max_arity:
        raise ValueError(f"arity {r.arity} exceeds the configured bound {max_arity}")
    c = relation_constraint(r)
    for xs, ys in _disjoint_pairs(c.scope):
        mat, rows, cols = _set_matrix(c, xs, ys)
        blocks = pattern_blocks(mat)
        if isinstance(blocks, NotProper):
            return False
        xi = [c.position(v) for v in xs]
        yi = [c.position(v) for v in ys]
        for brows, bcols in blocks:
            rset = {rows[k] for k in brows}
            cset = {cols[k] for k in bcols}
            sel = Constraint(c.scope, Relation(r.domain, r.arity, frozenset(
                t for t in c.tuples
                if tuple(t[k] for k in xi) in rset and tuple(t[k] for k in yi) in cset)))
            for part in indecomposable_factors(sel):
                if set(part) & set(xs) and set(part) & set(ys):
                    return False
    return True


@dataclass(frozen=True)
class CountMatrix:
    rows: Tuple[Tuple[int, ...], ...]
    cols: Tuple[Tuple[int, ...], ...]
    entries: np.ndarray = field(compare=False)


def count_matrix(r: Relation, xs: Sequence[int], ys: Sequence[int]) -> CountMatrix:
    """Entry (a, b) counts the tuples of r with columns xs = a and ys = b."""
    c = relation_constraint(r)
    mat, rows, cols = _set_matrix(c, [c.scope[i] for i in xs], [c.scope[i] for i in ys], counts=True)
    return CountMatrix(tuple(rows), tuple(cols), mat)


def is_balanced(r: Relation, xs: Sequence[int], ys: Sequence[int]) -> bool:
    """Count matrix is a proper block matrix and every block has rank one."""
    if not xs or not ys or set(xs) & set(ys):
        raise ValueError("xs and ys must be disjoint and non-empty")
    m = count_matrix(r, xs, ys).entries
    blocks = pattern_blocks(m > 0)
    if isinstance(blocks, NotProper):
        return False
    for brows, bcols in blocks:
        sub = m[np.ix_(brows, bcols)].astype(object)
        # all 2x2 minors vanish: sub[i][j] * sub[0][0] == sub[i][0] * sub[0][j]
        for i in range(sub.shape[0]):
            for j in range(sub.shape[1]):
                if sub[i, j] * sub[0, 0] != sub[i, 0] * sub[0, j]:
                    return False
    return True


def binarization(c: Constraint) -> Constraint:
    """Conjunction of all projections of c onto at most two variables."""
    acc = Constraint((), Relation(c.domain, 0, frozenset({()})))
    for p in binary_projections(c):
        acc = conjoin(acc, p)
    return acc.reorder(c.scope) if c.scope else acc
