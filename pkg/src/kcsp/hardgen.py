"""Lower-bound instance constructions.

Bipartite graphs from unions of random perfect matchings, the formulas
F(G) that place one constraint on every edge, induced matchings across
a vertex set, and fooling-set certificates for disjoint-copy formulas.

Vertices are ``("a", i)`` on the left and ``("b", j)`` on the right;
an edge is stored as the index pair ``(i, j)``.  Formula variables are
named ``x_a{i}``, ``x_b{j}`` and ``z_{k}_{p}`` (k-th edge in sorted
order, p-th extra column of the relation).
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .core import Constraint, Formula, Relation, evaluate_rows

Vertex = Tuple[str, int]
Edge = Tuple[int, int]

VERIFIED, REFUTED, SAMPLED_OK = "VERIFIED", "REFUTED", "SAMPLED_OK"
NO_WITNESS = "NO_WITNESS"

BENCH_COLUMNS = ("n", "vars", "constraints", "diagram_nodes", "millis")


def make_rng(seed) -> np.random.Generator:
    """The package's generator: numpy PCG64 (128-bit LCG state, XSL-RR output).

    ``seed`` is an int or a sequence of ints (hashed by SeedSequence).
    """
    return np.random.Generator(np.random.PCG64(seed))


# graphs ------------------------------------------------------------------

@dataclass(frozen=True)
class BipartiteGraph:
    n: int
    edges: Tuple[Edge, ...]

    def __post_init__(self):
        edges = tuple(sorted(set((int(i), int(j)) for i, j in self.edges)))
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {(i, j)} leaves the vertex range")
        object.__setattr__(self, "edges", edges)

    def vertices(self) -> List[Vertex]:
        return [("a", i) for i in range(self.n)] + [("b", j) for j in range(self.n)]

    def adjacency(self) -> Dict[Vertex, Set[Vertex]]:
        adj: Dict[Vertex, Set[Vertex]] = {v: set() for v in self.vertices()}
        for i, j in self.edges:
            adj[("a", i)].add(("b", j))
            adj[("b", j)].add(("a", i))
        return adj

    def degrees(self) -> Dict[Vertex, int]:
        return {v: len(nb) for v, nb in self.adjacency().items()}

    def max_degree(self) -> int:
        return max(self.degrees().values(), default=0)

    def degree_histogram(self) -> Dict[int, int]:
        hist: Dict[int, int] = {}
        for k in self.degrees().values():
            hist[k] = hist.get(k, 0) + 1
        return dict(sorted(hist.items()))

    def neighbours(self, s: Iterable[Vertex]) -> Set[Vertex]:
        adj = self.adjacency()
        s = set(s)
        out: Set[Vertex] = set()
        for v in s:
            out |= adj[v]
        return out - s


def fisher_yates(rng: np.random.Generator, n: int) -> List[int]:
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def random_matching_union(n: int, r: int, seed=0) -> BipartiteGraph:
    """Union of r seeded random perfect matchings; parallel edges collapse."""
    if n < 1 or r < 1:
        raise ValueError("need n >= 1 and r >= 1")
    rng = make_rng(seed)
    edges = []
    for _ in range(r):
        perm = fisher_yates(rng, n)
        edges.extend((i, perm[i]) for i in range(n))
    return BipartiteGraph(n, tuple(edges))


def complete_bipartite(n: int) -> BipartiteGraph:
    return BipartiteGraph(n, tuple(itertools.product(range(n), repeat=2)))


def perfect_matching(n: int) -> BipartiteGraph:
    return BipartiteGraph(n, tuple((i, i) for i in range(n)))


# expansion ----------------------------------------------------------------

@dataclass(frozen=True)
class Expansion:
    verdict: str
    witness: Optional[FrozenSet[Vertex]] = None
    neighbourhood: Optional[int] = None
    checked: int = 0


def expansion_violated(g: BipartiteGraph, s: Iterable[Vertex], c: float) -> bool:
    """True iff |N(s)| > c|s| fails."""
    s = frozenset(s)
    return not len(g.neighbours(s)) > c * len(s)


def verify_expansion(g: BipartiteGraph, alpha: float = 0.2, c: float = 1.1,
                     budget: int = 10 ** 6, samples: int = 20_000, seed: int = 0) -> Expansion:
    """Check |N(S)| > c|S| for all one-sided S with 1 <= |S| <= alpha*n.

    Exhaustive when the number of such subsets fits the budget; otherwise
    random subsets are tested and a clean run is reported as SAMPLED_OK.
    """
    kmax = int(math.floor(alpha * g.n + 1e-9))
    adj = g.adjacency()
    total = 2 * sum(math.comb(g.n, k) for k in range(1, kmax + 1))

    def test(side: str, idx: Sequence[int]):
        s = [(side, i) for i in idx]
        nb = set()
        for v in s:
            nb |= adj[v]
        if not len(nb) > c * len(s):
            return Expansion(REFUTED, frozenset(s), len(nb))
        return None

    if total <= budget:
        for side in ("a", "b"):
            for k in range(1, kmax + 1):
                for idx in itertools.combinations(range(g.n), k):
                    hit = test(side, idx)
                    if hit is not None:
                        return Expansion(hit.verdict, hit.witness, hit.neighbourhood, total)
        return Expansion(VERIFIED, checked=total)
    rng = make_rng(seed)
    for _ in range(samples):
        side = "a" if rng.integers(0, 2) == 0 else "b"
        k = int(rng.integers(1, kmax + 1))
        idx = sorted(int(i) for i in rng.choice(g.n, size=k, replace=False))
        hit = test(side, idx)
        if hit is not None:
            return Expansion(hit.verdict, hit.witness, hit.neighbourhood, samples)
    return Expansion(SAMPLED_OK, checked=samples)


# induced matchings ----------------------------------------------------------

def is_induced_matching(g: BipartiteGraph, matching: Iterable[Edge]) -> bool:
    matching = list(matching)
    ends = [("a", i) for i, _ in matching] + [("b", j) for _, j in matching]
    if len(set(ends)) != len(ends):
        return False
    left = {i for i, _ in matching}
    right = {j for _, j in matching}
    chosen = set(matching)
    return all((i, j) in chosen for i, j in g.edges if i in left and j in right)


def greedy_induced_matching(g: BipartiteGraph, x: Iterable[Vertex]) -> List[Edge]:
    """A greedy matching of X-crossing edges, thinned greedily to an induced one."""
    x = set(x)
    crossing = [(i, j) for i, j in g.edges if (("a", i) in x) != (("b", j) in x)]
    used: Set[Vertex] = set()
    matching = []
    for i, j in crossing:
        if ("a", i) not in used and ("b", j) not in used:
            matching.append((i, j))
            used |= {("a", i), ("b", j)}
    adj = g.adjacency()
    blocked: Set[Vertex] = set()
    induced = []
    for i, j in matching:
        u, v = ("a", i), ("b", j)
        if u in blocked or v in blocked:
            continue
        induced.append((i, j))
        # the endpoints and their neighbours may not touch later chosen edges
        blocked |= {u, v} | adj[u] | adj[v]
    assert is_induced_matching(g, induced)
    return induced


# formulas ---------------------------------------------------------------------

def x_name(v: Vertex) -> str:
    return f"x_{v[0]}{v[1]}"


def build_hard_formula(g: BipartiteGraph, r: Relation, x_pos: int = 0, y_pos: int = 1) -> Formula:
    """F(G): R(x_u, x_v, z_e) for every edge, with fresh z variables per edge."""
    if r.arity < 2:
        raise ValueError("the relation needs arity at least two")
    if x_pos == y_pos or not (0 <= x_pos < r.arity and 0 <= y_pos < r.arity):
        raise ValueError("x_pos and y_pos must be distinct column indices")
    rest = [p for p in range(r.arity) if p not in (x_pos, y_pos)]
    variables = [x_name(v) for v in g.vertices()]
    cons = []
    for k, (i, j) in enumerate(g.edges):
        scope = [""] * r.arity
        scope[x_pos], scope[y_pos] = x_name(("a", i)), x_name(("b", j))
        for p_idx, p in enumerate(rest):
            scope[p] = f"z_{k}_{p_idx}"
            variables.append(scope[p])
        cons.append(Constraint(tuple(scope), r))
    return Formula(r.domain, tuple(variables), tuple(cons))


# fooling sets --------------------------------------------------------------------

@dataclass(frozen=True)
class FoolingSet:
    a: Tuple[int, ...]                 # tuples of r witnessing the exchange condition
    b: Tuple[int, ...]
    x_pos: int
    y_pos: int
    members: np.ndarray                # 2^n rows of value indices, columns in formula order

    def __len__(self) -> int:
        return int(self.members.shape[0])


def _swaps(a, b, x_pos: int, y_pos: int, z_left: Sequence[int], arity: int):
    """a on x and z_left with b elsewhere, together with the mirror image."""
    left = set(z_left) | {x_pos}
    s1 = tuple(a[p] if p in left else b[p] for p in range(arity))
    s2 = tuple(b[p] if p in left else a[p] for p in range(arity))
    return s1, s2


def is_fooling_pair(r: Relation, a, b, x_pos: int, y_pos: int) -> bool:
    """Every split of the other columns breaks at least one of the two swaps."""
    z = [p for p in range(r.arity) if p not in (x_pos, y_pos)]
    for k in range(len(z) + 1):
        for z_left in itertools.combinations(z, k):
            s1, s2 = _swaps(a, b, x_pos, y_pos, z_left, r.arity)
            if s1 in r.tuples and s2 in r.tuples:
                return False
    return True


def find_fooling_pair(r: Relation, x_pos: int = 0, y_pos: int = 1):
    rows = r.sorted_tuples()
    for a, b in itertools.combinations(rows, 2):
        if is_fooling_pair(r, a, b, x_pos, y_pos):
            return a, b
    return None


def copies_formula(r: Relation, x_pos: int, y_pos: int, n: int) -> Formula:
    """F_n: n copies of r on disjoint variables x_i, y_i, z_i_p."""
    rest = [p for p in range(r.arity) if p not in (x_pos, y_pos)]
    variables, cons = [], []
    for i in range(n):
        scope = [""] * r.arity
        scope[x_pos], scope[y_pos] = f"x_{i}", f"y_{i}"
        for p_idx, p in enumerate(rest):
            scope[p] = f"z_{i}_{p_idx}"
        variables.extend(scope)
        cons.append(Constraint(tuple(scope), r))
    return Formula(r.domain, tuple(variables), tuple(cons))


def fooling_family(r: Relation, x_pos: int = 0, y_pos: int = 1, n: int = 1):
    """(F_n, fooling set) for a witness pair of r, or NO_WITNESS."""
    if n < 1:
        raise ValueError("n must be at least 1")
    pair = find_fooling_pair(r, x_pos, y_pos)
    if pair is None:
        return NO_WITNESS
    a, b = pair
    f = copies_formula(r, x_pos, y_pos, n)
    k = r.arity
    # copy i takes a or b according to bit i of the member index
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    choice = np.stack([np.array(a), np.array(b)])            # (2, k)
    members = choice[bits].reshape(2 ** n, n * k)
    return f, FoolingSet(tuple(a), tuple(b), x_pos, y_pos, members)


def crosswise_partition(f: Formula, n: int, seed: int = 0) -> FrozenSet[str]:
    """One side of a partition with x_i and y_i apart; z variables fall on random sides."""
    rng = make_rng(seed)
    side = set()
    for i in range(n):
        if rng.integers(0, 2):
            side.add(f"x_{i}")
        else:
            side.add(f"y_{i}")
    for v in f.variables:
        if v.startswith("z_") and rng.integers(0, 2):
            side.add(v)
    return frozenset(side)


@dataclass(frozen=True)
class FoolingCertificate:
    ok: bool
    members: int
    pairs_checked: int
    failure: Optional[Tuple[int, int]] = None
    reason: str = ""


def certify_fooling(f: Formula, fs: FoolingSet, part: Iterable[str], batch: int = 1 << 16) -> FoolingCertificate:
    """Independent check: every member satisfies f and no two members survive the exchange.

    Two members d, d' share a rectangle over (part, rest) only if
    d|part + d'|rest and d'|part + d|rest both satisfy f.
    """
    part = frozenset(part)
    for v in part:
        if v not in f.variables:
            raise ValueError(f"unknown variable {v!r}")
    n_copies = sum(1 for v in f.variables if v.startswith("x_"))
    for i in range(n_copies):
        if (f"x_{i}" in part) == (f"y_{i}" in part):
            return FoolingCertificate(False, len(fs), 0, reason=f"x_{i} and y_{i} are on the same side")
    m = fs.members
    if not evaluate_rows(f, m).all():
        bad = int(np.flatnonzero(~evaluate_rows(f, m))[0])
        return FoolingCertificate(False, len(fs), 0, (bad, bad), "member violates the formula")
    mask = np.array([v in part for v in f.variables])
    n = m.shape[0]
    checked = 0
    step = max(1, batch // max(n, 1))
    for lo in range(0, n, step):
        idx = np.arange(lo, min(n, lo + step))
        ii, jj = np.meshgrid(idx, np.arange(n), indexing="ij")
        keep = ii < jj
        ii, jj = ii[keep], jj[keep]
        if ii.size == 0:
            continue
        s1 = np.where(mask, m[ii], m[jj])
        s2 = np.where(mask, m[jj], m[ii])
        both = evaluate_rows(f, s1) & evaluate_rows(f, s2)
        checked += ii.size
        if both.any():
            k = int(np.flatnonzero(both)[0])
            return FoolingCertificate(False, n, checked, (int(ii[k]), int(jj[k])), "exchange stays satisfying")
    return FoolingCertificate(True, n, checked)


def fooling_epsilon(eps: float, alpha: float, d_x: int, d_y: int, r_size: int, degree: int) -> float:
    """The lower-bound exponent of the non-decomposable case, reported for context only."""
    return 0.5 * eps * alpha * math.log1p(1 / (d_x * d_y * r_size ** (2 * degree))) / math.log(2)


# benchmarks -----------------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    n: int
    vars: int
    constraints: int
    diagram_nodes: int
    millis: float

    def as_tuple(self, with_time: bool = True):
        t = (self.n, self.vars, self.constraints, self.diagram_nodes)
        return t + (round(self.millis, 3),) if with_time else t


def bench_graph(n: int, r: int, seed: int, trial: int) -> BipartiteGraph:
    """The graph behind one bench row; keyed by (seed, n, trial) so rows do not depend on n_list."""
    return random_matching_union(n, r, (seed, n, trial))


def _bench_one(args) -> BenchRow:
    relation, compile_fn, n, trial, seed, r, x_pos, y_pos, size_fn = args
    f = build_hard_formula(bench_graph(n, r, seed, trial), relation, x_pos, y_pos)
    t0 = time.perf_counter()
    dd = compile_fn(f)
    millis = (time.perf_counter() - t0) * 1000
    return BenchRow(n, f.n, len(f.constraints), int(size_fn(dd)), millis)


def growth_bench(relation: Relation, compile_fn: Callable, n_list: Sequence[int], seed: int = 0,
                 r: int = 3, x_pos: int = 0, y_pos: int = 1, size_fn: Optional[Callable] = None,
                 trials: int = 1, workers: int = 1) -> List[BenchRow]:
    """Compile F(G) for ``trials`` graphs per n, one instance per job.

    Rows come back sorted by n, then trial, whatever the number of workers.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if size_fn is None:
        from .diagrams import size as size_fn
    jobs = [(relation, compile_fn, n, t, seed, r, x_pos, y_pos, size_fn)
            for n in sorted(set(n_list)) for t in range(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map keeps job order, so the merge is deterministic
            return list(pool.map(_bench_one, jobs))
    return [_bench_one(j) for j in jobs]


def bench_csv(rows: Sequence[BenchRow], with_time: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS if with_time else BENCH_COLUMNS[:-1])
    for row in rows:
        w.writerow(row.as_tuple(with_time))
    return buf.getvalue()


def growth_means(rows: Sequence[BenchRow]) -> List[Tuple[int, float]]:
    """Geometric mean of diagram size per n."""
    by_n: Dict[int, List[int]] = {}
    for row in rows:
        by_n.setdefault(row.n, []).append(max(row.diagram_nodes, 1))
    return [(n, float(np.exp(np.mean(np.log(v))))) for n, v in sorted(by_n.items())]


def growth_ratios(rows: Sequence[BenchRow]) -> List[float]:
    """Step ratios of the per-n geometric means."""
    means = [m for _, m in growth_means(rows)]
    return [b / a for a, b in zip(means, means[1:])]
