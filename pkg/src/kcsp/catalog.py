"""Named relations and languages used throughout the package and its tests."""
from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from .core import Constraint, Domain, Formula, Relation

BOOL = Domain((0, 1))
ABC = Domain(("a", "b", "c"))
ABCD = Domain(("a", "b", "c", "d"))
D3 = Domain((0, 1, 2))


def blockmatrix_relation() -> Relation:
    """Four-ary relation over {a,b,c} whose (x,y) selection matrix has two blocks."""
    return Relation.from_values(ABC, [
        ("a", "a", "a", "a"),
        ("b", "b", "a", "b"),
        ("b", "b", "a", "c"),
        ("b", "b", "c", "c"),
        ("c", "b", "c", "a"),
    ])


def separating_r1() -> Relation:
    return Relation.from_values(ABCD, [
        ("a", "a", "a", "a"), ("a", "b", "a", "b"), ("b", "a", "b", "a"), ("b", "b", "b", "b"),
    ])


def separating_r2() -> Relation:
    return Relation.from_values(ABCD, [
        ("c", "c", "c", "c"), ("c", "d", "d", "c"), ("d", "c", "c", "d"), ("d", "d", "d", "d"),
    ])


def separating_relation() -> Relation:
    """Blockwise but not uniformly blockwise decomposable, columns (x, y, u, v)."""
    return Relation(ABCD, 4, separating_r1().tuples | separating_r2().tuples)


def separating_constraint() -> Constraint:
    return Constraint(("x", "y", "u", "v"), separating_relation())


def r_prime() -> Relation:
    """Projection onto (x,u): {(a,a),(b,b)} together with {c,d}^2."""
    ab = [("a", "a"), ("b", "b")]
    cd = [(p, q) for p in "cd" for q in "cd"]
    return Relation.from_values(ABCD, ab + cd)


def r_double_prime() -> Relation:
    """Projection onto (x,v): {a,b}^2 together with {(c,c),(d,d)}."""
    ab = [(p, q) for p in "ab" for q in "ab"]
    return Relation.from_values(ABCD, ab + [("c", "c"), ("d", "d")])


def r_triple_prime() -> Relation:
    """Projection onto (x,y): {a,b}^2 together with {c,d}^2."""
    ab = [(p, q) for p in "ab" for q in "ab"]
    cd = [(p, q) for p in "cd" for q in "cd"]
    return Relation.from_values(ABCD, ab + cd)


def parity() -> Relation:
    """Odd parity x + y + z = 1 (mod 2)."""
    return Relation.from_values(BOOL, [(0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)])


def implication() -> Relation:
    return Relation.from_values(BOOL, [(0, 0), (0, 1), (1, 1)])


def monotone_or() -> Relation:
    return Relation.from_values(BOOL, [(0, 1), (1, 0), (1, 1)])


def equality(domain: Domain = BOOL) -> Relation:
    return Relation.equality(domain)


def disequality(domain: Domain = BOOL) -> Relation:
    return Relation.disequality(domain)


def e_language() -> Dict[str, Relation]:
    """Equality, disequality and both constants over {0,1}."""
    return {
        "eq": Relation.equality(BOOL),
        "neq": Relation.disequality(BOOL),
        "u0": Relation.unary(BOOL, [0]),
        "u1": Relation.unary(BOOL, [1]),
    }


def separating_language() -> Dict[str, Relation]:
    return {"R": separating_relation()}


def parity_language() -> Dict[str, Relation]:
    return {"xor": parity()}


def cyclic_language() -> Dict[str, Relation]:
    """Successor graph modulo 3, equality, and two unary sets over {0,1,2}."""
    succ = Relation.from_values(D3, [(0, 1), (1, 2), (2, 0)])
    return {
        "succ": succ,
        "eq": Relation.equality(D3),
        "u0": Relation.unary(D3, [0]),
        "u01": Relation.unary(D3, [0, 1]),
    }


def r_prime_language() -> Dict[str, Relation]:
    return {"Rp": r_prime()}


def tractable_languages() -> Dict[str, Dict[str, Relation]]:
    return {
        "e": e_language(),
        "cyclic": cyclic_language(),
        "r_prime": r_prime_language(),
        "separating": separating_language(),
    }


def random_formula(rng: np.random.Generator, relations: Mapping[str, Relation], n: int, m: int,
                   prefix: str = "v") -> Formula:
    """m constraints on random scopes over n variables (distinct within a scope when possible)."""
    names = sorted(relations)
    domain = relations[names[0]].domain
    variables = tuple(f"{prefix}{i}" for i in range(n))
    cons = []
    for _ in range(m):
        r = relations[names[int(rng.integers(0, len(names)))]]
        if r.arity <= n:
            idx = rng.choice(n, size=r.arity, replace=False)
        else:
            idx = rng.integers(0, n, size=r.arity)
        cons.append(Constraint(tuple(variables[int(i)] for i in idx), r))
    return Formula(domain, variables, tuple(cons))
