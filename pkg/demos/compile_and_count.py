#!/usr/bin/env python3
"""Compile random instances with each compiler and compare model counts and sizes."""
import argparse

import numpy as np

from kcsp import catalog as cat
from kcsp import dnnf
from kcsp.compilers import compile_fdd, compile_obdd_baseline, compile_odd, fdd_bound, odd_bound
from kcsp.core import count_solutions
from kcsp.diagrams import count_models, size


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--m", type=int, default=7)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.Generator(np.random.PCG64(args.seed))
    print("language    models  odd  fdd  baseline  dnnf  odd_bound  fdd_bound")
    for name in ("e", "cyclic", "r_prime", "separating"):
        f = cat.random_formula(rng, cat.tractable_languages()[name], args.n, args.m)
        want = count_solutions(f)
        fdd = compile_fdd(f)
        base = compile_obdd_baseline(f)
        odd = compile_odd(f) if name != "separating" else None
        assert count_models(fdd) == count_models(base) == want
        d = f.domain.size
        odd_size = size(odd) if odd is not None else "-"
        print(f"{name:10s} {want:7d} {odd_size!s:>4} {size(fdd):4d} {size(base):9d} "
              f"{dnnf.size(dnnf.fdd_to_dnnf(fdd)):5d} {odd_bound(f.n, d):10.0f} {fdd_bound(f.n, d):10d}")


if __name__ == "__main__":
    main()
