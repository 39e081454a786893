#!/usr/bin/env python3
"""Fooling-set certificate for the separating relation and baseline OBDD growth on F(G_n)."""
import argparse

from kcsp import catalog as cat
from kcsp import hardgen as hg
from kcsp.compilers import compile_obdd_baseline


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--copies", type=int, default=8)
    ap.add_argument("--max-n", type=int, default=11)
    ap.add_argument("--trials", type=int, default=3)
    args = ap.parse_args()

    f, fs = hg.fooling_family(cat.separating_relation(), 0, 1, args.copies)
    cert = hg.certify_fooling(f, fs, hg.crosswise_partition(f, args.copies, 0))
    print(f"fooling set: {cert.members} members, {cert.pairs_checked} pairs checked, ok={cert.ok}")

    rows = hg.growth_bench(cat.monotone_or(), compile_obdd_baseline, range(4, args.max_n + 1),
                           trials=args.trials)
    means = hg.growth_means(rows)
    print("n  mean_nodes  ratio")
    prev = None
    for n, m in means:
        ratio = f"{m / prev:.2f}" if prev else "-"
        print(f"{n:2d} {m:11.1f}  {ratio}")
        prev = m


if __name__ == "__main__":
    main()
