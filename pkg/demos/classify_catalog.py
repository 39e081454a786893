#!/usr/bin/env python3
"""Classify the catalog languages and print the verdict with its witness kind."""
from kcsp import catalog as cat
from kcsp.coclone import Language, classify_language, relation_name

LANGS = {
    "e (=, !=, 0, 1)": cat.e_language(),
    "cyclic over {0,1,2}": cat.cyclic_language(),
    "r_prime": cat.r_prime_language(),
    "separating": cat.separating_language(),
    "odd parity": cat.parity_language(),
    "monotone or": {"or": cat.monotone_or()},
}


def main():
    for name, rels in LANGS.items():
        res = classify_language(Language.of(rels))
        kind = res.witness["kind"] if res.witness else "-"
        print(f"{name:22s} {res.verdict:16s} witness={kind}")
        if res.g2 is not None and len(res.g2.relations) <= 8:
            print(" " * 23 + "Pi2: " + ", ".join(relation_name(r) for r in res.g2.relations))


if __name__ == "__main__":
    main()
