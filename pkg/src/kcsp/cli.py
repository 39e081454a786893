"""Command-line entry point: ``kcsp <command> ...``.

Reports go to stdout as text, or as JSON with ``--json``.  JSON reports
never contain timings, so identical inputs and seed give identical bytes.

Exit codes: analyze returns 0/1/2/3 for UNIFORM_ODD, NONUNIFORM_FDD, HARD
and UNKNOWN_BUDGET.  Other commands return 0 on success, 1 when a check
fails, 4 when compilation is refused and 64 on bad input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from . import coclone, compilers, diagrams, dnnf, hardgen
from .core import (Formula, FormatError, Relation, count_solutions, enumerate_solutions,
                   format_formula, parse_formula, parse_instance)

EXIT_OK, EXIT_FAIL, EXIT_REFUSED, EXIT_USAGE = 0, 1, 4, 64
ANALYZE_EXIT = {coclone.UNIFORM_ODD: 0, coclone.NONUNIFORM_FDD: 1, coclone.HARD: 2, coclone.UNKNOWN_BUDGET: 3}

# formats each class may be compiled to without --force
ALLOWED = {
    coclone.UNIFORM_ODD: {"odd", "fdd", "dnnf"},
    coclone.NONUNIFORM_FDD: {"fdd", "dnnf"},
    coclone.HARD: set(),
    coclone.UNKNOWN_BUDGET: set(),
}


class UsageError(Exception):
    pass


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _report(command: str, args, inputs: Sequence[str], result: dict) -> dict:
    return {
        "command": command,
        "inputs": {p: _digest(p) for p in inputs},
        "result": result,
        "seed": args.seed,
        "tool": {"name": "kcsp", "version": __version__},
    }


def _emit(args, report: dict, text: List[str], timings: Optional[Dict[str, float]] = None) -> None:
    if args.json:
        sys.stdout.write(json.dumps(report, indent=1, sort_keys=True) + "\n")
        return
    for line in text:
        print(line)
    for k, v in (timings or {}).items():
        print(f"time {k}: {v:.1f} ms")


def _language_of(path: str) -> coclone.Language:
    try:
        return coclone.Language.parse(_read(path))
    except FormatError as e:
        raise UsageError(f"{path}: {e}") from None


def _classifier(args) -> coclone.Classifier:
    return coclone.Classifier(budget_vars=args.budget_membership, budget_constraints=args.budget_membership)


def _formula_and_language(path: str):
    text = _read(path)
    try:
        domain, _, relations, constraints = parse_instance(text)
        f = parse_formula(text)
    except FormatError as e:
        raise UsageError(f"{path}: {e}") from None
    used = {name: relations[name] for name, _ in constraints}
    return f, coclone.Language(domain, tuple(sorted(used.items())))


# commands -------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    g = _language_of(args.language)
    t0 = time.perf_counter()
    res = _classifier(args).classify(g)
    ms = (time.perf_counter() - t0) * 1000
    report = _report("analyze", args, [args.language], res.to_json())
    text = [f"verdict: {res.verdict}"]
    text += [f"  {e}" for e in res.evidence]
    if res.witness:
        text.append(f"witness: {res.witness.get('kind')}")
        if "pp_definition" in res.witness:
            text.append(f"  pp-definition: {res.witness['pp_definition']}")
    _emit(args, report, text, {"classify": ms})
    return ANALYZE_EXIT[res.verdict]


def _compile(f: Formula, fmt: str, verdict: str, force: bool):
    """(artifact, kind, vtree) for the requested format."""
    vtree = None
    if verdict not in ALLOWED or fmt not in ALLOWED[verdict]:
        assert force
        dd = compilers.compile_obdd_baseline(f)
        route = "baseline"
    elif fmt == "odd" or (fmt == "dnnf" and verdict == coclone.UNIFORM_ODD):
        dd = compilers.compile_odd(f)
        route = "odd"
    else:
        dd = compilers.compile_fdd(f)
        route = "fdd"
    if fmt != "dnnf":
        return dd, route, None
    if dd.kind == diagrams.ODD:
        circuit, vtree = dnnf.odd_to_structured_dnnf(dd)
    else:
        circuit = dnnf.fdd_to_dnnf(dd)
    return circuit, route, vtree


def _artifact_json(obj, vtree=None) -> dict:
    if isinstance(obj, diagrams.DecisionDiagram):
        return diagrams.to_json(obj)
    out = dnnf.to_json(obj)
    if vtree is not None:
        out["vtree"] = vtree.to_json()
    return out


def _agreement(f: Formula, obj, seed: int, samples: int) -> compilers.Agreement:
    if isinstance(obj, diagrams.DecisionDiagram):
        return compilers.diagram_agrees(f, obj, seed=seed, samples=samples)
    return compilers.check_agreement(f, lambda rows: dnnf.accepts_rows(obj, rows, f.variables),
                                     seed=seed, samples=samples)


def _agreement_json(a: compilers.Agreement) -> dict:
    return {"ok": a.ok, "mode": a.mode, "checked": a.checked,
            "counterexample": {k: str(v) for k, v in a.counterexample.items()} if a.counterexample else None}


def _size(obj) -> int:
    return diagrams.size(obj) if isinstance(obj, diagrams.DecisionDiagram) else dnnf.size(obj)


def cmd_compile(args) -> int:
    f, g = _formula_and_language(args.instance)
    timings = {}
    t0 = time.perf_counter()
    cls = _classifier(args).classify(g)
    timings["classify"] = (time.perf_counter() - t0) * 1000
    allowed = args.format in ALLOWED[cls.verdict]
    result = {"format": args.format, "class": cls.verdict, "n": f.n, "domain_size": f.domain.size}
    if not allowed and not args.force:
        result.update(refused=True, witness=cls.witness,
                      reason=f"{cls.verdict} languages are not compiled to {args.format} without --force")
        report = _report("compile", args, [args.instance], result)
        _emit(args, report, [f"refused: {result['reason']}",
                             f"witness: {(cls.witness or {}).get('kind')}"], timings)
        return EXIT_REFUSED
    t0 = time.perf_counter()
    obj, route, vtree = _compile(f, args.format, cls.verdict, args.force and not allowed)
    timings["compile"] = (time.perf_counter() - t0) * 1000
    result.update(refused=False, route=route, size=_size(obj))
    if args.format in ("odd", "fdd") and route != "baseline":
        bound = compilers.odd_bound(f.n, f.domain.size) if route == "odd" else compilers.fdd_bound(f.n, f.domain.size)
        result["bound"] = round(bound, 6)
        result["within_bound"] = result["size"] <= bound + 1e-9
    code = EXIT_OK
    if not args.no_verify:
        t0 = time.perf_counter()
        agree = _agreement(f, obj, args.seed, args.samples)
        timings["verify"] = (time.perf_counter() - t0) * 1000
        result["verify"] = _agreement_json(agree)
        if not agree.ok:
            code = EXIT_FAIL
    if code == EXIT_OK and args.out:
        Path(args.out).write_text(json.dumps(_artifact_json(obj, vtree), indent=1, sort_keys=True) + "\n")
        result["out"] = args.out
    if args.emit_tree and route == "odd":
        tree = compilers.tree_structure(f)
        Path(args.emit_tree).write_text(tree.to_dot())
        result["tree"] = args.emit_tree
    report = _report("compile", args, [args.instance], result)
    text = [f"class: {cls.verdict}", f"route: {route}", f"size: {result['size']}"]
    if "bound" in result:
        text.append(f"bound: {result['bound']:.0f} ({'ok' if result['within_bound'] else 'VIOLATED'})")
    if "verify" in result:
        text.append(f"verify: {'PASS' if result['verify']['ok'] else 'FAIL'} ({result['verify']['mode']})")
    if "out" in result:
        text.append(f"wrote {args.out}")
    _emit(args, report, text, timings)
    return code


def load_artifact(path: str):
    try:
        obj = json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not JSON ({e})") from None
    kind = obj.get("format")
    if kind == "decision-diagram":
        return diagrams.from_json(obj)
    if kind == "dnnf":
        return dnnf.from_json(obj)
    raise UsageError(f"{path}: unknown artifact format {kind!r}")


def cmd_verify(args) -> int:
    f, _ = _formula_and_language(args.instance)
    obj = load_artifact(args.circuit)
    t0 = time.perf_counter()
    agree = _agreement(f, obj, args.seed, args.samples)
    ms = (time.perf_counter() - t0) * 1000
    result = _agreement_json(agree)
    if isinstance(obj, dnnf.DnnfCircuit):
        result["decomposable"] = dnnf.check_decomposable(obj) is None
    else:
        result["read_once"] = diagrams.validate(obj) is None
    report = _report("verify", args, [args.instance, args.circuit], result)
    ok = agree.ok and result.get("decomposable", True) and result.get("read_once", True)
    label = "PASS" if ok else "FAIL"
    text = [f"{label} ({agree.mode}, n={agree.checked})"]
    if agree.counterexample:
        text.append("counterexample: " + " ".join(f"{k}={v}" for k, v in agree.counterexample.items()))
    _emit(args, report, text, {"verify": ms})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_count(args) -> int:
    f, _ = _formula_and_language(args.instance)
    result = {"count": count_solutions(f)}
    if args.circuit:
        obj = load_artifact(args.circuit)
        if isinstance(obj, diagrams.DecisionDiagram):
            result["diagram_count"] = diagrams.count_models(obj)
        else:
            try:
                result["diagram_count"] = len(dnnf.accepted_by_capture(obj, args.budget_capture))
            except dnnf.BudgetExceeded:
                raise UsageError("capture budget exceeded; raise --budget-capture") from None
    report = _report("count", args, [args.instance] + ([args.circuit] if args.circuit else []), result)
    text = [f"models: {result['count']}"]
    if "diagram_count" in result:
        text.append(f"circuit models: {result['diagram_count']}")
    _emit(args, report, text)
    same = result.get("diagram_count", result["count"]) == result["count"]
    return EXIT_OK if same else EXIT_FAIL


def cmd_enum(args) -> int:
    f, _ = _formula_and_language(args.instance)
    sols = enumerate_solutions(f)
    shown = sols if args.limit is None else sols[:args.limit]
    rows = [[str(s[v]) for v in f.variables] for s in shown]
    result = {"variables": list(f.variables), "total": len(sols), "solutions": rows}
    report = _report("enum", args, [args.instance], result)
    text = [" ".join(f.variables)] + [" ".join(r) for r in rows] + [f"# {len(sols)} solutions"]
    _emit(args, report, text)
    return EXIT_OK


def _single_relation(path: str) -> Relation:
    g = _language_of(path)
    if len(g) != 1:
        raise UsageError(f"{path}: expected exactly one relation, found {len(g)}")
    return g.members()[0]


def _n_list(spec: str) -> List[int]:
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in spec.split(",") if x]
    except ValueError:
        raise UsageError(f"bad n list {spec!r}") from None


def cmd_bench(args) -> int:
    r = _single_relation(args.relation)
    compile_fn = {"baseline": compilers.compile_obdd_baseline, "odd": compilers.compile_odd,
                  "fdd": compilers.compile_fdd}[args.compiler]
    rows = hardgen.growth_bench(r, compile_fn, _n_list(args.n), seed=args.seed, r=args.degree,
                                trials=args.trials, workers=args.workers)
    csv_text = hardgen.bench_csv(rows)
    if args.out:
        Path(args.out).write_text(csv_text)
    result = {"compiler": args.compiler, "degree": args.degree, "trials": args.trials,
              "rows": [list(row.as_tuple(with_time=False)) for row in rows],
              "growth": [round(q, 6) for q in hardgen.growth_ratios(rows)]}
    report = _report("bench", args, [args.relation], result)
    _emit(args, report, csv_text.rstrip("\n").splitlines())
    return EXIT_OK


def cmd_gen_hard(args) -> int:
    r = _single_relation(args.relation)
    g = hardgen.random_matching_union(args.n, args.degree, args.seed)
    f = hardgen.build_hard_formula(g, r, args.x_pos, args.y_pos)
    text = format_formula(f)
    if args.out:
        Path(args.out).write_text(text)
    result = {"n": args.n, "degree": args.degree, "edges": len(g.edges), "max_degree": g.max_degree(),
              "variables": f.n, "constraints": len(f.constraints),
              "sha256": hashlib.sha256(text.encode()).hexdigest()}
    report = _report("gen-hard", args, [args.relation], result)
    lines = [f"{k}: {v}" for k, v in result.items()]
    if not args.out:
        lines = [text.rstrip("\n")]
    _emit(args, report, lines)
    return EXIT_OK


# parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="all randomness derives from this (default 0)")
    common.add_argument("--json", action="store_true", help="machine-readable report")
    common.add_argument("--budget-capture", type=int, default=1_000_000,
                        help="partial-assignment budget for DNNF capture")
    common.add_argument("--budget-membership", type=int, default=200_000,
                        help="indicator variable/constraint budget for co-clone membership")

    p = argparse.ArgumentParser(prog="kcsp", description="Knowledge compilation for constraint languages.")
    p.add_argument("--version", action="version", version=f"kcsp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="classify a constraint language")
    a.add_argument("language")
    a.set_defaults(fn=cmd_analyze)

    c = sub.add_parser("compile", parents=[common], help="compile an instance")
    c.add_argument("instance")
    c.add_argument("--format", choices=["odd", "fdd", "dnnf"], default="fdd")
    c.add_argument("--out")
    c.add_argument("--force", action="store_true", help="fall back to the baseline OBDD when refused")
    c.add_argument("--no-verify", action="store_true")
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--emit-tree", metavar="DOT", help="write the structure tree in DOT format")
    c.set_defaults(fn=cmd_compile)

    v = sub.add_parser("verify", parents=[common], help="check a circuit against an instance")
    v.add_argument("instance")
    v.add_argument("circuit")
    v.add_argument("--samples", type=int, default=10_000)
    v.set_defaults(fn=cmd_verify)

    n = sub.add_parser("count", parents=[common], help="count solutions")
    n.add_argument("instance")
    n.add_argument("--circuit", help="also count models of a decision diagram")
    n.set_defaults(fn=cmd_count)

    e = sub.add_parser("enum", parents=[common], help="list solutions")
    e.add_argument("instance")
    e.add_argument("--limit", type=int)
    e.set_defaults(fn=cmd_enum)

    b = sub.add_parser("bench", parents=[common], help="diagram growth over F(G_n)")
    b.add_argument("--relation", required=True, help="file holding one relation")
    b.add_argument("--compiler", choices=["baseline", "odd", "fdd"], default="baseline")
    b.add_argument("--n", default="4..14", help="range lo..hi or comma list")
    b.add_argument("--degree", type=int, default=3, help="number of random matchings")
    b.add_argument("--trials", type=int, default=9, help="graphs per n")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", help="CSV path")
    b.set_defaults(fn=cmd_bench)

    h = sub.add_parser("gen-hard", parents=[common], help="write F(G) for a random matching union G")
    h.add_argument("--relation", required=True, help="file holding one relation")
    h.add_argument("--n", type=int, required=True)
    h.add_argument("--degree", type=int, default=18)
    h.add_argument("--x-pos", type=int, default=0)
    h.add_argument("--y-pos", type=int, default=1)
    h.add_argument("--out")
    h.set_defaults(fn=cmd_gen_hard)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"kcsp: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
