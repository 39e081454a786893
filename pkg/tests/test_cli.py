import json
import os
from pathlib import Path

import pytest

from kcsp import cli, diagrams

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"

# commands whose JSON reports are pinned byte for byte
GOLDEN_RUNS = {
    "analyze_e": ["analyze", "e.lang"],
    "analyze_separating": ["analyze", "separating.lang"],
    "analyze_parity": ["analyze", "parity.lang"],
    "compile_e_odd": ["compile", "e_instance.csp", "--format", "odd"],
    "compile_separating_fdd": ["compile", "separating_instance.csp", "--format", "fdd"],
    "compile_parity_refused": ["compile", "parity_instance.csp", "--format", "fdd"],
    "count_e": ["count", "e_instance.csp"],
    "enum_parity": ["enum", "parity_instance.csp"],
    "gen_hard_or": ["gen-hard", "--relation", "or.rel", "--n", "6", "--degree", "3"],
    "bench_or_small": ["bench", "--relation", "or.rel", "--n", "4..7", "--trials", "2"],
}


@pytest.fixture
def in_data(monkeypatch):
    monkeypatch.chdir(DATA)


def run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, argv):
    code, out = run(capsys, argv + ["--json"])
    return code, out, json.loads(out)


@pytest.mark.parametrize("name, argv", sorted(GOLDEN_RUNS.items()))
def test_golden_reports(in_data, capsys, name, argv):
    code, out, _ = run_json(capsys, argv)
    want = json.loads((GOLDEN / f"{name}.json").read_text())
    assert code == want["exit"]
    assert out == want["stdout"]


@pytest.mark.parametrize("name, argv", sorted(GOLDEN_RUNS.items()))
def test_reruns_are_byte_identical(in_data, capsys, name, argv):
    a = run_json(capsys, argv)[:2]
    b = run_json(capsys, argv)[:2]
    assert a == b


def test_analyze_exit_codes(in_data, capsys):
    assert run(capsys, ["analyze", "e.lang"])[0] == 0
    assert run(capsys, ["analyze", "separating.lang"])[0] == 1
    code, out = run(capsys, ["analyze", "parity.lang"])
    assert code == 2 and "verdict: HARD" in out


def test_unknown_budget_exit(in_data, capsys):
    code, _, rep = run_json(capsys, ["analyze", "separating.lang", "--budget-membership", "10"])
    assert code in (1, 3)
    assert rep["result"]["verdict"] in ("NONUNIFORM_FDD", "UNKNOWN_BUDGET")


def test_compile_writes_verified_artifact(in_data, capsys, tmp_path):
    out = tmp_path / "e.json"
    code, _, rep = run_json(capsys, ["compile", "e_instance.csp", "--format", "odd", "--out", str(out)])
    res = rep["result"]
    assert code == 0 and res["verify"]["ok"] and res["within_bound"]
    dd = diagrams.from_json(json.loads(out.read_text()))
    assert diagrams.size(dd) == res["size"]
    assert run(capsys, ["verify", "e_instance.csp", str(out)])[0] == 0
    code, _, rep = run_json(capsys, ["count", "e_instance.csp", "--circuit", str(out)])
    assert code == 0 and rep["result"]["count"] == rep["result"]["diagram_count"]


def test_compile_dnnf_routes(in_data, capsys, tmp_path):
    for inst, route in (("e_instance.csp", "odd"), ("separating_instance.csp", "fdd")):
        out = tmp_path / f"{inst}.dnnf.json"
        code, _, rep = run_json(capsys, ["compile", inst, "--format", "dnnf", "--out", str(out)])
        assert code == 0 and rep["result"]["route"] == route
        code, _, rep = run_json(capsys, ["verify", inst, str(out)])
        assert code == 0 and rep["result"]["decomposable"]
        code, _, rep = run_json(capsys, ["count", inst, "--circuit", str(out)])
        assert code == 0


def test_odd_refused_for_nonuniform(in_data, capsys):
    code, _, rep = run_json(capsys, ["compile", "separating_instance.csp", "--format", "odd"])
    assert code == cli.EXIT_REFUSED and rep["result"]["refused"]


def test_hard_refusal_and_force(in_data, capsys, tmp_path):
    code, _, rep = run_json(capsys, ["compile", "parity_instance.csp", "--format", "odd"])
    assert code == cli.EXIT_REFUSED
    assert rep["result"]["witness"]["kind"] == "generator_not_blockwise"
    out = tmp_path / "p.json"
    code, _, rep = run_json(capsys, ["compile", "parity_instance.csp", "--format", "odd", "--force",
                                     "--out", str(out)])
    assert code == 0 and rep["result"]["route"] == "baseline" and rep["result"]["verify"]["ok"]
    assert out.exists()


def test_verify_flipped_sink_fails(in_data, capsys, tmp_path):
    out = tmp_path / "e.json"
    run(capsys, ["compile", "e_instance.csp", "--format", "fdd", "--out", str(out)])
    obj = json.loads(out.read_text())
    dd = diagrams.from_json(obj)
    for i in dd.reachable():
        var, kids = dd.nodes[i]
        if 0 in kids:
            j = kids.index(0)
            nodes = list(dd.nodes)
            nodes[i] = (var, kids[:j] + (1,) + kids[j + 1:])
            bad = diagrams.DecisionDiagram(dd.domain, dd.variables, tuple(nodes), dd.source, dd.kind, dd.order)
            if diagrams.count_models(bad) != diagrams.count_models(dd):
                break
    flipped = tmp_path / "bad.json"
    flipped.write_text(json.dumps(diagrams.to_json(bad)))
    code, text = run(capsys, ["verify", "e_instance.csp", str(flipped)])
    assert code == cli.EXIT_FAIL
    assert text.startswith("FAIL") and "counterexample:" in text
    code, _, rep = run_json(capsys, ["count", "e_instance.csp", "--circuit", str(flipped)])
    assert code == cli.EXIT_FAIL


def test_verify_sampled_mode(in_data, capsys, tmp_path):
    out = tmp_path / "chain.json"
    code, _, rep = run_json(capsys, ["compile", "long_chain.csp", "--format", "odd", "--out", str(out)])
    assert code == 0 and rep["result"]["verify"]["mode"] == "sampled"
    code, text = run(capsys, ["verify", "long_chain.csp", str(out)])
    assert code == 0 and text.startswith("PASS (sampled, n=10000)")


def test_no_verify_still_writes(in_data, capsys, tmp_path):
    out = tmp_path / "x.json"
    code, _, rep = run_json(capsys, ["compile", "e_instance.csp", "--no-verify", "--out", str(out)])
    assert code == 0 and "verify" not in rep["result"] and out.exists()


def test_emit_tree(in_data, capsys, tmp_path):
    dot = tmp_path / "t.dot"
    run(capsys, ["compile", "e_instance.csp", "--format", "odd", "--emit-tree", str(dot)])
    assert dot.read_text().startswith("graph")


def test_enum_limit(in_data, capsys):
    code, _, rep = run_json(capsys, ["enum", "parity_instance.csp", "--limit", "2"])
    assert code == 0 and rep["result"]["total"] == 4 and len(rep["result"]["solutions"]) == 2


def test_bench_csv_file(in_data, capsys, tmp_path):
    out = tmp_path / "b.csv"
    code, _ = run(capsys, ["bench", "--relation", "or.rel", "--n", "4,5", "--trials", "1", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert code == 0 and lines[0] == "n,vars,constraints,diagram_nodes,millis" and len(lines) == 3


def test_gen_hard_file_round_trip(in_data, capsys, tmp_path):
    out = tmp_path / "f.csp"
    run(capsys, ["gen-hard", "--relation", "separating.lang", "--n", "5", "--degree", "2", "--out", str(out)])
    code, _, rep = run_json(capsys, ["count", str(out)])
    assert code == 0 and rep["result"]["count"] > 0


def test_usage_errors(in_data, capsys, tmp_path):
    assert cli.main(["analyze", "missing.lang"]) == cli.EXIT_USAGE
    bad = tmp_path / "bad.lang"
    bad.write_text("domain: 0 1\nrel X arity=2\n0 0\n")
    assert cli.main(["analyze", str(bad)]) == cli.EXIT_USAGE
    assert cli.main(["bench", "--relation", "e.lang"]) == cli.EXIT_USAGE
    assert cli.main(["bench", "--relation", "or.rel", "--n", "a..b"]) == cli.EXIT_USAGE
    junk = tmp_path / "junk.json"
    junk.write_text('{"format": "other"}')
    assert cli.main(["verify", "e_instance.csp", str(junk)]) == cli.EXIT_USAGE
    assert "kcsp:" in capsys.readouterr().err


def test_text_reports_carry_timings(in_data, capsys):
    _, out = run(capsys, ["analyze", "e.lang"])
    assert "time classify:" in out
    _, out = run(capsys, ["analyze", "e.lang", "--json"])
    assert "time" not in json.loads(out)["result"]


def write_goldens():
    """Regenerate the pinned reports; run by hand after an intended change."""
    os.chdir(DATA)
    import contextlib
    import io
    for name, argv in GOLDEN_RUNS.items():
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli.main(argv + ["--json"])
        (GOLDEN / f"{name}.json").write_text(json.dumps({"exit": code, "stdout": buf.getvalue()}, indent=1) + "\n")


if __name__ == "__main__":
    write_goldens()
