"""The command-line driver, exercised in-process through main(argv)."""

import csv
import io
import json
import os
import re

import pytest

from bikind.cli import main

from helpers import fixture_path

TRACE_LINE = re.compile(r"^k=\d+ pc=\w+( [A-Za-z_]\w*=-?\d+)*( \(join\))?$")


def _json_payload(out: str) -> dict:
    return json.loads(out[out.index("{"):])


# ---------------------------------------------------------------------------
# verify


def test_verify_safe_program_exits_zero(capsys):
    rc = main(["verify", fixture_path("eca_safe_small")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "safe at iteration 1 (inductive-step)" in out
    assert "strategy=bkind" in out and "invariants=intervals" in out


def test_verify_unsafe_program_exits_ten_with_trace(capsys):
    rc = main(["verify", fixture_path("counter_3"), "--strategy", "kind"])
    out = capsys.readouterr().out
    assert rc == 10
    assert "unsafe at iteration 4" in out
    lines = out.splitlines()
    states = [l for l in lines if l.startswith("k=")]
    assert states and all(TRACE_LINE.match(l) for l in states)
    assert states[0].startswith("k=0 pc=entry x=0")
    assert states[-1].endswith("pc=error x=3")
    assert "(join)" not in out  # plain strategy never concatenates


def test_verify_bkind_trace_marks_the_join(capsys):
    rc = main(["verify", fixture_path("counter_5")])
    out = capsys.readouterr().out
    assert rc == 10
    assert "unsafe at iteration 4" in out
    joined = [l for l in out.splitlines() if l.endswith("(join)")]
    assert len(joined) == 1
    assert TRACE_LINE.match(joined[0])


def test_verify_unknown_exits_two(capsys):
    rc = main(["verify", fixture_path("eca_safe_small"), "--strategy", "kind",
               "--invariants", "none", "--k-max", "2"])
    out = capsys.readouterr().out
    assert rc == 2
    assert "unknown at iteration 2" in out


def test_verify_json_report(capsys):
    rc = main(["verify", fixture_path("eca_unsafe_small"), "--json"])
    assert rc == 10
    doc = _json_payload(capsys.readouterr().out)
    assert doc["schema"] == 1
    assert doc["verdict"] == "unsafe"
    assert doc["strategy"] == "bkind" and doc["invariants"] == "intervals"
    assert doc["iterations_used"] == 4
    assert doc["solver"] == "builtin"
    assert doc["proved_by"] is None
    assert doc["wall_ms"] >= 0
    assert {c["check"] for c in doc["checks"]} <= {"base", "forward",
                                                   "inductive", "match"}
    trace = doc["trace"]
    assert trace["kind"] == "full" and trace["join"] is not None
    assert trace["states"][0]["pc"] == "entry"
    assert trace["states"][-1]["pc"] == "error"
    assert all(set(st) == {"k", "pc", "values"} for st in trace["states"])


def test_verify_json_safe_has_null_trace(capsys):
    rc = main(["verify", fixture_path("counter_5_safe"), "--json"])
    assert rc == 0
    doc = _json_payload(capsys.readouterr().out)
    assert doc["verdict"] == "safe"
    assert doc["trace"] is None
    assert doc["proved_by"] == "inductive-step"


def test_verify_dump_invariants_text(capsys):
    rc = main(["verify", fixture_path("eca_safe_small"), "--dump-invariants"])
    out = capsys.readouterr().out
    assert rc == 0
    body = out.split("invariants:", 1)[1]
    doc = json.loads(body[:body.index("\n}") + 2])
    assert doc == {"H3": {"input": [0, 255], "s": [1, 5]}}


def test_verify_dump_invariants_json(capsys):
    rc = main(["verify", fixture_path("eca_safe_small"), "--json",
               "--dump-invariants"])
    assert rc == 0
    doc = _json_payload(capsys.readouterr().out)
    assert doc["intervals"] == {"H3": {"input": [0, 255], "s": [1, 5]}}


def test_verify_dump_smt_writes_queries(tmp_path, capsys):
    dump = tmp_path / "queries"
    rc = main(["verify", fixture_path("counter_3"), "--strategy", "kind",
               "--dump-smt", str(dump)])
    capsys.readouterr()
    assert rc == 10
    names = sorted(os.listdir(dump))
    assert names and all(re.match(r"q\d{3}-(base|forward|inductive|match)-k\d+\.smt2$", n)
                         for n in names)
    first = (dump / names[0]).read_text()
    assert first.startswith("(set-logic QF_BV)")
    assert "(check-sat)" in first


def test_verify_cex_pool_flag(capsys):
    rc = main(["verify", fixture_path("eca_unsafe_small"), "--cex-pool"])
    out = capsys.readouterr().out
    assert rc == 10 and "unsafe at iteration 4" in out


def test_verify_external_solver(capsys):
    import sys
    spec = f"cmd:{sys.executable} -m bikind.smtshim"
    rc = main(["verify", fixture_path("counter_3"), "--solver", spec])
    out = capsys.readouterr().out
    assert rc == 10
    assert "solver=" in out


# ---------------------------------------------------------------------------
# error handling


def test_missing_file_is_a_usage_error(capsys):
    rc = main(["verify", "/no/such/file.bik"])
    err = capsys.readouterr().err
    assert rc == 1 and err.strip()


def test_source_errors_are_reported_with_position(tmp_path, capsys):
    bad = tmp_path / "bad.bik"
    bad.write_text("var x u8 = 0;")
    rc = main(["verify", str(bad)])
    err = capsys.readouterr().err
    assert rc == 1
    assert "syntax" in err and "1:" in err


def test_unknown_solver_spec_fails_fast(capsys):
    rc = main(["verify", fixture_path("counter_3"), "--solver", "z3"])
    assert rc == 1
    rc = main(["verify", fixture_path("counter_3"),
               "--solver", "cmd:/no/such/solver"])
    assert rc == 1
    capsys.readouterr()


def test_usage_errors_exit_one(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["verify"]) == 1
    assert main(["verify", fixture_path("counter_3"), "--strategy", "x"]) == 1
    capsys.readouterr()


# ---------------------------------------------------------------------------
# oracle


def test_oracle_reports_bug_depth(capsys):
    rc = main(["oracle", fixture_path("counter_5"), "--depth", "10"])
    doc = _json_payload(capsys.readouterr().out)
    assert rc == 0
    assert set(doc) == {"verdict", "k_star", "trace"}
    assert doc["verdict"] == "unsafe" and doc["k_star"] == 6
    assert doc["trace"]["states"][-1]["pc"] == "error"


def test_oracle_reports_caps(capsys):
    rc = main(["oracle", fixture_path("eca_safe"), "--state-cap", "5000"])
    doc = _json_payload(capsys.readouterr().out)
    assert rc == 0
    assert doc == {"verdict": "cap-exceeded", "k_star": None, "trace": None}


def test_oracle_safe_program(capsys):
    rc = main(["oracle", fixture_path("counter_3_safe")])
    doc = _json_payload(capsys.readouterr().out)
    assert rc == 0
    assert doc["verdict"] == "safe" and doc["k_star"] is None


# ---------------------------------------------------------------------------
# bench


def _write_manifest(tmp_path, rows, name="m.csv"):
    lines = ["path,expected_verdict,expected_k_star"]
    lines += [",".join(str(c) for c in row) for row in rows]
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return str(p)


def _parse_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def _bucket(summary: str, name: str) -> int:
    m = re.search(rf"^{re.escape(name)}\s+(\d+)\s*$", summary, re.M)
    assert m, f"no {name!r} row in summary:\n{summary}"
    return int(m.group(1))


def test_bench_full_grid(tmp_path, capsys):
    manifest = _write_manifest(tmp_path, [
        (fixture_path("counter_3"), "unsafe", 4),
        (fixture_path("counter_3_safe"), "safe", ""),
    ])
    rc = main(["bench", manifest, "--k-max", "6"])
    cap = capsys.readouterr()
    assert rc == 0
    rows = _parse_csv(cap.out)
    assert len(rows) == 8  # 2 files x 2 strategies x 2 invariant modes
    assert list(rows[0]) == ["file", "strategy", "invariants", "verdict",
                             "expected", "iterations", "wall_ms"]
    by_cell = {(r["file"], r["strategy"], r["invariants"]): r for r in rows}
    assert len(by_cell) == 8
    bug, safe_twin = fixture_path("counter_3"), fixture_path("counter_3_safe")
    unsafe = by_cell[(bug, "bkind", "intervals")]
    assert unsafe["verdict"] == "unsafe" and unsafe["iterations"] == "3"
    assert by_cell[(bug, "kind", "none")]["iterations"] == "4"
    safe = by_cell[(safe_twin, "kind", "intervals")]
    assert safe["verdict"] == "safe" and safe["expected"] == "safe"
    assert _bucket(cap.err, "incorrect proofs") == 0
    assert _bucket(cap.err, "incorrect alarms") == 0
    assert _bucket(cap.err, "correct alarms") == 4
    assert _bucket(cap.err, "correct proofs") == 4


def test_bench_writes_csv_to_file_with_out(tmp_path, capsys):
    manifest = _write_manifest(tmp_path, [(fixture_path("counter_3"), "unsafe", 4)])
    out = tmp_path / "results.csv"
    rc = main(["bench", manifest, "--k-max", "6", "--out", str(out)])
    cap = capsys.readouterr()
    assert rc == 0
    assert _parse_csv(out.read_text())
    assert "bucket" in cap.out  # summary moves to stdout
    assert "file,strategy" not in cap.out


def test_bench_flags_wrong_expectations(tmp_path, capsys):
    manifest = _write_manifest(tmp_path, [
        (fixture_path("counter_3"), "safe", ""),       # actually unsafe
        (fixture_path("counter_3_safe"), "unsafe", 4),  # actually safe
    ])
    rc = main(["bench", manifest, "--k-max", "6"])
    cap = capsys.readouterr()
    assert rc == 1
    assert _bucket(cap.err, "incorrect proofs") == 4
    assert _bucket(cap.err, "incorrect alarms") == 4


def test_bench_unresolved_cells_do_not_fail_the_run(tmp_path, capsys):
    manifest = _write_manifest(tmp_path, [
        (fixture_path("eca_safe_small"), "safe", ""),
    ])
    rc = main(["bench", manifest, "--k-max", "2", "--timeout", "1e-9"])
    cap = capsys.readouterr()
    assert rc == 0
    rows = _parse_csv(cap.out)
    assert len(rows) == 4
    assert all(r["verdict"] == "unknown" for r in rows)
    assert _bucket(cap.err, "unresolved") == 4


def test_bench_empty_manifest(tmp_path, capsys):
    manifest = _write_manifest(tmp_path, [])
    rc = main(["bench", manifest])
    cap = capsys.readouterr()
    assert rc == 0
    assert cap.out.splitlines()[0] == "file,strategy,invariants,verdict,expected,iterations,wall_ms"
    assert _parse_csv(cap.out) == []


def test_bench_skips_comment_lines(tmp_path, capsys):
    p = tmp_path / "m.csv"
    p.write_text("path,expected_verdict,expected_k_star\n"
                 "# a comment line\n"
                 f"{fixture_path('counter_3')},unsafe,4\n")
    rc = main(["bench", str(p), "--k-max", "6"])
    cap = capsys.readouterr()
    assert rc == 0
    assert len(_parse_csv(cap.out)) == 4


def test_bench_rejects_malformed_manifests(tmp_path, capsys):
    p = tmp_path / "m.csv"
    p.write_text("path,expected_verdict,expected_k_star\nonly_two,fields\n")
    assert main(["bench", str(p)]) == 1
    p.write_text("path,expected_verdict,expected_k_star\nf.bik,maybe,\n")
    assert main(["bench", str(p)]) == 1
    assert main(["bench", str(tmp_path / "missing.csv")]) == 1
    capsys.readouterr()


def test_bench_broken_file_becomes_unknown_rows(tmp_path, capsys):
    bad = tmp_path / "broken.bik"
    bad.write_text("var x: u8 = ;")
    manifest = _write_manifest(tmp_path, [
        (str(bad), "safe", ""),
        (fixture_path("counter_3"), "unsafe", 4),
    ])
    rc = main(["bench", manifest, "--k-max", "6"])
    cap = capsys.readouterr()
    assert rc == 0
    rows = _parse_csv(cap.out)
    assert len(rows) == 8
    assert all(r["verdict"] == "unknown" for r in rows if r["file"] == str(bad))
    assert all(r["verdict"] == "unsafe" for r in rows
               if r["file"] == fixture_path("counter_3"))
