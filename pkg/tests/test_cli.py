from __future__ import annotations

import csv
import io
import json

from nlacm.cli import DATA, EXIT_ERROR, EXIT_OK, EXIT_VIOLATIONS, main

RETAIL_SCHEMA = str(DATA / "bundles" / "retail" / "schema.json")


def _matrix(tmp_path, name, subjects, assets, cells, kind="SQL"):
    path = tmp_path / name
    path.write_text(json.dumps({"subjects": subjects, "assets": assets, "cells": cells, "kind": kind}))
    return str(path)


def test_diff_of_a_matrix_with_itself_is_compliant(tmp_path):
    m = _matrix(tmp_path, "m.json", ["r1"], ["t"], [["SELECT"]])
    assert main(["diff", m, m, "--out", str(tmp_path / "out")]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["privilege_violations"] == []


def test_diff_exit_code_on_violation(tmp_path):
    policy = _matrix(tmp_path, "p.json", ["r1"], ["t"], [["SELECT"]])
    impl = _matrix(tmp_path, "i.json", ["r1"], ["t"], [["SELECT, DELETE"]])
    assert main(["diff", policy, impl, "--out", str(tmp_path / "out")]) == EXIT_VIOLATIONS
    assert "DELETE" in (tmp_path / "out" / "report.txt").read_text()


def test_synthesize_delegation_example(tmp_path):
    rc = main(["synthesize", str(DATA / "john" / "matrix.json"), "--schema", RETAIL_SCHEMA, "--fixtures", str(DATA / "john" / "fixtures.ndjson"), "--out", str(tmp_path)])
    assert rc == EXIT_OK
    script = (tmp_path / "script.sql").read_text()
    assert "CREATE ROLE John;" in script
    assert "GRANT SELECT ON view_0 TO John WITH GRANT OPTION;" in script


def test_missing_fixture_is_a_pipeline_error(tmp_path, capsys):
    empty = tmp_path / "none.ndjson"
    empty.write_text("")
    rc = main(["synthesize", str(DATA / "john" / "matrix.json"), "--schema", RETAIL_SCHEMA, "--fixtures", str(empty), "--out", str(tmp_path / "o")])
    assert rc == EXIT_ERROR
    assert "error" in capsys.readouterr().err


def test_bad_config_is_an_error(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[gateway]\nnope = 1\n")
    m = _matrix(tmp_path, "m.json", ["r1"], ["t"], [["SELECT"]])
    assert main(["diff", m, m, "--config", str(ini), "--out", str(tmp_path / "o")]) == EXIT_ERROR


def test_bench_score_prints_totals(capsys):
    assert main(["bench", "score"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    got = {(r["comparison"], r["metric"], r["method"]): r["f1_error"] for r in rows}
    assert got[("NL vs SQL", "RV", "LLM4AC")] == "0.035"


def test_sandbox_generate_and_diff(tmp_path):
    db = str(tmp_path / "s.db")
    script = tmp_path / "grants.sql"
    script.write_text("CREATE ROLE clerk;\nGRANT SELECT ON orders TO clerk;\n")
    assert main(["sandbox", "init", "--schema", RETAIL_SCHEMA, "--db", db]) == EXIT_OK
    assert main(["sandbox", "exec", "--db", db, str(script)]) == EXIT_OK
    out = tmp_path / "acm.json"
    assert main(["generate", "--target", f"sandbox:{db}", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert "clerk" in [s["text"] for s in doc["subjects"]]
    assert main(["diff", str(out), "--target", f"sandbox:{db}", "--out", str(tmp_path / "d")]) == EXIT_OK


def test_deploi_bundle_is_compliant(tmp_path, capsys):
    assert main(["deploi", "retail", "--out", str(tmp_path)]) == EXIT_OK
    assert "privileges: compliant" in capsys.readouterr().out
    assert (tmp_path / "code.sql").read_text().startswith("-- step 1")


def test_bench_build_writes_triples(tmp_path):
    assert main(["bench", "build", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "base" / "truth.sql").exists()
    assert (tmp_path / "accuracy" / "sql.json").exists()
