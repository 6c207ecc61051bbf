"""Record the replay fixtures for the car_1 benchmark suite and the grant-option example.

Run from the repository root: ``python3 tools/record_bench.py``. Answers come
from the exact-answer oracle built over the suite's ground truth, except two
view completions that are deliberately wrong so the query-type accuracy
table has something to report.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from nlacm.benchgen import (
    load_suite,
    run_roundtrip,
    run_suite,
    suite_triples,
    suite_truth,
)
from nlacm.model import AccessMatrix, CellText, PrivilegeSet, matrix_to_dict
from nlacm.oracle import GroundTruth, oracle_gateway, oracle_rules
from nlacm.schema import load_schema

DATA = Path(__file__).resolve().parents[1] / "src" / "nlacm" / "data"
CAR = DATA / "car_1"
SEED = 0

JOHN_SQL = "SELECT * FROM customer"
JOHN_CELL = "may read it and pass that right on to others"


def john_matrix() -> AccessMatrix:
    return AccessMatrix(
        [CellText.of("John")], [CellText.of("customer table")], [[CellText.of(JOHN_CELL)]]
    )


def john_truth() -> GroundTruth:
    truth = GroundTruth()
    truth.add_role("role:john", "john", "John")
    truth.add_view("view:customer", JOHN_SQL, "customer table")
    truth.add_privileges(JOHN_CELL, PrivilegeSet.of("SELECT", "GRANT"))
    return truth


def _wrong_overrides(truth: GroundTruth, suite) -> dict:
    wrong = {int(k): v for k, v in json.loads((CAR / "wrong_completions.json").read_text()).items()}
    by_entity = {f"view:{suite.corpus[j].sql}": sql for j, sql in wrong.items()}
    right = oracle_rules(truth)["view_completion"]

    def view_completion(req):
        ent = truth.entity(str(req.slots["description"]))
        if ent in by_entity:
            return f"{req.slots['view_name']} AS {by_entity[ent]};"
        return right(req)

    return {"view_completion": view_completion, "view_reask": view_completion}


def main() -> None:
    suite = load_suite(CAR)
    truth = suite_truth(suite, SEED)
    gw = oracle_gateway(truth, _wrong_overrides(truth, suite))
    t0 = time.perf_counter()
    result = run_suite(suite, gw, SEED)
    for run in result.diffs:
        assert run.comparison.empty and run.auditing.empty, run.stratum
    for label, rt in result.roundtrips.items():
        assert rt.report.empty, (label, rt.report.render_text())
    print(result.synthesis.render())
    (CAR / "truth_10x10.sql").write_text("\n".join(suite_triples(suite, SEED)[0].truth_script()) + "\n")
    n = gw.save_fixtures(CAR / "fixtures.ndjson")
    result.close()
    print(f"car_1: {n} fixtures, {gw.calls} calls, {time.perf_counter() - t0:.1f}s")

    retail = load_schema(DATA / "bundles" / "retail" / "schema.json")
    jg = oracle_gateway(john_truth())
    rt = run_roundtrip(john_matrix(), retail, jg)
    assert rt.report.empty
    print(rt.synthesis.script.render())
    rt.target.close()
    n = jg.save_fixtures(DATA / "john" / "fixtures.ndjson")
    (DATA / "john" / "matrix.json").write_text(json.dumps(matrix_to_dict(john_matrix()), indent=2) + "\n")
    print(f"john: {n} fixtures")


if __name__ == "__main__":
    main()
