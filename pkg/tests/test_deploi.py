from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlacm.catalog import open_target
from nlacm.cli import DATA
from nlacm.deploi import (
    DependencyError,
    ExecutionGraph,
    OpaqueTable,
    Step,
    UnsupportedRequirement,
    apply_revisions,
    audit_generalized,
    check_code,
    element_shape,
    extract_implementation,
    feedback_loop,
    hierarchy_union,
    identify_requirement,
    identity_hook,
    load_bundle,
    parse_instructions,
    resolve_dependencies,
    run_deploi,
)
from nlacm.gateway import Gateway, OracleBackend, ReplayBackend
from nlacm.model import AccessMatrix, HierarchyRow, RoleHierarchyList
from nlacm.schema import load_schema

RETAIL = DATA / "bundles" / "retail"


def _replay() -> Gateway:
    return Gateway(ReplayBackend.from_file(RETAIL / "fixtures.ndjson"))


def _gateway(**rules) -> Gateway:
    return Gateway(OracleBackend(rules))


def _hier(*edges: tuple[str, str]) -> RoleHierarchyList:
    return RoleHierarchyList(tuple(HierarchyRow(r, None, c) for r, c in edges))


def test_requirement_prompt_marks_missing_docs():
    seen = []

    def rule(req):
        seen.append(req.slots["doc"])
        return "Temporal access control.\nIt restricts time windows."

    table = OpaqueTable(("role", "window"), (("clerk", "weekdays"),))
    assert identify_requirement(table, "", _gateway(requirement_category=rule)) == "Temporal access control"
    assert seen == ["(none)"]


def test_instructions_give_dependency_edges():
    text = "1. Create roles. uses: privileges\n2. Grant. uses: privileges; after: 1\n3. Members. after: 1, 2"
    g = parse_instructions(text, ["privileges", "hierarchy"])
    assert sorted(g.edges) == [(1, 2), (1, 3), (2, 3)]
    assert g.step(1).tables == (0,) and [s.id for s in g.order()] == [1, 2, 3]


def test_cycles_and_dangling_steps_are_rejected():
    with pytest.raises(DependencyError, match="cycle"):
        ExecutionGraph((Step(1, "a", (), (2,)), Step(2, "b", (), (1,))))
    with pytest.raises(DependencyError, match="unknown"):
        ExecutionGraph((Step(1, "a", (), (7,)),))
    with pytest.raises(DependencyError):
        parse_instructions("do everything", ["t"])


def test_retail_instructions_resolve_without_prompts():
    bundle = load_bundle(RETAIL)
    gw = _gateway()
    g = resolve_dependencies(bundle, list(bundle.names), gw)
    assert gw.calls == 0
    assert [s.id for s in g.order()] == [1, 2, 3, 4]
    assert (1, 4) in g.edges and (3, 4) in g.edges


def test_prompted_dependencies():
    bundle = load_bundle(RETAIL)
    gw = _gateway(
        dependency_instructions=lambda req: "1. Create roles\n2. Grant privileges",
        dependency_tables=lambda req: "1: privileges\n2: privileges, hierarchy",
        dependency_steps=lambda req: "1: none\n2: 1",
    )
    g = resolve_dependencies(bundle, list(bundle.names), gw, use_llm=True)
    assert g.edges == [(1, 2)] and g.step(2).tables == (1, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10**6))
def test_order_respects_every_edge(n, seed):
    rng = random.Random(seed)
    ids = list(range(1, n + 1))
    rng.shuffle(ids)
    steps = [Step(sid, f"s{sid}", (), tuple(p for p in ids[:k] if rng.random() < 0.4)) for k, sid in enumerate(ids)]
    order = [s.id for s in ExecutionGraph(tuple(steps)).order()]
    pos = {sid: k for k, sid in enumerate(order)}
    assert sorted(order) == sorted(ids)
    for s in steps:
        assert all(pos[a] < pos[s.id] for a in s.after)


def test_check_code_reports_nonexistent_elements():
    schema = load_schema(RETAIL / "schema.json")
    code = "CREATE ROLE clerk;\nCREATE VIEW v AS SELECT nme FROM customer;\nGRANT SELECT ON invoices TO clerk;\nGRANT SELECT ON customer TO ghost;"
    found = check_code(code, schema)
    assert any('"nme"' in f for f in found)
    assert any('"invoices"' in f for f in found)
    assert any('"ghost"' in f for f in found)
    assert check_code("CREATE ROLE r;\nGRANT SELECT ON orders TO r;", schema) == []


def test_feedback_repairs_a_planted_column():
    schema = load_schema(RETAIL / "schema.json")
    target = open_target("sandbox:", schema)
    bad = "CREATE VIEW north AS SELECT name FROM customer WHERE regoin = 'north';"
    good = "CREATE VIEW north AS SELECT name FROM customer WHERE region = 'north';"
    seen = []

    def fix(req):
        seen.append(req.slots["errors"])
        return good

    res = feedback_loop(bad, schema, target, _gateway(synthesis_feedback=fix), {"backend": "postgres", "requirements": "", "docs": "", "instructions": "", "schema": "", "schema_info": ""})
    assert res.code == good and res.findings == [] and res.rounds == 1
    assert "regoin" in seen[0]


def test_feedback_flags_values_and_keeps_the_best_version():
    schema = load_schema(RETAIL / "schema.json")
    target = open_target("sandbox:", schema)
    bad = "CREATE VIEW w AS SELECT * FROM orders WHERE status = 'pending';"
    worse = "CREATE VIEW w AS SELECT * FROM ordrs JOIN custmer ON ordrs.c = custmer.id;"
    slots = dict.fromkeys(["backend", "requirements", "docs", "instructions", "schema", "schema_info"], "")
    res = feedback_loop(bad, schema, target, _gateway(synthesis_feedback=lambda req: worse), slots, max_rounds=1)
    assert res.code == bad and res.regressions == [1]
    assert "'pending'" in res.findings[0]


def test_hooks():
    m = AccessMatrix.build(["ceo", "clerk"], ["t", "u"], [["", "UPDATE"], ["SELECT", ""]], kind="SQL")
    tables = {"p": m, "h": _hier(("ceo", "clerk"))}
    assert identity_hook(tables) == tables
    up = hierarchy_union(tables)["p"]
    assert "SELECT" in up.cell(0, 0).raw and "UPDATE" in up.cell(0, 1).raw and up.cell(1, 1).empty
    assert apply_revisions(tables, ["identity", "hierarchy-union"]) == hierarchy_union(tables)
    twice = apply_revisions(tables, ["hierarchy-union", "hierarchy-union"])
    assert twice == hierarchy_union(tables)


def test_hooks_apply_left_to_right():
    log = []

    def a(t):
        log.append("a")
        return dict(t)

    def b(t):
        log.append("b")
        return dict(t)

    apply_revisions({}, [a, b])
    assert log == ["a", "b"]


def test_element_shapes_and_unsupported_tables():
    assert element_shape(_hier(("a", "b"))) == "inheritance"
    with pytest.raises(UnsupportedRequirement):
        element_shape(OpaqueTable(()))
    with pytest.raises(UnsupportedRequirement):
        audit_generalized(_hier(("a", "b")), OpaqueTable(("x",), (("y",),)))


def test_inheritance_audit():
    rep = audit_generalized(_hier(("ceo", "manager"), ("manager", "clerk")), _hier(("ceo", "manager")), _gateway(requirement_match=lambda req: "none"))
    assert rep.missing == ["manager inherits clerk"] and rep.extra == []


def test_extraction_refuses_writes():
    from nlacm.deploi import DeploiError, ExtractionQuery

    target = open_target("sandbox:", load_schema(RETAIL / "schema.json"))
    with pytest.raises(DeploiError):
        extract_implementation([ExtractionQuery("x", "DELETE FROM customer", "rows")], target)


def test_retail_bundle_deploys_compliantly():
    bundle = load_bundle(RETAIL)
    schema = load_schema(RETAIL / "schema.json")
    run = run_deploi(bundle, schema, _replay(), open_target("sandbox:", schema))
    assert run.compliant, {k: v.to_dict() for k, v in run.reports.items()}
    assert all(r.ok for r in run.execution)
    assert set(run.reports) == {"privileges", "hierarchy", "temporal"}
    assert run.labels[0] and len(run.steps) == 4
