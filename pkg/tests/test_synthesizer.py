from __future__ import annotations

import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sqlglot import exp

from nlacm.catalog import SandboxDatabase
from nlacm.cli import DATA
from nlacm.embedding import TrigramEmbedder, nearest
from nlacm.gateway import Gateway, OracleBackend, ReplayBackend
from nlacm.model import (
    AccessMatrix,
    CellText,
    Kind,
    Operator,
    PrivilegeSet,
    load_matrix,
)
from nlacm.schema import SchemaContext, load_schema
from nlacm.sqltext import GrantPrivileges, parse_query, parse_statement, view_body
from nlacm.synthesizer import (
    StatementKind,
    grant_statement,
    repair_literals,
    sanitize_label,
    synthesize,
    synthesize_privileges,
    synthesize_roles,
    synthesize_view,
)


def _schema(n_tables: int = 3) -> SchemaContext:
    return SchemaContext.from_dict(
        {"tables": [{"name": f"t{k}", "columns": ["a", "b"], "rows": [["x", "y"]]} for k in range(n_tables)]}
    )


def _gateway(**rules) -> Gateway:
    return Gateway(OracleBackend(rules))


def test_identifier_subject_needs_no_prompt():
    roles = synthesize_roles(AccessMatrix.build(["analyst"], ["t0"], [["SELECT"]]))
    assert [s.text for s in roles.statements] == ["CREATE ROLE analyst;"]


def test_description_subject_gets_label_from_model():
    gw = _gateway(role_label=lambda req: "Regional marketing manager")
    roles = synthesize_roles(AccessMatrix.build(["A person who oversees regional marketing"], ["t0"], [[""]]), gw)
    assert roles.statements[0].text == "CREATE ROLE regional_marketing_manager;"


def test_label_collisions_get_numeric_suffix():
    gw = _gateway(role_label=lambda req: "manager")
    m = AccessMatrix.build(["the store manager", "the shift manager"], ["t0"], [[""], [""]])
    assert synthesize_roles(m, gw).labels == ("manager", "manager_2")


def test_sanitize_label():
    assert sanitize_label("Chief Executive Officer!") == "chief_executive_officer"


def test_view_from_description_uses_completion():
    schema = load_schema(DATA / "car_1" / "schema.json")
    sql = "SELECT model FROM car_names GROUP BY model ORDER BY count(*) DESC LIMIT 1"
    gw = _gateway(view_completion=lambda req: f"{req.slots['view_name']} AS {sql}")
    view = synthesize_view(CellText.of("the most common car model"), schema, "view_0", gw)
    assert view.statement.text == f"CREATE VIEW view_0 AS {sql};"
    assert gw.calls == 1


def test_sql_asset_is_wrapped_without_prompt():
    view = synthesize_view(CellText.of("SELECT a FROM t"), _schema(), "v_0")
    assert view.statement.text == "CREATE VIEW v_0 AS SELECT a FROM t;"


def test_base_table_asset_passes_through():
    view = synthesize_view(CellText.of("t1"), _schema(), "view_0")
    assert view.label == "t1" and view.statement is None


def test_unparseable_completion_is_reasked_once():
    answers = iter(["I think you want the cars.", "view_0 AS SELECT a FROM t0"])
    gw = _gateway(view_completion=lambda req: next(answers), view_reask=lambda req: next(answers))
    view = synthesize_view(CellText.of("all the a values"), _schema(), "view_0", gw)
    assert view.statement.text == "CREATE VIEW view_0 AS SELECT a FROM t0;"
    assert [e.template_id for e in gw.transcript] == ["view_completion", "view_reask"]


def test_nonexistent_table_surfaces_as_asset_error():
    gw = _gateway(view_completion=lambda req: "view_0 AS SELECT a FROM nowhere")
    m = AccessMatrix.build(["analyst"], ["everything in the archive"], [["SELECT"]])
    with SandboxDatabase.from_schema(_schema()) as scratch:
        syn = synthesize(m, _schema(), gw, scratch)
    assert 0 in syn.report.asset_errors
    assert not syn.report.ok


def test_privilege_examples():
    assert synthesize_privileges(CellText.of("SELECT"), "r", "v").privileges == PrivilegeSet.of("SELECT")
    gw = _gateway(privilege_map=lambda req: "SELECT WITH GRANT OPTION")
    got = synthesize_privileges(
        CellText.of("select access to the data with the option of passing down this privilege"), "r", "v", gw
    )
    assert got.privileges == PrivilegeSet.of("SELECT", "GRANT")


def test_unusable_privilege_answer_is_flagged():
    gw = _gateway(privilege_map=lambda req: "It depends on the day.")
    got = synthesize_privileges(CellText.of("whatever they need"), "r", "v", gw)
    assert got.privileges is None and got.flag


def test_grant_statement_examples():
    assert grant_statement("John", "customer", PrivilegeSet.of("SELECT", "GRANT")) == (
        "GRANT SELECT ON customer TO John WITH GRANT OPTION;"
    )
    assert grant_statement("analyst", "v", PrivilegeSet.of("SELECT")) == "GRANT SELECT ON v TO analyst;"
    text = grant_statement("r", "v", PrivilegeSet.of("UPDATE", "INSERT", "SELECT"))
    assert text == "GRANT SELECT, INSERT, UPDATE ON v TO r;"
    st_ = parse_statement(text)
    assert isinstance(st_, GrantPrivileges) and st_.operators == (Operator.SELECT, Operator.INSERT, Operator.UPDATE)


def test_grant_option_example_replays_to_three_statements():
    matrix = load_matrix((DATA / "john" / "matrix.json").read_text())
    schema = load_schema(DATA / "bundles" / "retail" / "schema.json")
    gw = Gateway(ReplayBackend.from_file(DATA / "john" / "fixtures.ndjson"))
    syn = synthesize(matrix, schema, gw)
    kinds = [s.kind for s in syn.script]
    assert kinds == [StatementKind.CREATE_ROLE, StatementKind.CREATE_VIEW, StatementKind.GRANT]
    assert syn.script.texts()[-1].endswith("WITH GRANT OPTION;")


def test_all_empty_matrix_grants_nothing():
    m = AccessMatrix.build(["r0", "r1"], ["SELECT a FROM t0", "SELECT b FROM t1"], [["", ""], ["", ""]])
    syn = synthesize(m, _schema())
    assert Counter(s.kind for s in syn.script) == {StatementKind.CREATE_ROLE: 2, StatementKind.CREATE_VIEW: 2}


def _sql_matrix(rng: random.Random, n: int, m: int) -> AccessMatrix:
    ops = [Operator.SELECT, Operator.INSERT, Operator.UPDATE, Operator.DELETE]
    cells = []
    for _ in range(n):
        row = []
        for _ in range(m):
            chosen = {op for op in ops if rng.random() < 0.4}
            if chosen and rng.random() < 0.3:
                chosen.add(Operator.GRANT)
            row.append(PrivilegeSet(frozenset(chosen)))
        cells.append(row)
    return AccessMatrix.build([f"r{i}" for i in range(n)], [f"SELECT a FROM t{j}" for j in range(m)], cells)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 10**6))
def test_provenance_and_no_extra_privileges(n, m, seed):
    matrix = _sql_matrix(random.Random(seed), n, m)
    syn = synthesize(matrix, _schema())
    grants = syn.script.of_kind(StatementKind.GRANT)
    by_cell = Counter(g.provenance for g in grants)
    nonempty = {(i, j) for i in range(n) for j in range(m) if not matrix.cell(i, j).empty}
    assert set(by_cell) == nonempty
    triples = set()
    for g in grants:
        parsed = parse_statement(g.text)
        for op in parsed.operators:
            triples.add((parsed.grantees[0], parsed.objects[0], op))
        if parsed.grant_option:
            triples.add((parsed.grantees[0], parsed.objects[0], Operator.GRANT))
    expected = {
        (f"r{i}", f"view_{j}", op)
        for i, j in nonempty
        for op in PrivilegeSet(frozenset(Operator(o) for o in matrix.cell(i, j).raw.split(", ")))
    }
    assert triples == expected


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 10**6))
def test_synthesize_then_generate_round_trip(n, m, seed):
    matrix = _sql_matrix(random.Random(seed), n, m)
    syn = synthesize(matrix, _schema())
    with SandboxDatabase.from_schema(_schema()) as db:
        assert all(r.ok for r in db.execute_script(syn.script))
        acm = db.generate_acm(with_views=False)
    got = {(s.raw, a.raw): c.raw for s, row in zip(acm.subjects, acm.cells) for a, c in zip(acm.assets, row)}
    for i in range(n):
        for j in range(m):
            assert got.get((f"r{i}", f"view_{j}"), "") == matrix.cell(i, j).raw


def _repair_schema() -> SchemaContext:
    return SchemaContext.from_dict(
        {
            "tables": [
                {"name": "broadcast", "columns": ["id", "status"], "rows": [[1, "Live_Final"], [2, "Recorded"]]},
                {"name": "item", "columns": ["id", "size"], "rows": [[1, "80"], [2, "90"]]},
            ]
        }
    )


def test_repair_snaps_literal_to_stored_value():
    out = repair_literals("SELECT id FROM broadcast WHERE status = 'Live Final'", _repair_schema())
    assert out == "SELECT id FROM broadcast WHERE status = 'Live_Final'"


def test_repair_leaves_exact_literal_alone():
    text = "SELECT id FROM broadcast WHERE status = 'Recorded'"
    assert repair_literals(text, _repair_schema()) == text


def _trigram_cosine(a: str, b: str) -> float:
    def grams(s: str) -> Counter:
        p = f"  {s.lower()} "
        return Counter(p[i : i + 3] for i in range(len(p) - 2))

    ga, gb = grams(a), grams(b)
    dot = sum(ga[g] * gb[g] for g in ga)
    return dot / ((sum(v * v for v in ga.values()) * sum(v * v for v in gb.values())) ** 0.5)


def test_trigram_nearest_matches_hand_computation():
    # "80cm" shares two of five trigrams with "80" and none with "90"
    assert round(_trigram_cosine("80cm", "80"), 4) == 0.5164
    assert _trigram_cosine("80cm", "90") == 0.0
    assert nearest("80cm", ["80", "90"], TrigramEmbedder()) == "80"
    assert repair_literals("SELECT id FROM item WHERE size = '80cm'", _repair_schema()) == (
        "SELECT id FROM item WHERE size = '80'"
    )


def test_thresholds_are_not_repaired():
    text = "SELECT id FROM item WHERE id > 7"
    assert repair_literals(text, _repair_schema()) == text


def _strip_literals(sql: str) -> str:
    tree = parse_query(view_body(sql) or sql)
    for lit in list(tree.find_all(exp.Literal)):
        lit.replace(exp.Literal.string("?"))
    return tree.sql()


_CORRUPT = st.sampled_from(["Live Final", "live_final", "Live_Fin", "LIVE FINAL", "Recorde", "recorded"])


@given(_CORRUPT)
def test_repair_is_idempotent_and_structure_preserving(bad):
    text = f"SELECT id FROM broadcast WHERE status = '{bad}' AND id = 1"
    once = repair_literals(text, _repair_schema())
    assert repair_literals(once, _repair_schema()) == once
    assert _strip_literals(once) == _strip_literals(text)


def test_repair_without_candidates_is_unavailable():
    from nlacm.synthesizer import RepairUnavailable, repair_literals_detail

    with pytest.raises(RepairUnavailable):
        repair_literals_detail("SELECT a FROM t0 WHERE zz = 'q'", SchemaContext.from_dict({"tables": [{"name": "t0", "columns": ["a", "zz"]}]}))


def test_sql_kinds_bypass_the_gateway():
    m = AccessMatrix(
        (CellText("CREATE ROLE auditor", Kind.SQL),),
        (CellText("SELECT a FROM t0", Kind.SQL),),
        ((CellText("SELECT", Kind.SQL),),),
    )
    gw = _gateway()
    syn = synthesize(m, _schema(), gw)
    assert gw.calls == 0
    assert syn.script.texts()[0].startswith("CREATE ROLE auditor")
