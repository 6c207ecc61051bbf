from __future__ import annotations

import itertools
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from nlacm.benchgen import load_suite, suite_triples, suite_truth
from nlacm.cli import DATA
from nlacm.differencer import (
    VerdictKind,
    diff,
    diff_detail,
    diff_hierarchy,
    map_items,
    prune_candidates,
    subsumes,
    subsumption,
)
from nlacm.gateway import Gateway, OracleBackend
from nlacm.model import (
    AccessMatrix,
    CellText,
    ExtendedAccessMatrix,
    HierarchyEntry,
    Kind,
    Operator,
    PrivilegeSet,
)
from nlacm.oracle import oracle_gateway

ALL_SETS = [frozenset(c) for r in range(7) for c in itertools.combinations(list(Operator), r)]
PLAIN = [Operator.SELECT, Operator.INSERT, Operator.UPDATE, Operator.DELETE, Operator.CREATE]


def _strict_gateway() -> Gateway:
    # any prompt is a test failure
    return Gateway(OracleBackend({}))


def _gateway(**rules) -> Gateway:
    return Gateway(OracleBackend(rules))


def test_subsumption_is_subset_inclusion_on_the_whole_lattice():
    assert len(ALL_SETS) == 64
    for a, b in itertools.product(ALL_SETS, repeat=2):
        assert subsumes(a, b) == all(op in a for op in b)


def test_subsumption_is_a_partial_order():
    for a in ALL_SETS:
        assert subsumes(a, a)
    for a, b in itertools.product(ALL_SETS, repeat=2):
        if subsumes(a, b) and subsumes(b, a):
            assert a == b
    sample = random.Random(0).sample(ALL_SETS, 24)
    for a, b, c in itertools.product(sample, repeat=3):
        if subsumes(a, b) and subsumes(b, c):
            assert subsumes(a, c)


def test_cell_verdict_examples():
    assert subsumption(CellText.of("SELECT"), CellText.of("SELECT")).ok
    v = subsumption(CellText.of("SELECT, INSERT"), CellText.of("SELECT, INSERT, DELETE"))
    assert v.kind is VerdictKind.VIOLATION and v.operators == {Operator.DELETE}
    v = subsumption(CellText.of("SELECT"), CellText.of("GRANT SELECT ON v TO r WITH GRANT OPTION;"))
    assert v.operators == {Operator.GRANT}


def test_opaque_cells_ask_the_model():
    gw = _gateway(privilege_exceeds=lambda req: "No, reading is all it does.")
    assert subsumption(CellText.of("may look at the rows"), CellText.of("SELECT"), gw).ok
    gw = _gateway(privilege_exceeds=lambda req: "Yes, deleting is beyond reading.")
    v = subsumption(CellText.of("may look at the rows"), CellText.of("SELECT, DELETE"), gw)
    assert v.kind is VerdictKind.OPAQUE_VIOLATION and "deleting" in v.explanation
    assert subsumption(CellText.of("may look"), CellText.of("SELECT")).kind is VerdictKind.OPAQUE_VIOLATION


def test_prune_examples():
    cands = [CellText.of("SELECT a FROM t WHERE h > 80"), CellText.of("SELECT a FROM t WHERE h > 90")]
    assert prune_candidates(CellText.of("all of them"), cands) == cands
    assert prune_candidates(CellText.of("rows where height is more than 80"), cands) == cands[:1]


def test_identical_sql_roles_match_without_prompts():
    items = [CellText("r1", Kind.SQL), CellText("r2", Kind.SQL)]
    gw = _strict_gateway()
    got = map_items(items, list(reversed(items)), "role", gw)
    assert got.matches == {0: 1, 1: 0} and gw.calls == 0


def test_single_pruned_candidate_confirmed_by_model():
    gw = _gateway(view_nl_vs_sql=lambda req: req.candidates[0] + " - it filters on 80")
    left = [CellText.of("rows where height is more than 80")]
    right = [CellText.of("CREATE VIEW v1 AS SELECT a FROM t WHERE h > 90"), CellText.of("CREATE VIEW v2 AS SELECT a FROM t WHERE h > 80")]
    got = map_items(left, right, "view", gw)
    assert got.matches == {0: 1}
    assert got.trace[0].pruned_candidates_count == 1 and "80" in got.trace[0].explanation


def test_refused_candidate_stays_unmatched():
    gw = _gateway(view_nl_vs_sql=lambda req: "None of these describe it.")
    got = map_items([CellText.of("the cars")], [CellText.of("CREATE VIEW v AS SELECT a FROM t")], "view", gw)
    assert got.matches == {} and got.unmatched_right == (0,)


def _view(j: int) -> CellText:
    return CellText(f"CREATE VIEW v{j} AS SELECT c{j} FROM t", Kind.SQL)


def _sql_matrix(rng: random.Random, n: int, m: int) -> AccessMatrix:
    cells = [[PrivilegeSet(frozenset(rng.sample(PLAIN, rng.randint(0, 3)))) for _ in range(m)] for _ in range(n)]
    return AccessMatrix(
        tuple(CellText(f"r{i}", Kind.SQL) for i in range(n)),
        tuple(_view(j) for j in range(m)),
        tuple(tuple(CellText(p.render(), Kind.SQL) for p in row) for row in cells),
    )


def _mutate(rng: random.Random, m: AccessMatrix) -> AccessMatrix:
    n, k = m.shape
    kind = rng.randrange(3)
    if kind == 0:
        i, j = rng.randrange(n), rng.randrange(k)
        have = PrivilegeSet.of(*m.cell(i, j).raw.split(", ")) if m.cell(i, j).raw else PrivilegeSet()
        missing = [op for op in PLAIN if op not in have]
        if missing:
            return m.replace_cell(i, j, CellText((have | PrivilegeSet.of(rng.choice(missing))).render(), Kind.SQL))
    if kind == 1:
        row = [""] * k
        row[rng.randrange(k)] = "SELECT"
        return m.add_subject(CellText(f"extra_{n}", Kind.SQL), row)
    col = [""] * n
    col[rng.randrange(n)] = "UPDATE"
    return m.add_asset(_view(k), col)


def _entries(report) -> set:
    return (
        {("s", s) for s in report.extra_subjects}
        | {("a", a) for a in report.extra_assets}
        | {("p", v.subject, v.asset, op) for v in report.privilege_violations for op in v.operators}
    )


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
def test_reflexivity_and_monotonicity(n, m, seed):
    rng = random.Random(seed)
    base = _sql_matrix(rng, n, m)
    impl = _sql_matrix(rng, n, m)
    gw = _strict_gateway()
    assert diff(base, base, gw).empty
    before = diff(base, impl, gw)
    after = diff(base, _mutate(rng, impl), gw)
    assert gw.calls == 0
    assert _entries(before) <= _entries(after)


def test_extra_role_is_reported():
    base = AccessMatrix.build(["r1"], ["t"], [["SELECT"]], kind="SQL")
    impl = base.add_subject(CellText("intruder", Kind.SQL), ["SELECT"])
    assert diff(base, impl).extra_subjects == ["intruder"]


def test_benchmark_pair_is_empty_under_exact_answers():
    suite = load_suite(DATA / "car_1")
    truth = suite_truth(suite)
    for triple in suite_triples(suite):
        assert diff(triple.base, triple.perturbed, oracle_gateway(truth)).empty
        assert diff(triple.base, triple.sql, oracle_gateway(truth)).empty


def test_pruning_keeps_every_true_match_and_narrows_the_rest():
    suite = load_suite(DATA / "car_1")
    truth = suite_truth(suite)
    triple = suite_triples(suite)[0]
    for j, asset in enumerate(triple.base.assets):
        kept = prune_candidates(asset, list(triple.sql.assets))
        assert triple.sql.assets[j] in kept
    pruned_gw, plain_gw = oracle_gateway(truth), oracle_gateway(truth)
    pruned = diff_detail(triple.base, triple.sql, pruned_gw, prune=True)
    plain = diff_detail(triple.base, triple.sql, plain_gw, prune=False)
    assert sum(t.pruned_candidates_count for t in pruned.report.match_trace) > 0
    assert sum(t.pruned_candidates_count for t in plain.report.match_trace) == 0
    assert plain_gw.calls >= pruned_gw.calls


def test_hierarchy_differences():
    m = AccessMatrix.build(["ceo", "clerk"], ["t"], [["SELECT"], ["SELECT"]], kind="SQL")
    e1 = ExtendedAccessMatrix(m, (HierarchyEntry(0, "ceo", None, "clerk"), HierarchyEntry(0, "ceo", None, "manager")))
    assert diff_hierarchy(e1, e1, {0: 0, 1: 1}) == ([], [])
    e2 = ExtendedAccessMatrix(m, (HierarchyEntry(0, "ceo", None, "clerk"),))
    assert diff_hierarchy(e1, e2, {0: 0, 1: 1}) == ([("ceo", "manager")], [])
    report = diff(e1, e2)
    assert report.inheritance_missing == [("ceo", "manager")]


def test_near_synonym_children_judged_equal_are_not_reported():
    m = AccessMatrix.build(["lead"], ["t"], [["SELECT"]], kind="SQL")
    e1 = ExtendedAccessMatrix(m, (HierarchyEntry(0, "lead", None, "Software developer"),))
    e2 = ExtendedAccessMatrix(m, (HierarchyEntry(0, "lead", None, "Senior software developer"),))
    gw = _gateway(role_nl_vs_nl=lambda req: req.candidates[0])
    assert diff_hierarchy(e1, e2, {0: 0}, gw) == ([], [])


def test_report_serializes_deterministically():
    rng = random.Random(5)
    a, b = _sql_matrix(rng, 3, 3), _sql_matrix(rng, 3, 3)
    assert diff(a, b).to_json() == diff(a, b).to_json()


def test_pruning_skips_the_prompt_when_no_candidate_carries_the_literal():
    left = [CellText.of("rows where height is more than 80")]
    right = [CellText.of("CREATE VIEW v AS SELECT a FROM t WHERE h > 90")]
    pruned_gw = _gateway(view_nl_vs_sql=lambda req: req.candidates[0])
    plain_gw = _gateway(view_nl_vs_sql=lambda req: req.candidates[0])
    assert map_items(left, right, "view", pruned_gw, prune=True).matches == {}
    assert map_items(left, right, "view", plain_gw, prune=False).matches == {0: 0}
    assert pruned_gw.calls == 0 and plain_gw.calls == 1


def test_second_claim_on_the_same_item_is_flagged():
    left = [CellText("r1", Kind.SQL), CellText("r1", Kind.SQL)]
    got = map_items(left, [CellText("r1", Kind.SQL)], "role", _strict_gateway())
    assert got.matches == {0: 0} and got.unmatched_left == (1,)
    assert "first claim" in got.trace[1].explanation
