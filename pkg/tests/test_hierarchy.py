from __future__ import annotations

import random

from hypothesis import given, settings
from hypothesis import strategies as st

from nlacm.catalog import SandboxDatabase
from nlacm.gateway import Gateway, OracleBackend
from nlacm.hierarchy import (
    MatchPair,
    MatchSet,
    apply_inheritance,
    asset_closure,
    audit_matches,
    bipartite_match,
    build_enlacm,
    closure_map,
    privilege_closure,
    resolve_child,
    synthesize_enlacm,
)
from nlacm.model import (
    AccessMatrix,
    ExtendedAccessMatrix,
    HierarchyEntry,
    HierarchyRow,
    Operator,
    PrivilegeSet,
    RoleHierarchyList,
)
from nlacm.schema import SchemaContext
from nlacm.sqltext import GrantPrivileges, GrantRole, parse_statement
from nlacm.synthesizer import ScriptStatement, SqlScript, StatementKind, grant_statement

PLAIN = [Operator.SELECT, Operator.INSERT, Operator.UPDATE, Operator.DELETE, Operator.CREATE]


def _gateway(**rules) -> Gateway:
    return Gateway(OracleBackend(rules))


def _random_tree(rng: random.Random, n: int) -> list[tuple[str, str]]:
    return [(f"r{rng.randrange(i)}", f"r{i}") for i in range(1, n)]


def _brute_closure(role, edges, base):
    seen, stack, ops = set(), [role], set()
    while stack:
        r = stack.pop()
        if r in seen:
            continue
        seen.add(r)
        ops |= set(base.get(r, PrivilegeSet()).operators)
        stack.extend(c for p, c in edges if p == r)
    return PrivilegeSet(frozenset(ops))


def test_bipartite_identical_singletons():
    k = bipartite_match(["ceo"], ["ceo"], _gateway())
    assert k.pairs == (MatchPair("ceo", "ceo", "identical text"),)


def test_bipartite_uses_model_for_synonyms():
    gw = _gateway(bipartite_match=lambda req: "Chief Executive Officer")
    k = bipartite_match(["CEO"], ["Clerk", "Chief Executive Officer"], gw)
    assert k.rights() == ["Chief Executive Officer"]


def test_bipartite_records_over_selection():
    gw = _gateway(bipartite_match=lambda req: "Chief Executive Officer, Chief Financial Officer")
    k = bipartite_match(["CEO"], ["Chief Executive Officer", "Chief Financial Officer"], gw)
    assert len(k.for_left("CEO")) == 2


@settings(max_examples=40)
@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=6), st.integers(1, 4))
def test_right_side_is_never_claimed_twice(answer, n_left):
    gw = _gateway(bipartite_match=lambda req: " ".join(answer))
    k = bipartite_match([f"role {i}" for i in range(n_left)], ["a", "b", "c", "d"], gw)
    rights = k.rights()
    assert len(rights) == len(set(rights))


def test_match_failure_keeps_cursor():
    def flaky(req):
        if req.slots["role"] == "second":
            return None
        return "x"

    k = bipartite_match(["first", "second"], ["x", "y"], _gateway(bipartite_match=flaky))
    assert k.cursor == 1 and k.error
    resumed = bipartite_match(["first", "second"], ["x", "y"], _gateway(bipartite_match=lambda r: "y"), start=1, prior=k)
    assert resumed.rights() == ["x", "y"]


def test_audit_examples():
    pairs = MatchSet((MatchPair("ceo", "ceo"), MatchPair("Lead Software developer", "Software developer"), MatchPair("CTO", "Clerk")))
    gw = _gateway(audit_pair=lambda req: "Yes, same." if req.slots["left"].startswith("Lead") else "No, a clerk is not a CTO.")
    findings = audit_matches(pairs, ["ceo", "Lead Software developer", "CTO"], ["ceo", "Software developer", "Clerk"], gw)
    assert [(f.pair.left, f.verdict) for f in findings.suspect_pairs] == [("CTO", "reject")]
    assert "clerk" in findings.suspect_pairs[0].explanation
    assert gw.calls == 2


def test_build_enlacm_joins():
    m = AccessMatrix.build(["ceo", "clerk"], ["t"], [["SELECT"], ["SELECT"]])
    rhl = RoleHierarchyList([HierarchyRow("CEO", None, "manager"), HierarchyRow("CEO", None, "clerk")])
    empty = build_enlacm(m, rhl, MatchSet())
    assert empty.matrix == m and empty.hierarchy == ()
    e = build_enlacm(m, rhl, MatchSet((MatchPair("ceo", "CEO"),)))
    assert e.children_of(0) == ["manager", "clerk"]
    assert len(e.matrix.subjects) == 2


def test_resolve_child_examples():
    assert resolve_child("clerk", "the boss", "ceo", ["ceo", "clerk"]).label == "clerk"
    gw = _gateway(child_label=lambda req: "clerk")
    assert resolve_child("the person at the counter", "the boss", "ceo", ["ceo", "clerk"], gw).label == "clerk"
    gw = _gateway(child_label=lambda req: "janitor")
    assert not resolve_child("the person at the counter", "the boss", "ceo", ["ceo", "clerk"], gw).resolved


def test_closure_examples():
    base = {"r": PrivilegeSet.of("SELECT"), "c": PrivilegeSet.of("INSERT"), "g": PrivilegeSet.of("DELETE")}
    assert privilege_closure("g", [("r", "c"), ("c", "g")], base) == PrivilegeSet.of("DELETE")
    assert privilege_closure("r", [("r", "c"), ("c", "g")], base) == PrivilegeSet.of("SELECT", "INSERT", "DELETE")
    leaves = {"a": PrivilegeSet.of("SELECT"), "b": PrivilegeSet.of("UPDATE")}
    assert PrivilegeSet.of("SELECT", "UPDATE") <= privilege_closure("p", [("p", "a"), ("p", "b")], leaves)


@settings(max_examples=50)
@given(st.integers(2, 50), st.integers(0, 10**6))
def test_closure_matches_brute_force_and_is_monotone(n, seed):
    rng = random.Random(seed)
    edges = _random_tree(rng, n)
    base = {f"r{i}": PrivilegeSet(frozenset(rng.sample(PLAIN, rng.randint(0, 2)))) for i in range(n)}
    got = closure_map(edges, base)
    for role in base:
        assert got[role] == _brute_closure(role, edges, base)
    a, b = rng.sample(range(n), 2)
    lo, hi = min(a, b), max(a, b)
    more = closure_map(edges + [(f"r{lo}", f"r{hi}")], base) if (f"r{lo}", f"r{hi}") not in edges else got
    assert all(got[r] <= more[r] for r in got)


def _tree_grants(rng: random.Random, n: int):
    edges = _random_tree(rng, n)
    kids: dict[str, list[str]] = {}
    for p, c in edges:
        kids.setdefault(p, []).append(c)
    needed: dict[str, PrivilegeSet] = {}
    for i in reversed(range(n)):
        r = f"r{i}"
        ops = set(rng.sample(PLAIN, rng.randint(0 if r in kids else 1, 2)))
        if ops and rng.random() < 0.2:
            ops.add(Operator.GRANT)
        for c in kids.get(r, []):
            ops |= needed[c].operators
        needed[r] = PrivilegeSet(frozenset(ops))
    stmts = [ScriptStatement(StatementKind.CREATE_ROLE, f"CREATE ROLE r{i};") for i in range(n)]
    stmts += [ScriptStatement(StatementKind.GRANT, grant_statement(r, "v", p), (i, 0)) for i, (r, p) in enumerate(needed.items()) if p]
    return edges, needed, SqlScript(tuple(stmts))


def _effective(script: SqlScript) -> dict[str, PrivilegeSet]:
    edges, base = [], {}
    for s in script:
        st_ = parse_statement(s.text)
        if isinstance(st_, GrantRole):
            edges += [(g, r) for r in st_.roles for g in st_.members]
        elif isinstance(st_, GrantPrivileges):
            ops = set(st_.operators) | ({Operator.GRANT} if st_.grant_option else set())
            base[st_.grantees[0]] = PrivilegeSet(frozenset(ops))
    return closure_map(edges, base)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 50), st.integers(0, 10**6))
def test_inheritance_rewrite_preserves_effective_privileges(n, seed):
    edges, needed, script = _tree_grants(random.Random(seed), n)
    rewritten = apply_inheritance(script, edges).script
    eff = _effective(rewritten)
    for role, privs in needed.items():
        assert eff.get(role, PrivilegeSet()) == privs


def test_residual_examples():
    script = SqlScript(
        (
            ScriptStatement(StatementKind.CREATE_ROLE, "CREATE ROLE role;"),
            ScriptStatement(StatementKind.CREATE_ROLE, "CREATE ROLE child;"),
            ScriptStatement(StatementKind.GRANT, "GRANT SELECT, UPDATE ON v TO role;", (0, 0)),
            ScriptStatement(StatementKind.GRANT, "GRANT SELECT ON v TO child;", (1, 0)),
        )
    )
    out = apply_inheritance(script, [("role", "child")]).script.texts()
    assert "GRANT child TO role;" in out and "GRANT UPDATE ON v TO role;" in out
    assert not any("SELECT, UPDATE" in t for t in out)
    same = script.statements[:2] + (
        ScriptStatement(StatementKind.GRANT, "GRANT SELECT ON v TO role;", (0, 0)),
        script.statements[3],
    )
    out = apply_inheritance(SqlScript(same), [("role", "child")]).script.texts()
    assert [t for t in out if t.startswith("GRANT") and " ON " in t] == ["GRANT SELECT ON v TO child;"]
    assert apply_inheritance(script, []).script.texts() == script.texts()


def test_rewritten_tree_executes_to_same_acm():
    edges, needed, script = _tree_grants(random.Random(3), 12)
    schema = SchemaContext.from_dict({"tables": [{"name": "v", "columns": ["a"]}]})
    with SandboxDatabase.from_schema(schema) as db:
        assert all(r.ok for r in db.execute_script(apply_inheritance(script, edges).script))
        acm = db.generate_acm(with_views=False)
    got = {s.raw: c.raw for s, (c,) in zip(acm.subjects, acm.cells)}
    assert got == {r: p.render() for r, p in needed.items() if p}


def test_asset_closure_per_asset():
    base = {"c": {"t": PrivilegeSet.of("SELECT")}, "p": {"u": PrivilegeSet.of("DELETE")}}
    got = asset_closure([("p", "c")], base)
    assert got["p"] == {"t": PrivilegeSet.of("SELECT"), "u": PrivilegeSet.of("DELETE")}


def test_synthesize_enlacm_builds_role_grants():
    m = AccessMatrix.build(["boss", "clerk"], ["t"], [["SELECT, UPDATE"], ["SELECT"]])
    e = ExtendedAccessMatrix(m, (HierarchyEntry(0, "boss", None, "clerk"),))
    schema = SchemaContext.from_dict({"tables": [{"name": "t", "columns": ["a"]}]})
    hs = synthesize_enlacm(e, schema)
    assert hs.edges == (("boss", "clerk"),)
    assert "GRANT clerk TO boss;" in hs.script.texts()
    assert "GRANT UPDATE ON t TO boss;" in hs.script.texts()
