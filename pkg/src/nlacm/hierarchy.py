"""Role hierarchies: similarity join of a matrix with a hierarchy list, and inheritance-aware grants."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from .gateway import (
    Gateway,
    GatewayError,
    _norm,
    parse_choice,
    parse_subset,
    parse_yes_no,
)
from .model import (
    AccessMatrix,
    ExtendedAccessMatrix,
    HierarchyEntry,
    HierarchyError,
    Operator,
    PrivilegeSet,
    RoleHierarchyList,
    find_cycle,
)
from .schema import SchemaContext
from .sqltext import GrantPrivileges, SqlSyntaxError, parse_statement
from .synthesizer import (
    ScriptStatement,
    SqlScript,
    StatementKind,
    Synthesis,
    grant_statement,
    synthesize,
)


@dataclass(frozen=True)
class MatchPair:
    left: str
    right: str
    explanation: str = ""


@dataclass(frozen=True)
class MatchSet:
    pairs: tuple[MatchPair, ...] = ()
    cursor: int | None = None  # index of the left role to resume from after a failure
    error: str | None = None

    def rights(self) -> list[str]:
        return [p.right for p in self.pairs]

    def for_left(self, left: str) -> list[MatchPair]:
        return [p for p in self.pairs if p.left == left]


def bipartite_match(
    m_roles: Sequence[str], l_roles: Sequence[str], gateway: Gateway, start: int = 0, prior: MatchSet | None = None
) -> MatchSet:
    """Match each matrix role to hierarchy-list roles; a list role is claimed at most once."""
    pairs = list(prior.pairs) if prior else []
    remaining = [r for r in l_roles if r not in {p.right for p in pairs}]
    for idx in range(start, len(m_roles)):
        if not remaining:
            break
        role = m_roles[idx]
        same = [r for r in remaining if _norm(r) == _norm(role)]
        if same:
            chosen, why = same[:1], "identical text"
        else:
            try:
                response = gateway.ask("bipartite_match", {"role": role, "candidates": remaining}, remaining)
            except GatewayError as exc:
                return MatchSet(tuple(pairs), idx, str(exc))
            chosen, why = parse_subset(response, remaining), response.strip()
        for right in dict.fromkeys(chosen):
            pairs.append(MatchPair(role, right, why))
            remaining.remove(right)
    return MatchSet(tuple(pairs))


@dataclass(frozen=True)
class Finding:
    pair: MatchPair
    verdict: str
    explanation: str


@dataclass(frozen=True)
class AuditFindings:
    suspect_pairs: tuple[Finding, ...] = ()

    def to_list(self) -> list[dict]:
        return [
            {"left": f.pair.left, "right": f.pair.right, "verdict": f.verdict, "explanation": f.explanation}
            for f in self.suspect_pairs
        ]


def audit_matches(k: MatchSet, m_roles: Sequence[str], l_roles: Sequence[str], gateway: Gateway) -> AuditFindings:
    """Second opinion on every non-identical pair; anything but a clear yes is suspect."""
    todo = [p for p in k.pairs if _norm(p.left) != _norm(p.right)]
    calls = [
        ("audit_pair", {"left": p.left, "right": p.right, "left_roles": list(m_roles), "right_roles": list(l_roles)}, ())
        for p in todo
    ]
    findings = []
    for pair, response in zip(todo, gateway.ask_many(calls)):
        verdict = parse_yes_no(response)
        if verdict is None:
            findings.append(Finding(pair, "reject", response.strip() + " [unparseable verdict]"))
        elif not verdict:
            findings.append(Finding(pair, "reject", response.strip()))
    return AuditFindings(tuple(findings))


def build_enlacm(m: AccessMatrix, l: RoleHierarchyList, k: MatchSet) -> ExtendedAccessMatrix:
    """Equijoin of matrix subjects and list rows, with equality given by the match set."""
    entries = []
    for i, subject in enumerate(m.subjects):
        for pair in k.for_left(subject.raw):
            for row in l.rows:
                if row.role == pair.right:
                    entries.append(HierarchyEntry(i, row.role, row.parent, row.child))
    return ExtendedAccessMatrix(m, tuple(entries))


# -- label resolution --------------------------------------------------------


@dataclass(frozen=True)
class Resolution:
    label: str | None
    explanation: str = ""

    @property
    def resolved(self) -> bool:
        return self.label is not None


def _resolve(template: str, other_slot: str, other: str, role_desc: str, role_label: str,
             labels: Sequence[str], gateway: Gateway | None) -> Resolution:
    if not labels:
        raise ValueError("label set is empty")
    for label in labels:
        if _norm(label) == _norm(other):
            return Resolution(label, "identical text")
    if gateway is None:
        return Resolution(None, "no gateway to resolve description")
    response = gateway.ask(template, {"label": role_label, "role": role_desc, other_slot: other, "labels": list(labels)}, labels)
    choice = parse_choice(response, labels)
    return Resolution(choice.candidate, choice.explanation)


def resolve_child(child_desc: str, role_desc: str, role_label: str, labels: Sequence[str],
                  gateway: Gateway | None = None) -> Resolution:
    return _resolve("child_label", "child", child_desc, role_desc, role_label, labels, gateway)


def resolve_parent(parent_desc: str, role_desc: str, role_label: str, labels: Sequence[str],
                   gateway: Gateway | None = None) -> Resolution:
    return _resolve("parent_label", "parent", parent_desc, role_desc, role_label, labels, gateway)


# -- closure -------------------------------------------------------------


def _children(edges: Iterable[tuple[str, str]] | Mapping[str, Iterable[str]]) -> dict[str, list[str]]:
    items = edges.items() if isinstance(edges, Mapping) else None
    out: dict[str, list[str]] = {}
    if items is not None:
        for role, kids in items:
            out.setdefault(role, [])
            for kid in kids:
                if kid not in out[role]:
                    out[role].append(kid)
    else:
        for role, kid in edges:
            out.setdefault(role, [])
            if kid not in out[role]:
                out[role].append(kid)
    cycle = find_cycle((r, c) for r, cs in out.items() for c in cs)
    if cycle:
        raise HierarchyError("cycle in role hierarchy: " + " -> ".join(cycle))
    return out


def closure_map(edges, base: Mapping[str, PrivilegeSet]) -> dict[str, PrivilegeSet]:
    """Effective privileges of every role: its own set unioned with all descendants'."""
    kids = _children(edges)
    memo: dict[str, frozenset] = {}

    def visit(role: str) -> frozenset:
        if role not in memo:
            ops = set(base[role].operators) if role in base else set()
            for kid in kids.get(role, ()):
                ops |= visit(kid)
            memo[role] = frozenset(ops)
        return memo[role]

    roles = set(base) | set(kids) | {c for cs in kids.values() for c in cs}
    return {r: PrivilegeSet(visit(r)) for r in sorted(roles)}


def privilege_closure(role: str, edges, base: Mapping[str, PrivilegeSet]) -> PrivilegeSet:
    return closure_map(edges, base).get(role, PrivilegeSet())


def asset_closure(edges, base: Mapping[str, Mapping[str, PrivilegeSet]]) -> dict[str, dict[str, PrivilegeSet]]:
    """Per-asset effective privileges: role -> asset -> closure."""
    assets = sorted({a for cells in base.values() for a in cells})
    out: dict[str, dict[str, PrivilegeSet]] = {}
    kids = _children(edges)
    for asset in assets:
        per_role = {r: cells[asset] for r, cells in base.items() if asset in cells}
        for role, privs in closure_map(kids, per_role).items():
            if privs:
                out.setdefault(role, {})[asset] = privs
    return out


# -- inheritance-aware rewriting ----------------------------------------


@dataclass(frozen=True)
class InheritanceResult:
    script: SqlScript
    edges: tuple[tuple[str, str], ...]
    flags: tuple[str, ...] = ()


def _grant_of(stmt: ScriptStatement) -> tuple[str, str, PrivilegeSet] | None:
    try:
        st = parse_statement(stmt.text)
    except SqlSyntaxError:
        return None
    if not isinstance(st, GrantPrivileges) or st.revoke or len(st.grantees) != 1 or len(st.objects) != 1:
        return None
    ops = set(st.operators)
    if st.grant_option:
        ops.add(Operator.GRANT)
    return st.grantees[0], st.objects[0], PrivilegeSet(frozenset(ops))


def apply_inheritance(
    script: SqlScript,
    edges: Iterable[tuple[str, str]],
    unresolved: Iterable[str] = (),
) -> InheritanceResult:
    """Replace inherited operators with role grants.

    ``edges`` are (role, child) label pairs meaning role inherits child.
    Each pair becomes one ``GRANT child TO role;``; each privilege grant of a
    role with children keeps only the operators its children do not supply.
    Grants of roles named in ``unresolved`` are left unchanged.
    """
    edges = list(dict.fromkeys(edges))
    kids = _children(edges)
    skip = {r.lower() for r in unresolved}
    flags = [f"role {r}: child label unresolved, grants left unchanged" for r in sorted(skip)]

    parsed = {}
    base: dict[str, dict[str, PrivilegeSet]] = {}
    for n, stmt in enumerate(script.statements):
        if stmt.kind is StatementKind.GRANT:
            g = _grant_of(stmt)
            if g is None:
                flags.append(f"statement {n}: not a single-role grant, left unchanged")
                continue
            parsed[n] = g
            role, asset, privs = g
            prev = base.setdefault(role.lower(), {}).get(asset)
            base[role.lower()][asset] = privs | prev if prev else privs
    low_kids = {r.lower(): [c.lower() for c in cs] for r, cs in kids.items()}
    effective = asset_closure(low_kids, base)

    head = [s for s in script.statements if s.kind is not StatementKind.GRANT and s.kind is not StatementKind.GRANT_ROLE]
    role_grants = [
        ScriptStatement(StatementKind.GRANT_ROLE, f"GRANT {child} TO {role};")
        for role, child in edges
        if role.lower() not in skip
    ]
    body = [s for s in script.statements if s.kind is StatementKind.GRANT_ROLE]
    for n, stmt in enumerate(script.statements):
        if stmt.kind is not StatementKind.GRANT:
            continue
        g = parsed.get(n)
        if g is None or g[0].lower() in skip or g[0].lower() not in low_kids:
            body.append(stmt)
            continue
        role, asset, direct = g
        inherited_ops = frozenset().union(
            *(effective.get(c, {}).get(asset, PrivilegeSet()).operators for c in low_kids[role.lower()])
        )
        residual = direct.minus(PrivilegeSet(inherited_ops))
        if not residual:
            continue
        if residual == {Operator.GRANT}:
            # the grant option cannot travel alone; re-grant the direct operators with it
            text = grant_statement(role, asset, direct)
            flags.append(f"{role} on {asset}: grant option needs a direct grant of inherited operators")
            body.append(ScriptStatement(StatementKind.GRANT, text, stmt.provenance, "grant-option-regrant"))
            continue
        text = grant_statement(role, asset, PrivilegeSet(residual))
        body.append(ScriptStatement(StatementKind.GRANT, text, stmt.provenance))
    return InheritanceResult(SqlScript(tuple(head) + tuple(role_grants) + tuple(body)), tuple(edges), tuple(flags))


# -- end to end ------------------------------------------------------------------


@dataclass(frozen=True)
class HierarchySynthesis:
    synthesis: Synthesis
    script: SqlScript
    edges: tuple[tuple[str, str], ...]
    unresolved: tuple[str, ...]
    flags: tuple[str, ...]


def synthesize_enlacm(
    enlacm: ExtendedAccessMatrix,
    schema: SchemaContext,
    gateway: Gateway | None = None,
    sandbox=None,
    embedder=None,
) -> HierarchySynthesis:
    """Synthesize the matrix, resolve child and parent descriptions to role labels, then rewrite grants."""
    matrix = enlacm.matrix
    base = synthesize(matrix, schema, gateway, sandbox, embedder)
    labels = list(base.role_labels)
    edges: list[tuple[str, str]] = []
    unresolved: list[str] = []
    flags: list[str] = []
    for entry in enlacm.hierarchy:
        role_label = labels[entry.subject]
        role_desc = matrix.subjects[entry.subject].raw
        if entry.child:
            res = resolve_child(entry.child, role_desc, role_label, labels, gateway)
            if res.resolved and res.label != role_label:
                edges.append((role_label, res.label))
            else:
                unresolved.append(role_label)
                flags.append(f"child {entry.child!r} of {role_label}: unresolved ({res.explanation})")
        if entry.parent:
            res = resolve_parent(entry.parent, role_desc, role_label, labels, gateway)
            if res.resolved and res.label != role_label:
                edges.append((res.label, role_label))
            else:
                flags.append(f"parent {entry.parent!r} of {role_label}: unresolved ({res.explanation})")
    result = apply_inheritance(base.script, edges, unresolved)
    return HierarchySynthesis(base, result.script, result.edges, tuple(dict.fromkeys(unresolved)), tuple(flags) + result.flags)
