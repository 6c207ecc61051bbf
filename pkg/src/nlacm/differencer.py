"""Strict-inequality differencing of two access matrices."""

from __future__ import annotations

import enum
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .gateway import Gateway, GatewayError, _norm, parse_choice, parse_yes_no
from .model import (
    AccessMatrix,
    CellText,
    ExtendedAccessMatrix,
    Kind,
    Operator,
    PrivilegeSet,
    extract_literals,
    normalize_literal,
    parse_privileges,
    sort_operators,
)
from .sqltext import (
    CreateRole,
    SqlSyntaxError,
    canonical_query,
    grant_cell_privileges,
    normalize_identifier,
    parse_statement,
    view_body,
)

# -- privileges ------------------------------------------------------------


def cell_privileges(cell: CellText) -> PrivilegeSet | None:
    """Operator set of a cell when it can be read without a prompt."""
    parsed = parse_privileges(cell)
    if isinstance(parsed, PrivilegeSet):
        return parsed
    granted = grant_cell_privileges(cell.raw)
    if granted:
        return PrivilegeSet(frozenset().union(*(p.operators for p in granted.values())))
    return None


def _ops(x: PrivilegeSet | Iterable[Operator]) -> frozenset[Operator]:
    return x.operators if isinstance(x, PrivilegeSet) else frozenset(Operator(op) for op in x)


def subsumes(policy: PrivilegeSet | Iterable[Operator], impl: PrivilegeSet | Iterable[Operator]) -> bool:
    """True when the implementation grants nothing beyond the policy.

    Plain operator collections are accepted too, so the whole 64-set lattice
    (including a bare GRANT) can be compared.
    """
    return _ops(impl) <= _ops(policy)


class VerdictKind(str, enum.Enum):
    SUBSUMED = "subsumed"
    VIOLATION = "violation"
    OPAQUE_VIOLATION = "opaque_violation"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    operators: frozenset = frozenset()
    explanation: str = ""

    @property
    def ok(self) -> bool:
        return self.kind is VerdictKind.SUBSUMED


def subsumption(
    policy_cell: CellText,
    impl_cell: CellText,
    gateway: Gateway | None = None,
    role: str = "",
    view: str = "",
) -> Verdict:
    if impl_cell.empty:
        return Verdict(VerdictKind.SUBSUMED, explanation="implementation grants nothing")
    impl = cell_privileges(impl_cell)
    policy = PrivilegeSet() if policy_cell.empty else cell_privileges(policy_cell)
    if impl is not None and policy is not None:
        extra = impl.minus(policy)
        if not extra:
            return Verdict(VerdictKind.SUBSUMED)
        ops = ", ".join(op.value for op in sort_operators(extra))
        return Verdict(VerdictKind.VIOLATION, frozenset(extra), f"implementation also grants {ops}")
    if gateway is None:
        return Verdict(VerdictKind.OPAQUE_VIOLATION, explanation="cell needs a gateway to compare")
    slots = {"role": role, "view": view, "policy": policy_cell.raw or "(no privileges)", "impl": impl_cell.raw}
    try:
        response = gateway.ask("privilege_exceeds", slots)
    except GatewayError as exc:
        return Verdict(VerdictKind.OPAQUE_VIOLATION, explanation=f"comparison failed: {exc}")
    exceeds = parse_yes_no(response)
    if exceeds is False:
        return Verdict(VerdictKind.SUBSUMED, explanation=response.strip())
    note = "" if exceeds else " [unparseable verdict]"
    return Verdict(VerdictKind.OPAQUE_VIOLATION, explanation=response.strip() + note)


# -- mapping -----------------------------------------------------------------


def _literal_set(text: str) -> set[str]:
    return {normalize_literal(x) for x in extract_literals(text)}


def prune_candidates(item: CellText, candidates: Sequence[CellText]) -> list[CellText]:
    """Keep candidates carrying every literal the item mentions."""
    wanted = _literal_set(item.raw)
    if not wanted:
        return list(candidates)
    return [c for c in candidates if wanted <= _literal_set(c.raw)]


@dataclass(frozen=True)
class TraceEntry:
    kind: str
    left: str
    right: str | None
    explanation: str = ""
    pruned_candidates_count: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "left": self.left,
            "right": self.right,
            "explanation": self.explanation,
            "pruned_candidates_count": self.pruned_candidates_count,
        }
        if self.error:
            doc["error"] = self.error
        return doc


@dataclass(frozen=True)
class Mapping_:
    matches: dict[int, int]
    trace: tuple[TraceEntry, ...]
    unmatched_left: tuple[int, ...]
    unmatched_right: tuple[int, ...]


def _role_name(item: CellText) -> str | None:
    text = item.raw.strip()
    try:
        st = parse_statement(text)
    except SqlSyntaxError:
        st = None
    if isinstance(st, CreateRole):
        return st.name
    if text and text.replace("_", "a").isalnum() and not text[0].isdigit():
        return normalize_identifier(text)
    return None


def _view_key(item: CellText) -> str | None:
    body = view_body(item.raw)
    if body is None:
        text = item.raw.strip()
        return f"table:{normalize_identifier(text)}" if text.replace("_", "a").isalnum() else None
    try:
        return canonical_query(body)
    except SqlSyntaxError:
        return None


def _sql_equal(left: CellText, right: CellText, kind: str, sandbox) -> tuple[bool, str]:
    if kind == "role":
        a, b = _role_name(left), _role_name(right)
        return (a is not None and a == b), "same role name"
    a, b = _view_key(left), _view_key(right)
    if a is not None and a == b:
        return True, "same canonical definition"
    if sandbox is None or a is None or b is None or a.startswith("table:") or b.startswith("table:"):
        return False, ""
    try:
        same = sandbox.result_set(view_body(left.raw)) == sandbox.result_set(view_body(right.raw))
    except Exception:
        return False, ""
    return same, "equal result sets on sandbox data (instance-dependent)"


_PROMPTS = {
    ("view", "sql"): "view_nl_vs_sql",
    ("view", "nl"): "view_nl_vs_nl",
    ("role", "sql"): "role_nl_vs_sql",
    ("role", "nl"): "role_nl_vs_nl",
}


def map_items(
    left: Sequence[CellText],
    right: Sequence[CellText],
    kind: str,
    gateway: Gateway | None = None,
    sandbox=None,
    prune: bool = True,
) -> Mapping_:
    """Match each left item to at most one right item; the first left to match a right claims it."""
    if kind not in ("role", "view"):
        raise ValueError(f"kind must be 'role' or 'view', not {kind!r}")
    claimed: dict[int, int] = {}
    trace = []
    for i, item in enumerate(left):
        available = [j for j in range(len(right)) if j not in claimed.values()]
        kept = prune_candidates(item, [right[j] for j in available]) if prune else [right[j] for j in available]
        kept_idx = [j for j in available if right[j] in kept]
        pruned = len(available) - len(kept_idx)
        found, why, error = None, "", None
        # identical text needs no judgment
        for j in kept_idx:
            if _norm(right[j].raw) == _norm(item.raw) and _norm(item.raw):
                found, why = j, "identical text"
                break
        if found is None and item.kind is Kind.SQL:
            for j in kept_idx:
                if right[j].kind is Kind.SQL:
                    same, why = _sql_equal(item, right[j], kind, sandbox)
                    if same:
                        found = j
                        break
        if found is None:
            # SQL candidates first, then NL ones; SQL-vs-SQL pairs never reach a prompt
            groups = [("sql", [j for j in kept_idx if right[j].kind is Kind.SQL])]
            groups.append(("nl", [j for j in kept_idx if right[j].kind is Kind.NL]))
            for side, idx in groups:
                if not idx or (item.kind is Kind.SQL and side == "sql"):
                    continue
                if gateway is None:
                    error = "no gateway for a natural-language comparison"
                    break
                template = _PROMPTS[(kind, "sql" if item.kind is Kind.SQL else side)]
                texts = [right[j].raw for j in idx]
                try:
                    response = gateway.ask(template, {"candidates": texts, "phrase": item.raw}, texts)
                except GatewayError as exc:
                    error = str(exc)
                    break
                choice = parse_choice(response, texts)
                why = choice.explanation
                if choice.matched:
                    found = idx[texts.index(choice.candidate)]
                    break
        if found is not None:
            claimed[i] = found
        else:
            taken = [j for j in claimed.values() if _norm(right[j].raw) == _norm(item.raw)]
            if taken:
                why = (why + " " if why else "") + f"[first claim: {right[taken[0]].raw!r} was already matched]"
        trace.append(TraceEntry(kind, item.raw, right[found].raw if found is not None else None, why, pruned, error))
    unmatched_left = tuple(i for i in range(len(left)) if i not in claimed)
    unmatched_right = tuple(j for j in range(len(right)) if j not in claimed.values())
    return Mapping_(claimed, tuple(trace), unmatched_left, unmatched_right)


# -- report --------------------------------------------------------------


@dataclass(frozen=True)
class PrivilegeViolation:
    subject: str
    asset: str
    operators: tuple[str, ...]
    opaque: bool
    explanation: str

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "asset": self.asset,
            "operators": list(self.operators),
            "opaque": self.opaque,
            "explanation": self.explanation,
        }


@dataclass
class ViolationReport:
    extra_subjects: list[str] = field(default_factory=list)
    extra_assets: list[str] = field(default_factory=list)
    privilege_violations: list[PrivilegeViolation] = field(default_factory=list)
    inheritance_missing: list[tuple[str, str]] = field(default_factory=list)
    inheritance_extra: list[tuple[str, str]] = field(default_factory=list)
    match_trace: list[TraceEntry] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (
            self.extra_subjects
            or self.extra_assets
            or self.privilege_violations
            or self.inheritance_missing
            or self.inheritance_extra
        )

    def entry_count(self) -> int:
        return (
            len(self.extra_subjects)
            + len(self.extra_assets)
            + len(self.privilege_violations)
            + len(self.inheritance_missing)
            + len(self.inheritance_extra)
        )

    def to_dict(self) -> dict:
        return {
            "compliant": self.empty,
            "extra_subjects": self.extra_subjects,
            "extra_assets": self.extra_assets,
            "privilege_violations": [v.to_dict() for v in self.privilege_violations],
            "inheritance_missing": [list(p) for p in self.inheritance_missing],
            "inheritance_extra": [list(p) for p in self.inheritance_extra],
            "match_trace": [t.to_dict() for t in self.match_trace],
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def render_text(self) -> str:
        if self.empty:
            lines = ["compliant: the implementation is at least as restrictive as the policy"]
        else:
            lines = [f"{self.entry_count()} violation(s)"]
        for s in self.extra_subjects:
            lines.append(f"extra subject: {s}")
        for a in self.extra_assets:
            lines.append(f"extra asset: {a}")
        for v in self.privilege_violations:
            what = "unclear privileges" if v.opaque else ", ".join(v.operators)
            lines.append(f"privilege violation: {v.subject} on {v.asset}: {what} ({v.explanation})")
        for r, c in self.inheritance_missing:
            lines.append(f"missing inheritance: {r} -> {c}")
        for r, c in self.inheritance_extra:
            lines.append(f"extra inheritance: {r} -> {c}")
        for e in self.errors:
            lines.append(f"error: {e}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DiffResult:
    report: ViolationReport
    subjects: Mapping_
    assets: Mapping_


def diff_detail(
    m1: AccessMatrix, m2: AccessMatrix, gateway: Gateway | None = None, sandbox=None, prune: bool = True
) -> DiffResult:
    report = ViolationReport()
    subj = map_items(m1.subjects, m2.subjects, "role", gateway, sandbox, prune)
    assets = map_items(m1.assets, m2.assets, "view", gateway, sandbox, prune)
    report.match_trace = list(subj.trace) + list(assets.trace)
    report.errors = [f"{t.kind} {t.left!r}: {t.error}" for t in report.match_trace if t.error]
    report.extra_subjects = [m2.subjects[j].raw for j in subj.unmatched_right]
    report.extra_assets = [m2.assets[j].raw for j in assets.unmatched_right]
    for i1, i2 in subj.matches.items():
        for j1, j2 in assets.matches.items():
            impl = m2.cell(i2, j2)
            if impl.empty:
                continue
            verdict = subsumption(m1.cell(i1, j1), impl, gateway, m1.subjects[i1].raw, m1.assets[j1].raw)
            if verdict.ok:
                continue
            ops = tuple(op.value for op in sort_operators(verdict.operators))
            report.privilege_violations.append(
                PrivilegeViolation(
                    m2.subjects[i2].raw,
                    m2.assets[j2].raw,
                    ops,
                    verdict.kind is VerdictKind.OPAQUE_VIOLATION,
                    verdict.explanation,
                )
            )
    report.privilege_violations.sort(key=lambda v: (m2.subject_index(v.subject), m2.asset_index(v.asset)))
    return DiffResult(report, subj, assets)


def diff(m1: AccessMatrix, m2: AccessMatrix, gateway: Gateway | None = None, sandbox=None, prune: bool = True) -> ViolationReport:
    """Everything ``m2`` grants beyond ``m1``; an empty report means ``m2`` complies."""
    if isinstance(m1, ExtendedAccessMatrix) or isinstance(m2, ExtendedAccessMatrix):
        e1 = m1 if isinstance(m1, ExtendedAccessMatrix) else ExtendedAccessMatrix(m1)
        e2 = m2 if isinstance(m2, ExtendedAccessMatrix) else ExtendedAccessMatrix(m2)
        result = diff_detail(e1.matrix, e2.matrix, gateway, sandbox, prune)
        missing, extra = diff_hierarchy(e1, e2, result.subjects.matches, gateway)
        result.report.inheritance_missing = missing
        result.report.inheritance_extra = extra
        return result.report
    return diff_detail(m1, m2, gateway, sandbox, prune).report


def diff_hierarchy(
    e1: ExtendedAccessMatrix,
    e2: ExtendedAccessMatrix,
    subject_matches: dict[int, int],
    gateway: Gateway | None = None,
) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """(role, child) pairs of matched subjects present on one side only."""
    missing, extra = [], []
    for i1, i2 in sorted(subject_matches.items()):
        c1 = [CellText.of(c) for c in e1.children_of(i1)]
        c2 = [CellText.of(c) for c in e2.children_of(i2)]
        r1, r2 = e1.matrix.subjects[i1].raw, e2.matrix.subjects[i2].raw
        if not c1 and not c2:
            continue
        if not c1 or not c2:
            missing += [(r1, c.raw) for c in c1]
            extra += [(r2, c.raw) for c in c2]
            continue
        mapping = map_items(c1, c2, "role", gateway)
        missing += [(r1, c1[i].raw) for i in mapping.unmatched_left]
        extra += [(r2, c2[j].raw) for j in mapping.unmatched_right]
    return missing, extra
