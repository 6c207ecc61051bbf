"""Compile an access matrix into a SQL script of roles, views and grants."""

from __future__ import annotations

import enum
import re
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TypeVar

from sqlglot import exp

from .embedding import Embedder, TrigramEmbedder, nearest
from .gateway import Gateway, extract_code_blocks, parse_operator_list
from .model import (
    AccessMatrix,
    CellText,
    Kind,
    PrivilegeError,
    PrivilegeSet,
    parse_privileges,
)
from .schema import SchemaContext
from .sqltext import (
    CreateRole,
    CreateView,
    SqlSyntaxError,
    grant_cell_privileges,
    parse_query,
    parse_statement,
    query_refs,
    resolve_table,
    split_statements,
    view_body,
)

T = TypeVar("T")
R = TypeVar("R")


class StatementKind(str, enum.Enum):
    CREATE_ROLE = "CreateRole"
    CREATE_USER = "CreateUser"
    CREATE_VIEW = "CreateView"
    GRANT = "Grant"
    GRANT_ROLE = "GrantRole"


_PHASE = {
    StatementKind.CREATE_ROLE: 0,
    StatementKind.CREATE_USER: 0,
    StatementKind.CREATE_VIEW: 1,
    StatementKind.GRANT: 2,
    StatementKind.GRANT_ROLE: 2,
}


@dataclass(frozen=True)
class ScriptStatement:
    kind: StatementKind
    text: str
    provenance: tuple[int, int] | None = None
    flag: str | None = None


class ScriptOrderError(ValueError):
    pass


@dataclass(frozen=True)
class SqlScript:
    """Roles and users first, then views, then grants."""

    statements: tuple[ScriptStatement, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "statements", tuple(self.statements))
        phases = [_PHASE[s.kind] for s in self.statements]
        if phases != sorted(phases):
            raise ScriptOrderError("statements out of order: roles, then views, then grants")

    def texts(self) -> list[str]:
        return [s.text for s in self.statements]

    def of_kind(self, *kinds: StatementKind) -> list[ScriptStatement]:
        return [s for s in self.statements if s.kind in kinds]

    def render(self) -> str:
        return "".join(s.text + "\n" for s in self.statements)

    def __len__(self) -> int:
        return len(self.statements)

    def __iter__(self):
        return iter(self.statements)


class SynthesisError(RuntimeError):
    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class RepairUnavailable(RuntimeError):
    pass


# -- helpers -------------------------------------------------------------

_IDENT_ONLY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def sanitize_label(text: str) -> str:
    """Identifier form of a free-text label: lower snake case, at most 63 chars."""
    line = text.strip().splitlines()[0] if text.strip() else ""
    line = re.sub(r"(?i)^(role|label|answer)\s*:\s*", "", line)
    label = re.sub(r"[^0-9a-z]+", "_", line.casefold()).strip("_")
    if label and label[0].isdigit():
        label = "r_" + label
    return label[:63].rstrip("_")


def _unique(label: str, taken: set[str]) -> str:
    key = label.lower()
    if key not in taken:
        taken.add(key)
        return label
    n = 2
    while f"{key}_{n}" in taken:
        n += 1
    taken.add(f"{key}_{n}")
    return f"{label}_{n}"


def _pmap(gateway: Gateway | None, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map with the gateway's live parallelism; sequential for replay and oracle backends."""
    live = gateway is not None and getattr(gateway.backend, "name", "") == "live"
    if live and gateway.parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=gateway.parallelism) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- roles -------------------------------------------------------------------


@dataclass(frozen=True)
class RoleSynthesis:
    statements: tuple[ScriptStatement, ...]
    labels: tuple[str, ...]


def _sql_role(subject: CellText) -> tuple[str, bool] | None:
    text = subject.raw.strip()
    if _IDENT_ONLY.fullmatch(text):
        return text, False
    try:
        st = parse_statement(text)
    except SqlSyntaxError:
        return None
    if isinstance(st, CreateRole):
        return st.name, st.is_user
    return None


def synthesize_roles(matrix: AccessMatrix, gateway: Gateway | None = None) -> RoleSynthesis:
    """One CREATE ROLE/USER per subject plus the subject -> label map.

    Identifier-shaped and SQL subjects are used as labels directly; other
    subjects are labeled by prompt.
    """
    direct = [_sql_role(s) for s in matrix.subjects]
    pending = [i for i, d in enumerate(direct) if d is None]
    if pending and gateway is None:
        raise SynthesisError("natural-language subjects need a gateway")

    def ask(i: int) -> str:
        return gateway.ask("role_label", {"role": matrix.subjects[i].raw})

    answers = dict(zip(pending, _pmap(gateway, ask, pending)))
    taken: set[str] = set()
    statements, labels = [], []
    for i, subject in enumerate(matrix.subjects):
        if direct[i] is not None:
            label, is_user = direct[i]
        else:
            label, is_user = sanitize_label(answers[i]), False
            if not label:
                raise SynthesisError(f"empty role label for subject {i}", answers[i])
        label = _unique(label, taken)
        kind = StatementKind.CREATE_USER if is_user else StatementKind.CREATE_ROLE
        verb = "USER" if is_user else "ROLE"
        statements.append(ScriptStatement(kind, f"CREATE {verb} {label};", (i, -1)))
        labels.append(label)
    return RoleSynthesis(tuple(statements), tuple(labels))


# -- views ---------------------------------------------------------------


@dataclass(frozen=True)
class ViewSynthesis:
    label: str
    statement: ScriptStatement | None
    raw_response: str | None = None


def _completion_to_view(response: str, name: str) -> str:
    """Turn a completion of ``CREATE VIEW`` into one statement naming ``name``."""
    code = extract_code_blocks(response)[0].strip()
    if not re.match(r"(?i)^\s*create\b", code):
        code = "CREATE VIEW " + code
    stmts = split_statements(code)
    if not stmts:
        raise SqlSyntaxError("empty completion")
    st = parse_statement(stmts[0])
    if not isinstance(st, CreateView):
        raise SqlSyntaxError("completion is not a CREATE VIEW statement")
    return f"CREATE VIEW {name} AS {st.select_sql};"


def synthesize_view(
    asset: CellText,
    schema: SchemaContext,
    name: str,
    gateway: Gateway | None = None,
    asset_index: int | None = None,
) -> ViewSynthesis:
    """A CREATE VIEW for one asset; table names and SQL pass through without a prompt."""
    text = asset.raw.strip()
    prov = (-1, asset_index) if asset_index is not None else None
    if _IDENT_ONLY.fullmatch(text) and schema.has_table(text):
        return ViewSynthesis(text, None)
    if asset.kind is Kind.SQL:
        try:
            st = parse_statement(text)
        except SqlSyntaxError:
            st = None
        if isinstance(st, CreateView):
            return ViewSynthesis(st.name, ScriptStatement(StatementKind.CREATE_VIEW, text.rstrip(";") + ";", prov))
        body = view_body(text)
        if body is not None:
            return ViewSynthesis(name, ScriptStatement(StatementKind.CREATE_VIEW, f"CREATE VIEW {name} AS {body};", prov))
    if gateway is None:
        raise SynthesisError(f"asset {text[:40]!r} needs a gateway")
    slots = {"schema": schema.render(), "description": text, "view_name": name}
    response = gateway.ask("view_completion", slots)
    try:
        sql = _completion_to_view(response, name)
    except SqlSyntaxError:
        retry = gateway.ask("view_reask", {**slots, "previous": response})
        try:
            sql = _completion_to_view(retry, name)
        except SqlSyntaxError as exc:
            raise SynthesisError(f"unparseable view completion for {name}: {exc}", retry) from None
        response = retry
    return ViewSynthesis(name, ScriptStatement(StatementKind.CREATE_VIEW, sql, prov), response)


# -- privileges ----------------------------------------------------------


@dataclass(frozen=True)
class PrivilegeSynthesis:
    privileges: PrivilegeSet | None
    flag: str | None = None
    response: str | None = None


def synthesize_privileges(
    cell: CellText, role_label: str, view_label: str, gateway: Gateway | None = None
) -> PrivilegeSynthesis:
    if cell.empty:
        raise ValueError("synthesize_privileges needs a non-empty cell")
    parsed = parse_privileges(cell)
    if isinstance(parsed, PrivilegeSet) and parsed:
        return PrivilegeSynthesis(parsed)
    granted = grant_cell_privileges(cell.raw)
    if granted:
        ops = frozenset().union(*(p.operators for p in granted.values()))
        return PrivilegeSynthesis(PrivilegeSet(ops))
    if gateway is None:
        return PrivilegeSynthesis(None, "cell needs a gateway to interpret")
    response = gateway.ask("privilege_map", {"nl": cell.raw, "role": role_label, "view": view_label})
    privs = parse_operator_list(response)
    if privs is None:
        return PrivilegeSynthesis(None, "no operators recognized in a non-empty cell", response)
    return PrivilegeSynthesis(privs, None, response)


def grant_statement(role_label: str, asset_label: str, privs: PrivilegeSet) -> str:
    if not privs.plain:
        raise PrivilegeError("cannot grant an empty privilege set")
    ops = ", ".join(op.value for op in privs.plain)
    suffix = " WITH GRANT OPTION" if privs.grant_option else ""
    return f"GRANT {ops} ON {asset_label} TO {role_label}{suffix};"


# -- literal repair ------------------------------------------------------


@dataclass(frozen=True)
class Replacement:
    table: str
    column: str
    old: str
    new: str


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _candidate_values(table, column, schema, catalog) -> list:
    if catalog is not None:
        try:
            return list(catalog.fetch_column_values(table, column))
        except Exception:
            return []
    t = schema.table(table)
    if t is None:
        return []
    names = [c.lower() for c in t.column_names()]
    if column not in names:
        return []
    k = names.index(column)
    values = {row[k] for row in t.rows if row[k] is not None}
    values |= set(schema.value_samples.get((t.name, column), ()))
    return sorted(values, key=repr)


def repair_literals_detail(
    statement: str,
    schema: SchemaContext,
    catalog=None,
    embedder: Embedder | None = None,
) -> tuple[str, list[Replacement]]:
    embedder = embedder or TrigramEmbedder()
    text = statement.strip().rstrip(";")
    prefix = ""
    try:
        st = parse_statement(text)
    except SqlSyntaxError as exc:
        raise RepairUnavailable(f"statement does not parse: {exc}") from None
    if isinstance(st, CreateView):
        prefix, body = f"CREATE VIEW {st.name} AS ", st.select_sql
    else:
        body = text
    try:
        tree = parse_query(body)
    except SqlSyntaxError as exc:
        raise RepairUnavailable(str(exc)) from None
    refs = query_refs(tree)

    def columns_of(table: str) -> set[str]:
        if catalog is not None:
            try:
                return set(catalog.columns(table))
            except Exception:
                return set()
        return schema.columns_of(table)

    replacements: list[Replacement] = []
    any_candidates = False
    # thresholds and patterns are not meant to name stored values
    considered = [
        (lit, qual, column)
        for lit, qual, column in refs.literals
        if not isinstance(lit.parent, (exp.Like, exp.ILike, exp.GT, exp.GTE, exp.LT, exp.LTE))
    ]
    for lit, qual, column in considered:
        table = resolve_table(refs, qual, column, columns_of)
        if table is None:
            continue
        values = _candidate_values(table, column, schema, catalog)
        if not values:
            continue
        any_candidates = True
        current = lit.this
        as_text = [str(v) for v in values]
        if current in as_text:
            continue
        best = nearest(current, as_text, embedder)
        value = values[as_text.index(best)]
        new = exp.Literal.number(value) if _is_number(value) else exp.Literal.string(str(value))
        lit.replace(new)
        replacements.append(Replacement(table, column, current, best))
    if not any_candidates and considered:
        raise RepairUnavailable("no candidate values retrievable for the statement's literals")
    if not replacements:
        return statement, []
    out = prefix + tree.sql(dialect="postgres")
    return out + (";" if statement.strip().endswith(";") else ""), replacements


def repair_literals(statement: str, schema: SchemaContext, catalog=None, embedder: Embedder | None = None) -> str:
    """Snap each literal compared with a column onto that column's nearest stored value."""
    return repair_literals_detail(statement, schema, catalog, embedder)[0]


# -- whole matrix ----------------------------------------------------------


@dataclass
class CellReport:
    cell: tuple[int, int]
    status: str  # ok | empty | flagged | error
    statements: list[str] = field(default_factory=list)
    privileges: str = ""
    error: str | None = None

    def to_dict(self) -> dict:
        doc = {"cell": list(self.cell), "status": self.status, "statements": self.statements}
        if self.privileges:
            doc["privileges"] = self.privileges
        if self.error:
            doc["error"] = self.error
        return doc


@dataclass
class SynthesisReport:
    roles: list[str] = field(default_factory=list)
    views: list[str | None] = field(default_factory=list)
    cells: list[CellReport] = field(default_factory=list)
    asset_errors: dict[int, str] = field(default_factory=dict)
    repairs: list[Replacement] = field(default_factory=list)

    @property
    def failures(self) -> list[CellReport]:
        return [c for c in self.cells if c.status in ("flagged", "error")]

    @property
    def ok(self) -> bool:
        return not self.failures and not self.asset_errors

    def to_dict(self) -> dict:
        return {
            "roles": self.roles,
            "views": self.views,
            "asset_errors": {str(k): v for k, v in sorted(self.asset_errors.items())},
            "repairs": [r.__dict__ for r in self.repairs],
            "cells": [c.to_dict() for c in self.cells],
        }


@dataclass(frozen=True)
class Synthesis:
    script: SqlScript
    report: SynthesisReport
    role_labels: tuple[str, ...]
    view_labels: tuple[str | None, ...]


def _fresh_view_names(matrix: AccessMatrix, schema: SchemaContext) -> list[str]:
    taken = {t.name.lower() for t in schema.tables}
    names, counter = [], 0
    for _ in matrix.assets:
        while f"view_{counter}" in taken:
            counter += 1
        names.append(f"view_{counter}")
        taken.add(f"view_{counter}")
        counter += 1
    return names


def synthesize(
    matrix: AccessMatrix,
    schema: SchemaContext,
    gateway: Gateway | None = None,
    sandbox=None,
    embedder: Embedder | None = None,
) -> Synthesis:
    """Roles, views, privileges and grants for a whole matrix.

    With a ``sandbox`` (a scratch database seeded with the schema), each
    synthesized view is executed there and its literals are repaired against
    stored column values. Failures are recorded per cell; the script keeps
    everything that did synthesize.
    """
    report = SynthesisReport()
    roles = synthesize_roles(matrix, gateway)
    report.roles = list(roles.labels)

    names = _fresh_view_names(matrix, schema)

    def make_view(j: int) -> ViewSynthesis | SynthesisError:
        try:
            return synthesize_view(matrix.assets[j], schema, names[j], gateway, j)
        except SynthesisError as exc:
            return exc

    views: list[ViewSynthesis | None] = []
    for j, outcome in enumerate(_pmap(gateway, make_view, list(range(len(matrix.assets))))):
        if isinstance(outcome, SynthesisError):
            report.asset_errors[j] = str(outcome)
            views.append(None)
            continue
        if outcome.statement is not None and sandbox is not None:
            outcome = _check_view(outcome, schema, sandbox, embedder, report, j)
        views.append(outcome)
    report.views = [v.label if v else None for v in views]

    work = [
        (i, j)
        for i in range(len(matrix.subjects))
        for j in range(len(matrix.assets))
        if not matrix.cell(i, j).empty and views[j] is not None
    ]

    def privs(ij: tuple[int, int]) -> PrivilegeSynthesis:
        i, j = ij
        return synthesize_privileges(matrix.cell(i, j), roles.labels[i], views[j].label, gateway)

    outcomes = dict(zip(work, _pmap(gateway, privs, work)))
    grants: list[ScriptStatement] = []
    for i in range(len(matrix.subjects)):
        for j in range(len(matrix.assets)):
            cell = matrix.cell(i, j)
            if cell.empty:
                report.cells.append(CellReport((i, j), "empty"))
                continue
            if views[j] is None:
                report.cells.append(CellReport((i, j), "error", error=report.asset_errors.get(j)))
                continue
            got = outcomes[(i, j)]
            if got.privileges is None:
                report.cells.append(CellReport((i, j), "flagged", error=got.flag))
                continue
            text = grant_statement(roles.labels[i], views[j].label, got.privileges)
            grants.append(ScriptStatement(StatementKind.GRANT, text, (i, j)))
            report.cells.append(CellReport((i, j), "ok", [text], got.privileges.render()))

    view_statements = [v.statement for v in views if v is not None and v.statement is not None]
    script = SqlScript(tuple(roles.statements) + tuple(view_statements) + tuple(grants))
    return Synthesis(script, report, roles.labels, tuple(report.views))


def _view_fails(text: str, sandbox) -> bool:
    """A view needs repair when its query errors or returns no rows."""
    body = view_body(text)
    if body is None:
        return True
    try:
        return not sandbox.query(f"SELECT * FROM ({body}) AS probe LIMIT 1")
    except Exception:
        return True


def _check_view(view: ViewSynthesis, schema, sandbox, embedder, report: SynthesisReport, j: int) -> ViewSynthesis:
    text = view.statement.text
    fixed, reps = text, []
    if _view_fails(text, sandbox):
        try:
            fixed, reps = repair_literals_detail(text, schema, sandbox, embedder)
        except RepairUnavailable:
            pass
    report.repairs.extend(reps)
    results = sandbox.execute_script([fixed])
    if not results[0].ok:
        report.asset_errors[j] = results[0].error or "view failed to execute"
    stmt = ScriptStatement(StatementKind.CREATE_VIEW, fixed, view.statement.provenance)
    return ViewSynthesis(view.label, stmt, view.raw_response)
