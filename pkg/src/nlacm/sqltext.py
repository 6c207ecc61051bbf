"""Dialect-level SQL handling.

Access-control statements (roles, GRANT/REVOKE, policies) are parsed by a
small strict grammar here; queries and view bodies go through sqlglot.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterator
from dataclasses import dataclass, field

import sqlglot
from sqlglot import exp
from sqlglot.errors import SqlglotError

from .model import Operator, PrivilegeSet

logging.getLogger("sqlglot").setLevel(logging.ERROR)

DIALECT = "postgres"


class SqlSyntaxError(ValueError):
    pass


def split_statements(code: str) -> list[str]:
    """Split on semicolons outside quotes, comments and parentheses."""
    out, buf = [], []
    i, n = 0, len(code)
    depth = 0
    while i < n:
        ch = code[i]
        if ch in "'\"":
            j = i + 1
            while j < n:
                if code[j] == ch:
                    if j + 1 < n and code[j + 1] == ch:
                        j += 2
                        continue
                    break
                j += 1
            buf.append(code[i : j + 1])
            i = j + 1
            continue
        if code.startswith("--", i):
            j = code.find("\n", i)
            i = n if j < 0 else j + 1
            buf.append(" ")
            continue
        if code.startswith("/*", i):
            j = code.find("*/", i + 2)
            i = n if j < 0 else j + 2
            buf.append(" ")
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        if ch == ";" and depth == 0:
            stmt = "".join(buf).strip()
            if stmt:
                out.append(stmt)
            buf = []
        else:
            buf.append(ch)
        i += 1
    tail = "".join(buf).strip()
    if tail:
        out.append(tail)
    return out


_IDENT = r'(?:"(?:[^"]|"")+"|[A-Za-z_][A-Za-z0-9_$]*)'
_QNAME = rf"{_IDENT}(?:\s*\.\s*{_IDENT})?"


def normalize_identifier(name: str) -> str:
    """Postgres identifier folding: unquoted names fold to lower case."""
    name = name.strip()
    parts = re.findall(_IDENT, name)
    folded = []
    for part in parts:
        if part.startswith('"'):
            folded.append(part[1:-1].replace('""', '"'))
        else:
            folded.append(part.lower())
    # schema qualification is ignored: one schema per sandbox
    return folded[-1] if folded else name.lower()


def quote_identifier(name: str) -> str:
    if re.fullmatch(r"[a-z_][a-z0-9_$]*", name) and name.upper() not in _ALWAYS_QUOTE:
        return name
    return '"' + name.replace('"', '""') + '"'


_ALWAYS_QUOTE = {"USER", "TABLE", "SELECT", "GRANT", "ROLE", "ORDER", "GROUP", "VIEW"}


@dataclass(frozen=True)
class CreateRole:
    name: str
    is_user: bool = False


@dataclass(frozen=True)
class GrantPrivileges:
    operators: tuple[Operator, ...]
    objects: tuple[str, ...]
    grantees: tuple[str, ...]
    grant_option: bool = False
    revoke: bool = False


@dataclass(frozen=True)
class GrantRole:
    roles: tuple[str, ...]
    members: tuple[str, ...]
    revoke: bool = False


@dataclass(frozen=True)
class RowSecurity:
    table: str
    enable: bool


@dataclass(frozen=True)
class CreatePolicy:
    name: str
    table: str
    command: str
    roles: tuple[str, ...]
    using: str
    check: str | None = None


@dataclass(frozen=True)
class CreateView:
    name: str
    select_sql: str
    replace: bool = False


@dataclass(frozen=True)
class OtherStatement:
    sql: str


Statement = CreateRole | GrantPrivileges | GrantRole | RowSecurity | CreatePolicy | CreateView | OtherStatement

_PRIV_WORDS = {
    "SELECT": Operator.SELECT,
    "INSERT": Operator.INSERT,
    "UPDATE": Operator.UPDATE,
    "DELETE": Operator.DELETE,
    "CREATE": Operator.CREATE,
}
_ALL_PRIVS = (Operator.SELECT, Operator.INSERT, Operator.UPDATE, Operator.DELETE)


def _names(text: str) -> tuple[str, ...]:
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(not re.fullmatch(_QNAME, p) for p in parts):
        raise SqlSyntaxError(f"bad name list: {text!r}")
    return tuple(normalize_identifier(p) for p in parts)


_CREATE_ROLE = re.compile(
    rf"^CREATE\s+(ROLE|USER|GROUP)\s+({_IDENT})(?:\s+(?:WITH\s+)?(.*))?$", re.IGNORECASE | re.DOTALL
)
_GRANT_PRIVS = re.compile(
    r"^GRANT\s+(.+?)\s+ON\s+(?:(?:TABLE|VIEW)\s+)?(.+?)\s+TO\s+(.+?)(\s+WITH\s+GRANT\s+OPTION)?$",
    re.IGNORECASE | re.DOTALL,
)
_REVOKE_PRIVS = re.compile(
    r"^REVOKE\s+(?:GRANT\s+OPTION\s+FOR\s+)?(.+?)\s+ON\s+(?:(?:TABLE|VIEW)\s+)?(.+?)\s+FROM\s+(.+?)(?:\s+(?:CASCADE|RESTRICT))?$",
    re.IGNORECASE | re.DOTALL,
)
_GRANT_ROLE = re.compile(r"^GRANT\s+(.+?)\s+TO\s+(.+?)(?:\s+WITH\s+(?:ADMIN|INHERIT|SET)\s+\w+)?$", re.IGNORECASE | re.DOTALL)
_REVOKE_ROLE = re.compile(r"^REVOKE\s+(.+?)\s+FROM\s+(.+?)(?:\s+(?:CASCADE|RESTRICT))?$", re.IGNORECASE | re.DOTALL)
_ROW_SECURITY = re.compile(
    rf"^ALTER\s+TABLE\s+(?:ONLY\s+)?({_QNAME})\s+(ENABLE|DISABLE|FORCE)\s+ROW\s+LEVEL\s+SECURITY$", re.IGNORECASE
)
_CREATE_POLICY = re.compile(
    rf"^CREATE\s+POLICY\s+({_IDENT})\s+ON\s+({_QNAME})"
    rf"(?:\s+AS\s+(?:PERMISSIVE|RESTRICTIVE))?"
    rf"(?:\s+FOR\s+(ALL|SELECT|INSERT|UPDATE|DELETE))?"
    rf"(?:\s+TO\s+(.+?))?"
    rf"(?:\s+USING\s*\((.*?)\))?"
    rf"(?:\s+WITH\s+CHECK\s*\((.*)\))?$",
    re.IGNORECASE | re.DOTALL,
)
_CREATE_VIEW = re.compile(
    rf"^CREATE\s+(OR\s+REPLACE\s+)?(?:TEMP(?:ORARY)?\s+)?VIEW\s+({_QNAME})\s*(?:\([^)]*\)\s*)?AS\s+(.*)$",
    re.IGNORECASE | re.DOTALL,
)


def _privileges(text: str) -> tuple[Operator, ...]:
    words = [w.strip().upper() for w in text.split(",")]
    ops: list[Operator] = []
    for w in words:
        w = re.sub(r"\s+", " ", w)
        if w in ("ALL", "ALL PRIVILEGES"):
            ops.extend(_ALL_PRIVS)
        elif w in _PRIV_WORDS:
            ops.append(_PRIV_WORDS[w])
        else:
            raise SqlSyntaxError(f"unknown privilege {w!r}")
    return tuple(dict.fromkeys(ops))


def _looks_like_privileges(text: str) -> bool:
    words = [re.sub(r"\s+", " ", w.strip().upper()) for w in text.split(",")]
    return all(w in _PRIV_WORDS or w in ("ALL", "ALL PRIVILEGES") for w in words)


def parse_statement(sql: str) -> Statement:
    """Parse one statement; raises SqlSyntaxError when it is not valid SQL."""
    text = sql.strip().rstrip(";").strip()
    if not text:
        raise SqlSyntaxError("empty statement")
    head = text.split(None, 1)[0].upper()
    if head == "CREATE":
        m = _CREATE_ROLE.match(text)
        if m:
            return CreateRole(normalize_identifier(m.group(2)), m.group(1).upper() == "USER")
        m = _CREATE_POLICY.match(text)
        if m:
            name, table, cmd, roles, using, check = m.groups()
            if using is None and check is None:
                raise SqlSyntaxError("CREATE POLICY needs USING or WITH CHECK")
            return CreatePolicy(
                normalize_identifier(name),
                normalize_identifier(table),
                (cmd or "ALL").upper(),
                _names(roles) if roles else ("public",),
                (using or "").strip(),
                check.strip() if check else None,
            )
        m = _CREATE_VIEW.match(text)
        if m:
            body = m.group(3).strip()
            parse_query(body)
            return CreateView(normalize_identifier(m.group(2)), body, bool(m.group(1)))
    if head == "GRANT":
        m = _GRANT_PRIVS.match(text)
        if m and _looks_like_privileges(m.group(1)):
            return GrantPrivileges(
                _privileges(m.group(1)), _names(m.group(2)), _names(m.group(3)), bool(m.group(4))
            )
        if re.search(r"\sON\s", text, re.IGNORECASE):
            raise SqlSyntaxError(f"malformed GRANT: {text!r}")
        m = _GRANT_ROLE.match(text)
        if m:
            return GrantRole(_names(m.group(1)), _names(m.group(2)))
        raise SqlSyntaxError(f"malformed GRANT: {text!r}")
    if head == "ALTER":
        m = _ROW_SECURITY.match(text)
        if m:
            return RowSecurity(normalize_identifier(m.group(1)), m.group(2).upper() != "DISABLE")
    if head == "REVOKE":
        m = _REVOKE_PRIVS.match(text)
        if m and _looks_like_privileges(m.group(1)):
            return GrantPrivileges(
                _privileges(m.group(1)), _names(m.group(2)), _names(m.group(3)), revoke=True
            )
        m = _REVOKE_ROLE.match(text)
        if m and not re.search(r"\sON\s", text, re.IGNORECASE):
            return GrantRole(_names(m.group(1)), _names(m.group(2)), revoke=True)
        raise SqlSyntaxError(f"malformed REVOKE: {text!r}")
    try:
        tree = sqlglot.parse_one(text, read=DIALECT)
    except SqlglotError as exc:
        raise SqlSyntaxError(str(exc).splitlines()[0]) from None
    if tree is None or isinstance(tree, exp.Command):
        raise SqlSyntaxError(f"unsupported statement: {text[:60]!r}")
    return OtherStatement(text)


def parse_script(code: str) -> list[Statement]:
    return [parse_statement(s) for s in split_statements(code)]


def parses(sql: str) -> bool:
    try:
        parse_statement(sql)
    except SqlSyntaxError:
        return False
    return True


# -- queries ---------------------------------------------------------------


def parse_query(sql: str) -> exp.Expression:
    text = sql.strip().rstrip(";")
    try:
        tree = sqlglot.parse_one(text, read=DIALECT)
    except SqlglotError as exc:
        raise SqlSyntaxError(str(exc).splitlines()[0]) from None
    if not isinstance(tree, exp.Query):
        raise SqlSyntaxError(f"not a query: {text[:60]!r}")
    return tree


def canonical_query(sql: str) -> str:
    """Whitespace/case-insensitive canonical text of a query, for equality fast paths."""
    tree = parse_query(sql)
    return tree.sql(dialect=DIALECT, normalize=True, pretty=False)


def to_sqlite(sql: str) -> str:
    return sqlglot.transpile(sql, read=DIALECT, write="sqlite")[0]


def view_body(asset_sql: str) -> str | None:
    """The SELECT of a view asset: a CREATE VIEW's body or a bare query."""
    text = asset_sql.strip().rstrip(";")
    m = _CREATE_VIEW.match(text)
    if m:
        return m.group(3).strip()
    try:
        parse_query(text)
    except SqlSyntaxError:
        return None
    return text


def view_name(asset_sql: str) -> str | None:
    m = _CREATE_VIEW.match(asset_sql.strip().rstrip(";"))
    return normalize_identifier(m.group(2)) if m else None


@dataclass
class QueryRefs:
    """Tables, columns and column-literal comparisons a query mentions."""

    tables: set[str] = field(default_factory=set)
    columns: list[tuple[str | None, str]] = field(default_factory=list)
    literals: list[tuple[exp.Literal, str | None, str]] = field(default_factory=list)
    aliases: dict[str, str] = field(default_factory=dict)
    ctes: set[str] = field(default_factory=set)
    output_aliases: set[str] = field(default_factory=set)


_COMPARISONS = (exp.EQ, exp.NEQ, exp.GT, exp.GTE, exp.LT, exp.LTE, exp.Like, exp.ILike)


def _column_of(node: exp.Expression) -> exp.Column | None:
    while isinstance(node, (exp.Paren, exp.Cast, exp.Lower, exp.Upper, exp.Trim)):
        node = node.this
    return node if isinstance(node, exp.Column) else None


def query_refs(tree: exp.Expression) -> QueryRefs:
    refs = QueryRefs()
    for cte in tree.find_all(exp.CTE):
        refs.ctes.add(cte.alias_or_name.lower())
    for table in tree.find_all(exp.Table):
        name = table.name.lower()
        if not name or name in refs.ctes:
            continue
        refs.tables.add(name)
        refs.aliases[name] = name
        if table.alias:
            refs.aliases[table.alias.lower()] = name
    for sub in tree.find_all(exp.Subquery):
        if sub.alias:
            refs.ctes.add(sub.alias.lower())
    for alias in tree.find_all(exp.Alias):
        refs.output_aliases.add(alias.alias.lower())
    for col in tree.find_all(exp.Column):
        if isinstance(col.this, exp.Star):
            continue
        qual = col.table.lower() or None
        refs.columns.append((qual, col.name.lower()))
    for node in tree.find_all(*_COMPARISONS, exp.In):
        if isinstance(node, exp.In):
            col = _column_of(node.this)
            lits = [e for e in node.expressions if isinstance(e, exp.Literal)]
        else:
            left, right = node.this, node.expression
            col, lits = _column_of(left), [right] if isinstance(right, exp.Literal) else []
            if col is None and isinstance(left, exp.Literal):
                col, lits = _column_of(right), [left]
        if col is None:
            continue
        for lit in lits:
            refs.literals.append((lit, col.table.lower() or None, col.name.lower()))
    return refs


def resolve_table(refs: QueryRefs, qualifier: str | None, column: str, columns_of) -> str | None:
    """The base table a (possibly unqualified) column belongs to, if determinable."""
    if qualifier:
        return refs.aliases.get(qualifier)
    owners = [t for t in sorted(refs.tables) if column in columns_of(t)]
    return owners[0] if len(owners) == 1 else None


def grant_cell_privileges(text: str) -> dict[tuple[str, str], PrivilegeSet] | None:
    """Privileges granted by a cell made only of GRANT-on-object statements.

    Returns None when the text holds anything else, keyed by (grantee, object).
    """
    out: dict[tuple[str, str], set[Operator]] = {}
    stmts = split_statements(text)
    if not stmts:
        return None
    for sql in stmts:
        try:
            st = parse_statement(sql)
        except SqlSyntaxError:
            return None
        if not isinstance(st, GrantPrivileges) or st.revoke:
            return None
        for grantee in st.grantees:
            for obj in st.objects:
                ops = out.setdefault((grantee, obj), set())
                ops.update(st.operators)
                if st.grant_option:
                    ops.add(Operator.GRANT)
    return {k: PrivilegeSet(frozenset(v)) for k, v in out.items()}


def iter_literals(tree: exp.Expression) -> Iterator[exp.Literal]:
    yield from tree.find_all(exp.Literal)
