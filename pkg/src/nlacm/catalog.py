"""Database targets: script execution, catalog introspection and the ACM generator.

The embedded sandbox emulates the parts of a Postgres server this toolkit
touches: roles, table/view grants with grant option, role membership and
row-level policies, exposed through ``information_schema`` and
``pg_catalog`` relations. Data, tables and views live in sqlite; queries
written in the Postgres dialect are transpiled before they run.
"""

from __future__ import annotations

import sqlite3
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .model import (
    AccessMatrix,
    CellText,
    ExtendedAccessMatrix,
    HierarchyEntry,
    Kind,
    Operator,
    PrivilegeSet,
    find_cycle,
)
from .schema import SchemaContext
from .sqltext import (
    CreatePolicy,
    CreateRole,
    CreateView,
    GrantPrivileges,
    GrantRole,
    OtherStatement,
    RowSecurity,
    SqlSyntaxError,
    normalize_identifier,
    parse_statement,
    split_statements,
    to_sqlite,
)

SUPERUSER = "postgres"


class CatalogError(RuntimeError):
    pass


class SqlExecutionError(CatalogError):
    pass


@dataclass(frozen=True, order=True)
class GrantRecord:
    grantee: str
    asset: str
    operator: Operator
    grant_option: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "operator", Operator(self.operator))
        if not self.grantee or not self.asset:
            raise ValueError("grant record needs grantee and asset")


@dataclass(frozen=True, order=True)
class InheritanceRecord:
    """``parent`` is a member of ``child`` and so inherits its privileges."""

    parent: str
    child: str

    def __post_init__(self) -> None:
        if self.parent == self.child:
            raise ValueError(f"role {self.parent!r} cannot inherit from itself")


@dataclass(frozen=True)
class StatementResult:
    index: int
    sql: str
    ok: bool
    error: str | None = None
    rows: tuple[tuple, ...] = ()


@dataclass(frozen=True)
class DialectProfile:
    name: str
    grants_query: str
    membership_query: str
    views_query: str


PROFILES: dict[str, DialectProfile] = {
    "postgres": DialectProfile(
        "postgres",
        "SELECT grantee, table_name, privilege_type, is_grantable "
        "FROM information_schema.role_table_grants",
        "SELECT m.rolname AS parent, r.rolname AS child FROM pg_catalog.pg_auth_members AS am "
        "JOIN pg_catalog.pg_roles AS r ON am.roleid = r.oid "
        "JOIN pg_catalog.pg_roles AS m ON am.member = m.oid",
        "SELECT table_name, view_definition FROM information_schema.views "
        "WHERE table_schema = 'public'",
    ),
    # MySQL keeps grants in information_schema.TABLE_PRIVILEGES and role
    # edges in mysql.role_edges; no connector ships for it yet.
    "mysql": DialectProfile(
        "mysql",
        "SELECT GRANTEE, TABLE_NAME, PRIVILEGE_TYPE, IS_GRANTABLE "
        "FROM information_schema.TABLE_PRIVILEGES",
        "SELECT TO_USER AS parent, FROM_USER AS child FROM mysql.role_edges",
        "SELECT TABLE_NAME, VIEW_DEFINITION FROM information_schema.VIEWS",
    ),
}


def get_profile(name: str) -> DialectProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise CatalogError(f"unknown dialect profile {name!r}") from None


def _grant_records(rows: Iterable[Sequence], owner: str | None) -> list[GrantRecord]:
    out = set()
    for grantee, table, priv, grantable in rows:
        grantee = str(grantee).strip().strip("'").split("@")[0]
        if owner is not None and grantee == owner:
            continue
        try:
            op = Operator(str(priv).upper())
        except ValueError:
            continue  # TRUNCATE, REFERENCES, TRIGGER: outside the operator universe
        out.add(GrantRecord(grantee, str(table).lower(), op, str(grantable).upper() in ("YES", "TRUE", "1")))
    return sorted(out)




def _statement_texts(script) -> list[str]:
    if isinstance(script, str):
        return split_statements(script)
    texts = getattr(script, "texts", None)
    if callable(texts):
        return list(texts())
    return [str(s) for s in script]


class _Target:
    """Shared behavior of database targets."""

    profile: DialectProfile
    owner: str | None = SUPERUSER

    def execute(self, sql: str) -> tuple[tuple, ...]:
        raise NotImplementedError

    def query(self, sql: str) -> list[tuple]:
        raise NotImplementedError

    def execute_script(self, script) -> list[StatementResult]:
        """Run statements in order; a failing statement does not stop later ones."""
        results = []
        for i, sql in enumerate(_statement_texts(script)):
            try:
                rows = self.execute(sql)
            except (SqlExecutionError, SqlSyntaxError) as exc:
                results.append(StatementResult(i, sql, False, str(exc)))
            else:
                results.append(StatementResult(i, sql, True, None, rows))
        return results

    def fetch_grants(self) -> list[GrantRecord]:
        return _grant_records(self.query(self.profile.grants_query), self.owner)

    def fetch_inheritance(self) -> list[InheritanceRecord]:
        rows = self.query(self.profile.membership_query)
        return sorted({InheritanceRecord(str(p), str(c)) for p, c in rows if p != c})

    def fetch_views(self) -> dict[str, str]:
        return {str(n).lower(): str(d).strip().rstrip(";").strip() for n, d in self.query(self.profile.views_query)}

    def generate_acm(self, with_views: bool = True) -> AccessMatrix:
        return generate_acm(self.fetch_grants(), self.fetch_inheritance(), self.fetch_views() if with_views else None)

    def generate_enlacm(self, with_views: bool = True) -> ExtendedAccessMatrix:
        return generate_enlacm(
            self.fetch_grants(), self.fetch_inheritance(), self.fetch_views() if with_views else None
        )


class SandboxDatabase(_Target):
    """Embedded disposable database with a Postgres-shaped access-control catalog."""

    def __init__(self, path: str | Path = ":memory:", profile: str = "postgres"):
        self.path = str(path)
        self.profile = get_profile(profile)
        self.conn = sqlite3.connect(self.path, isolation_level=None, check_same_thread=False)
        self.conn.execute("ATTACH DATABASE ':memory:' AS information_schema")
        self.conn.execute("ATTACH DATABASE ':memory:' AS pg_catalog")
        self.conn.executescript(
            """
            CREATE TABLE IF NOT EXISTS main._acl_roles (
                oid INTEGER PRIMARY KEY, rolname TEXT UNIQUE NOT NULL, rolcanlogin INTEGER NOT NULL);
            CREATE TABLE IF NOT EXISTS main._acl_grants (
                grantee TEXT, relname TEXT, privilege TEXT, grantable INTEGER,
                PRIMARY KEY (grantee, relname, privilege));
            CREATE TABLE IF NOT EXISTS main._acl_members (
                roleid TEXT, member TEXT, PRIMARY KEY (roleid, member));
            CREATE TABLE IF NOT EXISTS main._acl_views (name TEXT PRIMARY KEY, definition TEXT);
            CREATE TABLE IF NOT EXISTS main._acl_policies (
                policyname TEXT, tablename TEXT, cmd TEXT, roles TEXT, qual TEXT, with_check TEXT,
                PRIMARY KEY (policyname, tablename));
            CREATE TABLE IF NOT EXISTS main._acl_rls (relname TEXT PRIMARY KEY);
            """
        )
        self.conn.execute(
            "INSERT OR IGNORE INTO _acl_roles VALUES (10, ?, 1)", (SUPERUSER,)
        )
        self._create_mirrors()
        self._dirty = True

    @classmethod
    def from_schema(cls, schema: SchemaContext, path: str | Path = ":memory:") -> SandboxDatabase:
        db = cls(path)
        db.seed(schema)
        return db

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> SandboxDatabase:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- seeding -----------------------------------------------------------

    def seed(self, schema: SchemaContext) -> None:
        for table in schema.tables:
            cols = ", ".join(f'"{c.name.lower()}" {c.type}' for c in table.columns)
            name = table.name.lower()
            self._run(f'CREATE TABLE IF NOT EXISTS "{name}" ({cols})')
            if table.rows:
                marks = ", ".join("?" for _ in table.columns)
                self.conn.executemany(f'INSERT INTO "{name}" VALUES ({marks})', table.rows)
        self._dirty = True

    # -- catalog state -----------------------------------------------------

    def relations(self) -> dict[str, str]:
        """Lower-cased relation name -> 'table' | 'view' for user relations."""
        rows = self.conn.execute(
            "SELECT name, type FROM main.sqlite_master WHERE type IN ('table', 'view')"
        ).fetchall()
        return {n.lower(): t for n, t in rows if not n.startswith(("_acl_", "sqlite_"))}

    def columns(self, relation: str) -> list[str]:
        if relation.lower() not in self.relations():
            raise CatalogError(f'relation "{relation}" does not exist')
        rows = self.conn.execute(f'PRAGMA main.table_info("{relation.lower()}")').fetchall()
        return [r[1].lower() for r in rows]

    def roles(self) -> list[str]:
        return [r[0] for r in self.conn.execute("SELECT rolname FROM _acl_roles ORDER BY oid")]

    def _role_exists(self, name: str) -> bool:
        return self.conn.execute("SELECT 1 FROM _acl_roles WHERE rolname = ?", (name,)).fetchone() is not None

    def _require_roles(self, names: Iterable[str], allow_public: bool = True) -> None:
        for name in names:
            if allow_public and name == "public":
                continue
            if not self._role_exists(name):
                raise SqlExecutionError(f'role "{name}" does not exist')

    def _require_relations(self, names: Iterable[str]) -> None:
        rels = self.relations()
        for name in names:
            if name not in rels:
                raise SqlExecutionError(f'relation "{name}" does not exist')

    def _membership_edges(self) -> list[tuple[str, str]]:
        return [(m, r) for r, m in self.conn.execute("SELECT roleid, member FROM _acl_members")]

    # -- execution ---------------------------------------------------------

    def _run(self, sql: str, params: Sequence = ()) -> list[tuple]:
        try:
            return self.conn.execute(sql, params).fetchall()
        except sqlite3.Error as exc:
            raise SqlExecutionError(str(exc)) from None

    def execute(self, sql: str) -> tuple[tuple, ...]:
        try:
            st = parse_statement(sql)
        except SqlSyntaxError as exc:
            raise SqlExecutionError(f"syntax error: {exc}") from None
        self._dirty = True
        if isinstance(st, CreateRole):
            if self._role_exists(st.name) or st.name == "public":
                raise SqlExecutionError(f'role "{st.name}" already exists')
            (next_oid,) = self.conn.execute("SELECT max(oid) + 1 FROM _acl_roles").fetchone()
            self._run("INSERT INTO _acl_roles VALUES (?, ?, ?)", (max(next_oid, 16384), st.name, int(st.is_user)))
            return ()
        if isinstance(st, GrantPrivileges):
            self._require_relations(st.objects)
            self._require_roles(st.grantees)
            for grantee in st.grantees:
                for obj in st.objects:
                    for op in st.operators:
                        if st.revoke:
                            self._run(
                                "DELETE FROM _acl_grants WHERE grantee=? AND relname=? AND privilege=?",
                                (grantee, obj, op.value),
                            )
                        else:
                            # re-granting never clears an existing grant option
                            self._run(
                                "INSERT INTO _acl_grants VALUES (?, ?, ?, ?) ON CONFLICT DO UPDATE "
                                "SET grantable = max(grantable, excluded.grantable)",
                                (grantee, obj, op.value, int(st.grant_option)),
                            )
            return ()
        if isinstance(st, GrantRole):
            self._require_roles(st.roles, allow_public=False)
            self._require_roles(st.members, allow_public=False)
            for role in st.roles:
                for member in st.members:
                    if st.revoke:
                        self._run("DELETE FROM _acl_members WHERE roleid=? AND member=?", (role, member))
                        continue
                    if role == member:
                        raise SqlExecutionError(f'role "{role}" is a member of role "{member}"')
                    if find_cycle(self._membership_edges() + [(member, role)]):
                        raise SqlExecutionError(f'role "{role}" is a member of role "{member}"')
                    self._run("INSERT OR IGNORE INTO _acl_members VALUES (?, ?)", (role, member))
            return ()
        if isinstance(st, RowSecurity):
            self._require_relations([st.table])
            if st.enable:
                self._run("INSERT OR IGNORE INTO _acl_rls VALUES (?)", (st.table,))
            else:
                self._run("DELETE FROM _acl_rls WHERE relname = ?", (st.table,))
            return ()
        if isinstance(st, CreatePolicy):
            self._require_relations([st.table])
            roles = [r for r in st.roles if r != "public"]
            self._require_roles(roles)
            self._run(
                "INSERT INTO _acl_policies VALUES (?, ?, ?, ?, ?, ?)",
                (st.name, st.table, st.command, ",".join(st.roles), st.using, st.check),
            )
            return ()
        if isinstance(st, CreateView):
            if st.name in self.relations() and not st.replace:
                raise SqlExecutionError(f'relation "{st.name}" already exists')
            body = to_sqlite(st.select_sql)
            if st.replace:
                self._run(f'DROP VIEW IF EXISTS "{st.name}"')
            self._run(f'CREATE VIEW "{st.name}" AS {body}')
            try:
                self._run(f'SELECT * FROM "{st.name}" LIMIT 0')
            except SqlExecutionError:
                self._run(f'DROP VIEW "{st.name}"')
                raise
            self._run("INSERT OR REPLACE INTO _acl_views VALUES (?, ?)", (st.name, st.select_sql))
            return ()
        assert isinstance(st, OtherStatement)
        rows = tuple(map(tuple, self._run(self._transpile(st.sql))))
        self._purge_dangling()
        return rows

    def _transpile(self, sql: str) -> str:
        try:
            return to_sqlite(sql)
        except Exception as exc:  # sqlglot raises several unrelated error types
            raise SqlExecutionError(f"cannot translate statement: {exc}") from None

    def _purge_dangling(self) -> None:
        rels = self.relations()
        for (name,) in self.conn.execute("SELECT DISTINCT relname FROM _acl_grants").fetchall():
            if name not in rels:
                self.conn.execute("DELETE FROM _acl_grants WHERE relname = ?", (name,))
        for (name,) in self.conn.execute("SELECT name FROM _acl_views").fetchall():
            if name not in rels:
                self.conn.execute("DELETE FROM _acl_views WHERE name = ?", (name,))

    def query(self, sql: str) -> list[tuple]:
        """Run a read-only query in the Postgres dialect."""
        if self._dirty:
            self._refresh_mirrors()
        return [tuple(r) for r in self._run(self._transpile(sql))]

    def fetch_column_values(self, table: str, column: str, limit: int = 1000) -> list:
        table, column = normalize_identifier(table), normalize_identifier(column)
        if column not in self.columns(table):
            raise CatalogError(f'column "{column}" does not exist in relation "{table}"')
        rows = self._run(
            f'SELECT DISTINCT "{column}" FROM "{table}" WHERE "{column}" IS NOT NULL '
            f'ORDER BY "{column}" LIMIT ?',
            (limit,),
        )
        return [r[0] for r in rows]

    def result_set(self, select_sql: str) -> list[tuple]:
        """Rows of a query as a sorted multiset, for definition equality checks."""
        rows = self._run(self._transpile(select_sql))
        return sorted(tuple(map(repr, r)) for r in rows)

    def row_security(self) -> list[str]:
        """Tables with row-level security enabled."""
        return [r[0] for r in self._run("SELECT relname FROM _acl_rls ORDER BY relname")]

    def policies(self) -> list[tuple]:
        return self.query("SELECT policyname, tablename, cmd, roles, qual FROM pg_catalog.pg_policies")

    # -- catalog mirrors -----------------------------------------------------

    def _create_mirrors(self) -> None:
        self.conn.executescript(
            """
            CREATE TABLE information_schema.role_table_grants (
                grantor TEXT, grantee TEXT, table_catalog TEXT, table_schema TEXT, table_name TEXT,
                privilege_type TEXT, is_grantable TEXT, with_hierarchy TEXT);
            CREATE VIEW information_schema.table_privileges AS
                SELECT * FROM information_schema.role_table_grants;
            CREATE TABLE information_schema.tables (
                table_catalog TEXT, table_schema TEXT, table_name TEXT, table_type TEXT);
            CREATE TABLE information_schema.views (
                table_catalog TEXT, table_schema TEXT, table_name TEXT, view_definition TEXT);
            CREATE TABLE information_schema.columns (
                table_schema TEXT, table_name TEXT, column_name TEXT, ordinal_position INTEGER,
                data_type TEXT);
            CREATE TABLE information_schema.applicable_roles (
                grantee TEXT, role_name TEXT, is_grantable TEXT);
            CREATE TABLE pg_catalog.pg_roles (
                oid INTEGER, rolname TEXT, rolcanlogin INTEGER, rolsuper INTEGER);
            CREATE TABLE pg_catalog.pg_auth_members (
                roleid INTEGER, member INTEGER, grantor INTEGER, admin_option INTEGER);
            CREATE TABLE pg_catalog.pg_policies (
                schemaname TEXT, tablename TEXT, policyname TEXT, permissive TEXT, roles TEXT,
                cmd TEXT, qual TEXT, with_check TEXT);
            CREATE TABLE pg_catalog.pg_views (schemaname TEXT, viewname TEXT, definition TEXT);
            """
        )

    def _refresh_mirrors(self) -> None:
        c = self.conn
        for name in (
            "information_schema.role_table_grants",
            "information_schema.tables",
            "information_schema.views",
            "information_schema.columns",
            "information_schema.applicable_roles",
            "pg_catalog.pg_roles",
            "pg_catalog.pg_auth_members",
            "pg_catalog.pg_policies",
            "pg_catalog.pg_views",
        ):
            c.execute(f"DELETE FROM {name}")
        c.execute(
            "INSERT INTO information_schema.role_table_grants "
            "SELECT ?, grantee, 'sandbox', 'public', relname, privilege, "
            "CASE grantable WHEN 1 THEN 'YES' ELSE 'NO' END, 'NO' FROM main._acl_grants",
            (SUPERUSER,),
        )
        for rel, kind in sorted(self.relations().items()):
            c.execute(
                "INSERT INTO information_schema.tables VALUES ('sandbox', 'public', ?, ?)",
                (rel, "VIEW" if kind == "view" else "BASE TABLE"),
            )
            for pos, row in enumerate(c.execute(f'PRAGMA main.table_info("{rel}")').fetchall(), 1):
                c.execute(
                    "INSERT INTO information_schema.columns VALUES ('public', ?, ?, ?, ?)",
                    (rel, row[1].lower(), pos, (row[2] or "").lower()),
                )
        c.execute(
            "INSERT INTO information_schema.views "
            "SELECT 'sandbox', 'public', name, definition FROM main._acl_views"
        )
        c.execute(
            "INSERT INTO pg_catalog.pg_views SELECT 'public', name, definition FROM main._acl_views"
        )
        c.execute(
            "INSERT INTO pg_catalog.pg_roles SELECT oid, rolname, rolcanlogin, "
            "rolname = ? FROM main._acl_roles",
            (SUPERUSER,),
        )
        c.execute(
            "INSERT INTO pg_catalog.pg_auth_members "
            "SELECT r.oid, m.oid, 10, 0 FROM main._acl_members AS am "
            "JOIN main._acl_roles AS r ON r.rolname = am.roleid "
            "JOIN main._acl_roles AS m ON m.rolname = am.member"
        )
        c.execute(
            "INSERT INTO information_schema.applicable_roles "
            "SELECT member, roleid, 'NO' FROM main._acl_members"
        )
        c.execute(
            "INSERT INTO pg_catalog.pg_policies SELECT 'public', tablename, policyname, "
            "'PERMISSIVE', roles, cmd, qual, with_check FROM main._acl_policies"
        )
        self._dirty = False


class PostgresTarget(_Target):
    """A live Postgres server reached through psycopg (optional dependency)."""

    def __init__(self, dsn: str):
        try:
            import psycopg
        except ImportError as exc:
            raise CatalogError("connecting to Postgres needs the 'psycopg' package") from exc
        self.profile = PROFILES["postgres"]
        self.conn = psycopg.connect(dsn, autocommit=True)
        (self.owner,) = self.conn.execute("SELECT current_user").fetchone()

    def execute(self, sql: str) -> tuple[tuple, ...]:
        import psycopg

        try:
            cur = self.conn.execute(sql)
        except psycopg.Error as exc:
            raise SqlExecutionError(str(exc).strip()) from None
        return tuple(map(tuple, cur.fetchall())) if cur.description else ()

    def query(self, sql: str) -> list[tuple]:
        return list(self.execute(sql))

    def fetch_column_values(self, table: str, column: str, limit: int = 1000) -> list:
        from psycopg import sql as q

        stmt = q.SQL("SELECT DISTINCT {c} FROM {t} WHERE {c} IS NOT NULL ORDER BY {c} LIMIT {n}").format(
            c=q.Identifier(normalize_identifier(column)),
            t=q.Identifier(normalize_identifier(table)),
            n=q.Literal(limit),
        )
        try:
            return [r[0] for r in self.conn.execute(stmt).fetchall()]
        except Exception as exc:
            raise CatalogError(str(exc).strip()) from None

    def columns(self, relation: str) -> list[str]:
        rows = self.query(
            "SELECT column_name FROM information_schema.columns WHERE table_name = "
            f"'{normalize_identifier(relation)}' ORDER BY ordinal_position"
        )
        if not rows:
            raise CatalogError(f'relation "{relation}" does not exist')
        return [r[0] for r in rows]

    def relations(self) -> dict[str, str]:
        rows = self.query(
            "SELECT table_name, table_type FROM information_schema.tables WHERE table_schema = 'public'"
        )
        return {n: "view" if t == "VIEW" else "table" for n, t in rows}


def open_target(target: str, schema: SchemaContext | None = None):
    """``sandbox:PATH`` (or ``sandbox:`` for in-memory) or a ``postgresql://`` DSN."""
    if target.startswith(("postgresql://", "postgres://")):
        return PostgresTarget(target)
    if target.startswith("sandbox:"):
        path = target[len("sandbox:"):] or ":memory:"
        db = SandboxDatabase(path)
        if schema is not None:
            db.seed(schema)
        return db
    raise CatalogError(f"unrecognized target {target!r}")


# -- the generator ---------------------------------------------------------


def _closure_table(
    direct: Mapping[str, Mapping[str, set[Operator]]], inheritance: Iterable[InheritanceRecord]
) -> tuple[dict[str, dict[str, set[Operator]]], dict[str, list[str]]]:
    children: dict[str, list[str]] = {}
    for rec in inheritance:
        children.setdefault(rec.parent, [])
        if rec.child not in children[rec.parent]:
            children[rec.parent].append(rec.child)
    cycle = find_cycle((p, c) for p, cs in children.items() for c in cs)
    if cycle:
        raise CatalogError("cycle in role inheritance: " + " -> ".join(cycle))
    memo: dict[str, dict[str, set[Operator]]] = {}

    def visit(role: str) -> dict[str, set[Operator]]:
        if role in memo:
            return memo[role]
        cells = {a: set(ops) for a, ops in direct.get(role, {}).items()}
        for child in children.get(role, ()):
            for asset, ops in visit(child).items():
                cells.setdefault(asset, set()).update(ops)
        memo[role] = cells
        return cells

    roles = set(direct) | set(children) | {c for cs in children.values() for c in cs}
    return {r: visit(r) for r in roles}, children


def _asset_header(name: str, views: Mapping[str, str] | None) -> CellText:
    if views and name in views:
        return CellText(f"CREATE VIEW {name} AS {views[name]}", Kind.SQL)
    return CellText(name, Kind.SQL)


def generate_acm(
    grants: Iterable[GrantRecord],
    inheritance: Iterable[InheritanceRecord] = (),
    views: Mapping[str, str] | None = None,
) -> AccessMatrix:
    """Two passes: bucket direct grants into cells, then union in inherited operators.

    Subjects are roles holding at least one effective privilege; a role that
    only inherits still appears. Subjects and assets are sorted.
    """
    direct: dict[str, dict[str, set[Operator]]] = {}
    for g in grants:
        ops = direct.setdefault(g.grantee, {}).setdefault(g.asset, set())
        ops.add(g.operator)
        if g.grant_option:
            ops.add(Operator.GRANT)
    effective, _ = _closure_table(direct, inheritance)
    subjects = sorted(r for r, cells in effective.items() if any(cells.values()))
    assets = sorted({a for r in subjects for a, ops in effective[r].items() if ops})
    cells = []
    for r in subjects:
        row = []
        for a in assets:
            ops = effective[r].get(a, set())
            row.append(CellText(PrivilegeSet(frozenset(ops)).render() if ops else "", Kind.SQL if ops else Kind.NL))
        cells.append(tuple(row))
    return AccessMatrix(
        tuple(CellText(s, Kind.SQL) for s in subjects),
        tuple(_asset_header(a, views) for a in assets),
        tuple(cells),
    )


def generate_enlacm(
    grants: Iterable[GrantRecord],
    inheritance: Iterable[InheritanceRecord] = (),
    views: Mapping[str, str] | None = None,
) -> ExtendedAccessMatrix:
    inheritance = list(inheritance)
    matrix = generate_acm(grants, inheritance, views)
    index = {s.raw: i for i, s in enumerate(matrix.subjects)}
    entries = [
        HierarchyEntry(index[rec.parent], rec.parent, None, rec.child)
        for rec in sorted(inheritance)
        if rec.parent in index
    ]
    return ExtendedAccessMatrix(matrix, tuple(entries))


# -- equivalence -----------------------------------------------------------


@dataclass(frozen=True)
class SnapshotDiff:
    grants_only_a: tuple[GrantRecord, ...] = ()
    grants_only_b: tuple[GrantRecord, ...] = ()
    inheritance_only_a: tuple[InheritanceRecord, ...] = ()
    inheritance_only_b: tuple[InheritanceRecord, ...] = ()

    @property
    def equal(self) -> bool:
        return not (self.grants_only_a or self.grants_only_b or self.inheritance_only_a or self.inheritance_only_b)

    def __bool__(self) -> bool:
        return self.equal

    def lines(self) -> list[str]:
        out = []
        b_keys = {(g.grantee, g.asset, g.operator): g for g in self.grants_only_b}
        for g in self.grants_only_a:
            other = b_keys.get((g.grantee, g.asset, g.operator))
            if other is not None:
                out.append(
                    f"grant_option mismatch: {g.operator.value} ON {g.asset} TO {g.grantee} "
                    f"(a: {g.grant_option}, b: {other.grant_option})"
                )
            else:
                out.append(f"only in a: {g.operator.value} ON {g.asset} TO {g.grantee}"
                           + (" WITH GRANT OPTION" if g.grant_option else ""))
        a_keys = {(g.grantee, g.asset, g.operator) for g in self.grants_only_a}
        for g in self.grants_only_b:
            if (g.grantee, g.asset, g.operator) not in a_keys:
                out.append(f"only in b: {g.operator.value} ON {g.asset} TO {g.grantee}"
                           + (" WITH GRANT OPTION" if g.grant_option else ""))
        out += [f"only in a: {r.child} granted to {r.parent}" for r in self.inheritance_only_a]
        out += [f"only in b: {r.child} granted to {r.parent}" for r in self.inheritance_only_b]
        return out


def snapshot_equivalence(a: _Target, b: _Target) -> SnapshotDiff:
    ga, gb = set(a.fetch_grants()), set(b.fetch_grants())
    ia, ib = set(a.fetch_inheritance()), set(b.fetch_inheritance())
    return SnapshotDiff(
        tuple(sorted(ga - gb)), tuple(sorted(gb - ga)), tuple(sorted(ia - ib)), tuple(sorted(ib - ia))
    )
