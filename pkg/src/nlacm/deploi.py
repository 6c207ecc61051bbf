"""Generalized deployment pipeline over several policy tables.

Requirement labels, an execution graph of implementation steps, per-step
code synthesis with a parse-check-feedback loop, extraction of
implementation tables from database state, revision hooks and auditing.
"""

from __future__ import annotations

import csv
import graphlib
import io
import json
import re
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

from sqlglot import exp

from .differencer import ViolationReport, cell_privileges, diff
from .gateway import Gateway, _norm, extract_code_blocks, parse_choice
from .hierarchy import asset_closure
from .model import (
    AccessMatrix,
    CellText,
    HierarchyRow,
    Kind,
    PrivilegeSet,
    RoleHierarchyList,
    load_hierarchy,
    load_matrix,
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
    parse_query,
    parse_statement,
    query_refs,
    resolve_table,
    split_statements,
)
from .synthesizer import grant_statement


class DeploiError(RuntimeError):
    pass


class DependencyError(DeploiError):
    def __init__(self, message: str, edges: Sequence[tuple[int, int]] = ()):
        super().__init__(message)
        self.edges = list(edges)


class UnsupportedRequirement(DeploiError):
    pass


# -- tables and bundles ----------------------------------------------------


@dataclass(frozen=True)
class OpaqueTable:
    """A policy or implementation table with no built-in semantics (e.g. temporal rules)."""

    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()

    def row_texts(self) -> list[str]:
        return [" | ".join(r) for r in self.rows]


Table = Union[AccessMatrix, RoleHierarchyList, OpaqueTable]


def render_table(table: Table) -> str:
    if isinstance(table, AccessMatrix):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["role"] + [a.raw for a in table.assets])
        for s, row in zip(table.subjects, table.cells):
            w.writerow([s.raw] + [c.raw for c in row])
        return buf.getvalue().strip()
    if isinstance(table, RoleHierarchyList):
        lines = ["role,parent,child"]
        lines += [f"{r.role},{r.parent or ''},{r.child or ''}" for r in table.rows]
        return "\n".join(lines)
    lines = [",".join(table.columns)] + [",".join(r) for r in table.rows]
    return "\n".join(lines)


def _load_table(path: Path) -> Table:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        if isinstance(doc, dict) and "subjects" in doc:
            return load_matrix(text)
        if isinstance(doc, list) or (isinstance(doc, dict) and "rows" in doc and "columns" not in doc):
            return load_hierarchy(text)
        return OpaqueTable(tuple(doc["columns"]), tuple(tuple(str(c) for c in r) for r in doc["rows"]))
    rows = list(csv.reader(io.StringIO(text)))
    header = [h.strip().lower() for h in rows[0]] if rows else []
    if "role" in header and ("child" in header or "parent" in header) and len(header) <= 3:
        return load_hierarchy(text, format="csv")
    if rows and rows[0] and rows[0][0].strip() == "":
        return load_matrix(text, format="csv")
    return OpaqueTable(tuple(rows[0]), tuple(tuple(r) for r in rows[1:] if any(x.strip() for x in r)))


@dataclass(frozen=True)
class ExtractionQuery:
    label: str
    query: str
    layout: str  # matrix | pairs | rows
    policy: str | None = None


@dataclass(frozen=True)
class PolicyBundle:
    names: tuple[str, ...]
    tables: tuple[Table, ...]
    docs: tuple[str, ...]
    backend: str = "postgres"
    instructions: str | None = None
    extraction: tuple[ExtractionQuery, ...] = ()
    hooks: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (len(self.names) == len(self.tables) == len(self.docs)):
            raise DeploiError("a bundle needs one document per table")

    def index(self, name: str) -> int:
        return self.names.index(name)


def load_bundle(root: str | Path) -> PolicyBundle:
    """Read ``tables/*``, ``docs/<table>.txt``, ``instructions.txt``, ``extraction_queries.json`` and ``bundle.json``."""
    root = Path(root)
    paths = sorted(p for p in (root / "tables").iterdir() if p.suffix in (".json", ".csv"))
    if not paths:
        raise DeploiError(f"no policy tables under {root / 'tables'}")
    names = tuple(p.stem for p in paths)
    tables = tuple(_load_table(p) for p in paths)
    docs = []
    for name in names:
        doc = root / "docs" / f"{name}.txt"
        docs.append(doc.read_text(encoding="utf-8").strip() if doc.exists() else "")
    meta = json.loads((root / "bundle.json").read_text(encoding="utf-8")) if (root / "bundle.json").exists() else {}
    inst = root / "instructions.txt"
    extraction = ()
    eq = root / "extraction_queries.json"
    if eq.exists():
        extraction = tuple(
            ExtractionQuery(label, spec["query"], spec.get("layout", "rows"), spec.get("policy"))
            for label, spec in json.loads(eq.read_text(encoding="utf-8")).items()
        )
    return PolicyBundle(
        names,
        tables,
        tuple(docs),
        meta.get("backend", "postgres"),
        inst.read_text(encoding="utf-8") if inst.exists() else None,
        extraction,
        tuple(meta.get("hooks", ())),
    )


# -- requirement identification ---------------------------------------------


def identify_requirement(table: Table, doc: str, gateway: Gateway) -> str:
    response = gateway.ask("requirement_category", {"table": render_table(table), "doc": doc.strip() or "(none)"})
    return response.strip().splitlines()[0].strip().strip(".").strip() if response.strip() else ""


# -- dependency graph ----------------------------------------------------


@dataclass(frozen=True)
class Step:
    id: int
    text: str
    tables: tuple[int, ...]
    after: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExecutionGraph:
    steps: tuple[Step, ...]

    def __post_init__(self) -> None:
        ids = {s.id for s in self.steps}
        for s in self.steps:
            missing = [a for a in s.after if a not in ids]
            if missing:
                raise DependencyError(f"step {s.id} depends on unknown step(s) {missing}")
        sorter = graphlib.TopologicalSorter({s.id: s.after for s in self.steps})
        try:
            sorter.prepare()
        except graphlib.CycleError as exc:
            cyc = exc.args[1]
            raise DependencyError(
                "cycle in execution graph: " + " -> ".join(map(str, cyc)),
                list(zip(cyc, cyc[1:])),
            ) from None

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(a, s.id) for s in self.steps for a in s.after]

    def step(self, id: int) -> Step:
        for s in self.steps:
            if s.id == id:
                return s
        raise KeyError(id)

    def order(self) -> list[Step]:
        """Steps in a dependency-respecting order; ties go to the lower id."""
        sorter = graphlib.TopologicalSorter({s.id: s.after for s in self.steps})
        sorter.prepare()
        out = []
        while sorter.is_active():
            ready = sorted(sorter.get_ready())
            for sid in ready:
                out.append(self.step(sid))
                sorter.done(sid)
        return out

    def render(self) -> str:
        return "\n".join(f"{s.id}. {s.text}" for s in self.steps)


_STEP_LINE = re.compile(r"^\s*(\d+)[.)]\s*(.+)$")


def _name_refs(text: str, names: Sequence[str], labels: Sequence[str]) -> tuple[int, ...]:
    found = []
    for part in re.split(r"[,;]", text):
        key = _norm(part)
        if not key or key in ("none", "n a"):
            continue
        for i, (n, l) in enumerate(zip(names, labels)):
            if key in (_norm(n), _norm(l)) and i not in found:
                found.append(i)
    return tuple(found)


def parse_instructions(text: str, names: Sequence[str], labels: Sequence[str] | None = None) -> ExecutionGraph:
    """Numbered steps; optional ``uses: <tables>`` and ``after: <step numbers>`` clauses.

    Example line: ``2. Grant table privileges. uses: privileges; after: 1``
    """
    labels = list(labels) if labels else list(names)
    steps = []
    for line in text.splitlines():
        m = _STEP_LINE.match(line)
        if not m:
            continue
        body = m.group(2)
        uses = re.search(r"(?i)\buses:\s*([^;]*?)\s*(?:;|$)", body)
        after = re.search(r"(?i)\bafter:\s*([\d,\s]*)", body)
        text_part = re.split(r"(?i)\s*\b(?:uses|after):", body)[0].strip()
        tables = _name_refs(uses.group(1), names, labels) if uses else ()
        deps = tuple(int(x) for x in re.findall(r"\d+", after.group(1))) if after else ()
        steps.append(Step(int(m.group(1)), text_part, tables, deps))
    if not steps:
        raise DependencyError("no numbered steps in instructions")
    return ExecutionGraph(tuple(steps))


def _per_step_answers(response: str) -> dict[int, str]:
    out = {}
    for line in response.splitlines():
        m = re.match(r"^\s*(?:step\s*)?(\d+)\s*[:.)-]\s*(.*)$", line, re.IGNORECASE)
        if m:
            out[int(m.group(1))] = m.group(2)
    return out


def resolve_dependencies(
    bundle: PolicyBundle,
    labels: Sequence[str],
    gateway: Gateway | None = None,
    use_llm: bool = False,
) -> ExecutionGraph:
    """Execution graph from the bundle's human instructions, or by prompting when asked to."""
    if not use_llm:
        if bundle.instructions is None:
            steps = tuple(Step(i + 1, f"Implement {labels[i] or bundle.names[i]}", (i,)) for i in range(len(bundle.tables)))
            return ExecutionGraph(steps)
        return parse_instructions(bundle.instructions, bundle.names, labels)
    if gateway is None:
        raise DeploiError("dependency prompting needs a gateway")
    instructions = gateway.ask(
        "dependency_instructions",
        {
            "labels": ", ".join(labels),
            "tables": "\n\n".join(render_table(t) for t in bundle.tables),
            "docs": "\n\n".join(d or "(none)" for d in bundle.docs),
            "backend": bundle.backend,
        },
    )
    steps_text = {int(m.group(1)): m.group(2).strip() for m in map(_STEP_LINE.match, instructions.splitlines()) if m}
    if not steps_text:
        raise DependencyError("instructions contain no numbered steps")
    tables_ans = _per_step_answers(gateway.ask("dependency_tables", {"instructions": instructions, "labels": ", ".join(labels)}))
    deps_ans = _per_step_answers(gateway.ask("dependency_steps", {"instructions": instructions}))
    steps = []
    for sid, text in sorted(steps_text.items()):
        tables = _name_refs(tables_ans.get(sid, ""), bundle.names, labels)
        after = tuple(int(x) for x in re.findall(r"\d+", deps_ans.get(sid, "")) if int(x) != sid)
        steps.append(Step(sid, text, tables, after))
    return ExecutionGraph(tuple(steps))


# -- synthesis -------------------------------------------------------------


@dataclass(frozen=True)
class StepCode:
    step: int
    prompt_slots: Mapping[str, str]
    code: str
    statements: tuple[str, ...]
    parse_errors: tuple[str, ...] = ()
    findings: tuple[str, ...] = ()
    rounds: int = 0
    regressions: tuple[int, ...] = ()


def _synthesis_slots(bundle: PolicyBundle, schema: SchemaContext, graph: ExecutionGraph, step: Step) -> dict[str, str]:
    idx = step.tables or tuple(range(len(bundle.tables)))
    return {
        "backend": bundle.backend,
        "requirements": "\n\n".join(f"{bundle.names[i]}:\n{render_table(bundle.tables[i])}" for i in idx),
        "docs": "\n\n".join(f"{bundle.names[i]}: {bundle.docs[i] or '(none)'}" for i in idx),
        "instructions": f"{graph.render()}\nCurrent step: {step.id}. {step.text}",
        "schema": schema.render(),
        "schema_info": schema.render_info(),
    }


def parse_code(code: str) -> tuple[list[str], list[str]]:
    """Statements of a response's code blocks, and a message per unparseable statement."""
    statements, errors = [], []
    for block in extract_code_blocks(code):
        for sql in split_statements(block):
            try:
                parse_statement(sql)
            except SqlSyntaxError as exc:
                errors.append(f"unparseable statement {sql[:60]!r}: {exc}")
            else:
                statements.append(sql)
    return statements, errors


def synthesize_generalized(
    bundle: PolicyBundle,
    schema: SchemaContext,
    graph: ExecutionGraph,
    gateway: Gateway,
    catalog=None,
    feedback_rounds: int = 2,
) -> list[StepCode]:
    """One prompt per step in execution order; each step's code goes through the feedback loop."""
    out = []
    created: set[str] = set()
    roles: set[str] = set()
    for step in graph.order():
        slots = _synthesis_slots(bundle, schema, graph, step)
        response = gateway.ask("generalized_synthesis", slots)
        result = feedback_loop(
            response, schema, catalog, gateway, slots, feedback_rounds, known_relations=created, known_roles=roles
        )
        statements, errors = parse_code(result.code)
        for sql in statements:
            st = parse_statement(sql)
            if isinstance(st, CreateView):
                created.add(st.name)
            elif isinstance(st, CreateRole):
                roles.add(st.name)
        out.append(
            StepCode(step.id, slots, result.code, tuple(statements), tuple(errors), tuple(result.findings), result.rounds, tuple(result.regressions))
        )
    return out


def execute_steps(steps: Sequence[StepCode], target) -> list:
    results = []
    for sc in steps:
        for r in target.execute_script(list(sc.statements)):
            results.append(replace(r, index=len(results)))
    return results


# -- feedback loop ---------------------------------------------------------


class _Lookup:
    def __init__(self, schema: SchemaContext, catalog, relations: set[str], roles: set[str]):
        self.schema, self.catalog = schema, catalog
        self.relations, self.roles = set(relations), set(roles)
        self.view_columns: dict[str, set[str]] = {}

    def has_relation(self, name: str) -> bool:
        if name in self.relations:
            return True
        if self.catalog is not None:
            return name in self.catalog.relations()
        return self.schema.has_table(name)

    def columns(self, name: str) -> set[str]:
        if name in self.view_columns:
            return self.view_columns[name]
        if self.catalog is not None:
            try:
                return set(self.catalog.columns(name))
            except Exception:
                return set()
        return self.schema.columns_of(name)

    def has_role(self, name: str) -> bool:
        if name in self.roles or name == "public":
            return True
        return self.catalog is not None and hasattr(self.catalog, "roles") and name in self.catalog.roles()

    def values(self, table: str, column: str) -> list[str] | None:
        if self.catalog is None:
            return None
        try:
            return [str(v) for v in self.catalog.fetch_column_values(table, column)]
        except Exception:
            return None


def _check_expression(tree: exp.Expression, look: _Lookup, where: str) -> list[str]:
    findings = []
    refs = query_refs(tree)
    for t in sorted(refs.tables):
        if not look.has_relation(t):
            findings.append(f'{where}: relation "{t}" does not exist')
    known = [t for t in refs.tables if look.has_relation(t)]
    for qual, col in refs.columns:
        if qual and qual in refs.ctes:
            continue
        if col in refs.output_aliases:
            continue
        if qual:
            table = refs.aliases.get(qual)
            if table is None or table not in known:
                continue
            if col not in look.columns(table):
                findings.append(f'{where}: column "{col}" does not exist in relation "{table}"')
        elif known and refs.tables == set(known) and not refs.ctes:
            if not any(col in look.columns(t) for t in known):
                findings.append(f'{where}: column "{col}" does not exist')
    for lit, qual, col in refs.literals:
        if not lit.is_string or isinstance(lit.parent, (exp.Like, exp.ILike)):
            continue
        table = resolve_table(refs, qual, col, look.columns)
        if table is None or col not in look.columns(table):
            continue
        values = look.values(table, col)
        if values is not None and lit.this not in values:
            findings.append(f"{where}: value '{lit.this}' does not occur in {table}.{col}")
    return findings


def check_code(code: str, schema: SchemaContext, catalog=None, known_relations=(), known_roles=()) -> list[str]:
    """Nonexistent tables, columns, column values and roles referenced by the code."""
    statements, findings = parse_code(code)
    look = _Lookup(schema, catalog, set(known_relations), set(known_roles))
    for n, sql in enumerate(statements, start=1):
        st = parse_statement(sql)
        where = f"statement {n}"
        if isinstance(st, CreateRole):
            look.roles.add(st.name)
        elif isinstance(st, CreateView):
            tree = parse_query(st.select_sql)
            findings += _check_expression(tree, look, where)
            look.relations.add(st.name)
            if isinstance(tree, exp.Select):
                look.view_columns[st.name] = {e.alias_or_name.lower() for e in tree.expressions}
        elif isinstance(st, GrantPrivileges):
            findings += [f'{where}: relation "{o}" does not exist' for o in st.objects if not look.has_relation(o)]
            findings += [f'{where}: role "{r}" does not exist' for r in st.grantees if not look.has_role(r)]
        elif isinstance(st, GrantRole):
            findings += [f'{where}: role "{r}" does not exist' for r in st.roles + st.members if not look.has_role(r)]
        elif isinstance(st, RowSecurity):
            if not look.has_relation(st.table):
                findings.append(f'{where}: relation "{st.table}" does not exist')
        elif isinstance(st, CreatePolicy):
            if not look.has_relation(st.table):
                findings.append(f'{where}: relation "{st.table}" does not exist')
            findings += [f'{where}: role "{r}" does not exist' for r in st.roles if not look.has_role(r)]
            for cond in filter(None, (st.using, st.check)):
                try:
                    tree = parse_query(f"SELECT 1 FROM {st.table} WHERE {cond}")
                except SqlSyntaxError as exc:
                    findings.append(f"{where}: policy condition does not parse: {exc}")
                    continue
                findings += _check_expression(tree, look, where)
        elif isinstance(st, OtherStatement):
            try:
                tree = parse_query(sql)
            except SqlSyntaxError:
                continue
            findings += _check_expression(tree, look, where)
    return findings


@dataclass
class FeedbackResult:
    code: str
    rounds: int
    findings: list[str]
    history: list[list[str]] = field(default_factory=list)
    regressions: list[int] = field(default_factory=list)


def feedback_loop(
    code: str,
    schema: SchemaContext,
    catalog,
    gateway: Gateway,
    original_slots: Mapping[str, str],
    max_rounds: int = 2,
    known_relations: Iterable[str] = (),
    known_roles: Iterable[str] = (),
) -> FeedbackResult:
    """Re-prompt with the nonexistent elements found in the code, at most ``max_rounds`` times.

    The version with the fewest findings is kept; a round that increases the
    count is recorded as a regression.
    """
    from .prompts import render_prompt

    original = render_prompt("generalized_synthesis", original_slots)
    known_relations, known_roles = set(known_relations), set(known_roles)
    findings = check_code(code, schema, catalog, known_relations, known_roles)
    best = FeedbackResult(code, 0, findings, [findings])
    current, current_findings = code, findings
    for rnd in range(1, max_rounds + 1):
        if not current_findings:
            break
        prior = "\n".join(extract_code_blocks(current))
        revised = gateway.ask(
            "synthesis_feedback", {"original": original, "code": prior, "errors": "\n".join(current_findings)}
        )
        new_findings = check_code(revised, schema, catalog, known_relations, known_roles)
        best.history.append(new_findings)
        best.rounds = rnd
        if len(new_findings) > len(current_findings):
            best.regressions.append(rnd)
        if len(new_findings) <= len(best.findings):
            best.code, best.findings = revised, new_findings
        current, current_findings = revised, new_findings
    return best


# -- implementation extraction ---------------------------------------------


def extract_implementation(queries: Sequence[ExtractionQuery], target) -> dict[str, Table]:
    """Run each read-only extraction query and shape its rows into an implementation table.

    ``matrix`` rows are (subject, asset, code) and cells concatenate the code;
    ``pairs`` rows are (role, child); ``rows`` keeps the result as is.
    """
    out: dict[str, Table] = {}
    for q in queries:
        head = q.query.lstrip().split(None, 1)[0].upper()
        if head not in ("SELECT", "WITH"):
            raise DeploiError(f"extraction query {q.label!r} is not read-only")
        rows = target.query(q.query)
        if q.layout == "matrix":
            cells: dict[tuple[str, str], list[str]] = {}
            for subject, asset, code in rows:
                cells.setdefault((str(subject), str(asset)), []).append(str(code))
            subjects = sorted({s for s, _ in cells})
            assets = sorted({a for _, a in cells})
            grid = [
                [CellText(" ".join(cells.get((s, a), [])), Kind.SQL if (s, a) in cells else Kind.NL) for a in assets]
                for s in subjects
            ]
            out[q.label] = AccessMatrix(
                tuple(CellText(s, Kind.SQL) for s in subjects), tuple(CellText(a, Kind.SQL) for a in assets), tuple(map(tuple, grid))
            )
        elif q.layout == "pairs":
            out[q.label] = RoleHierarchyList(tuple(HierarchyRow(str(r), None, str(c)) for r, c in sorted(rows)))
        elif q.layout == "rows":
            out[q.label] = OpaqueTable(tuple(f"c{i}" for i in range(len(rows[0]) if rows else 0)), tuple(tuple(str(x) for x in r) for r in sorted(rows)))
        else:
            raise DeploiError(f"unknown extraction layout {q.layout!r}")
    return out


# -- revisions -------------------------------------------------------------

RevisionHook = Callable[[Mapping[str, Table]], dict[str, Table]]


def identity_hook(tables: Mapping[str, Table]) -> dict[str, Table]:
    return dict(tables)


def _grant_cell(role: str, asset: str, privs: PrivilegeSet) -> str:
    return grant_statement(role, asset, privs)


def hierarchy_union(tables: Mapping[str, Table]) -> dict[str, Table]:
    """Union every role's privilege cells with those of all roles it inherits from.

    Applies to each privilege matrix, using every hierarchy table present.
    """
    out = dict(tables)
    edges = [
        (r.role, r.child)
        for t in tables.values()
        if isinstance(t, RoleHierarchyList)
        for r in t.rows
        if r.child
    ] + [
        (r.parent, r.role)
        for t in tables.values()
        if isinstance(t, RoleHierarchyList)
        for r in t.rows
        if r.parent
    ]
    if not edges:
        return out
    for name, table in tables.items():
        if not isinstance(table, AccessMatrix):
            continue
        base: dict[str, dict[str, PrivilegeSet]] = {}
        for s, row in zip(table.subjects, table.cells):
            for a, cell in zip(table.assets, row):
                privs = cell_privileges(cell) if not cell.empty else None
                if privs:
                    base.setdefault(s.raw, {})[a.raw] = privs
        effective = asset_closure(edges, base)
        subjects = sorted(set(s.raw for s in table.subjects) | {r for r, cells in effective.items() if cells})
        assets = [a.raw for a in table.assets]
        grid = []
        for s in subjects:
            row = []
            for a in assets:
                privs = effective.get(s, {}).get(a)
                row.append(CellText(_grant_cell(s, a, privs), Kind.SQL) if privs else CellText("", Kind.NL))
            grid.append(tuple(row))
        out[name] = AccessMatrix(tuple(CellText(s, Kind.SQL) for s in subjects), table.assets, tuple(grid))
    return out


HOOKS: dict[str, RevisionHook] = {"identity": identity_hook, "hierarchy-union": hierarchy_union}


def apply_revisions(tables: Mapping[str, Table], hooks: RevisionHook | str | Sequence[RevisionHook | str]) -> dict[str, Table]:
    """Apply one hook, or several left to right."""
    if callable(hooks) or isinstance(hooks, str):
        hooks = [hooks]
    out = dict(tables)
    for hook in hooks:
        fn = HOOKS[hook] if isinstance(hook, str) else hook
        out = fn(out)
    return out


# -- auditing --------------------------------------------------------------


@dataclass
class GeneralizedReport:
    element: str
    missing: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)
    violations: ViolationReport | None = None
    trace: list[dict] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.missing and not self.extra and (self.violations is None or self.violations.empty)

    def to_dict(self) -> dict:
        return {
            "element": self.element,
            "compliant": self.empty,
            "missing": self.missing,
            "extra": self.extra,
            "violations": self.violations.to_dict() if self.violations else None,
            "trace": self.trace,
        }


def element_shape(table: Table) -> str:
    """Structural deployment element of a table: privilege cells, inheritance pairs or opaque rows."""
    if isinstance(table, AccessMatrix):
        return "privilege"
    if isinstance(table, RoleHierarchyList):
        return "inheritance"
    if isinstance(table, OpaqueTable) and table.columns:
        return "row"
    raise UnsupportedRequirement(f"cannot identify the deployment element of {type(table).__name__}")


def _edges_of(table: RoleHierarchyList) -> list[tuple[str, str]]:
    out = [(r.role, r.child) for r in table.rows if r.child]
    out += [(r.parent, r.role) for r in table.rows if r.parent]
    return list(dict.fromkeys(out))


def _match_rows(policy: Sequence[str], impl: Sequence[str], gateway: Gateway | None) -> tuple[dict[int, int], list[dict]]:
    claimed: dict[int, int] = {}
    trace = []
    for i, text in enumerate(policy):
        free = [j for j in range(len(impl)) if j not in claimed.values()]
        found, why = None, ""
        for j in free:
            if _norm(impl[j]) == _norm(text):
                found, why = j, "identical text"
                break
        if found is None and free and gateway is not None:
            cands = [impl[j] for j in free]
            choice = parse_choice(gateway.ask("requirement_match", {"candidates": cands, "phrase": text}, cands), cands)
            why = choice.explanation
            if choice.matched:
                found = free[cands.index(choice.candidate)]
        if found is not None:
            claimed[i] = found
        trace.append({"left": text, "right": impl[found] if found is not None else None, "explanation": why})
    return claimed, trace


def audit_generalized(policy: Table, impl: Table, gateway: Gateway | None = None, sandbox=None) -> GeneralizedReport:
    shape = element_shape(policy)
    if element_shape(impl) != shape:
        raise UnsupportedRequirement(f"implementation table shape {element_shape(impl)!r} does not match policy {shape!r}")
    if shape == "privilege":
        report = diff(policy, impl, gateway, sandbox)
        return GeneralizedReport(shape, violations=report, trace=[t.to_dict() for t in report.match_trace])
    if shape == "inheritance":
        pe = [f"{r} inherits {c}" for r, c in _edges_of(policy)]
        ie = [f"{r} inherits {c}" for r, c in _edges_of(impl)]
        # both ends must agree, so relationships are compared as whole pairs
        matched, trace = _match_rows(pe, ie, gateway)
        return GeneralizedReport(
            shape,
            [pe[i] for i in range(len(pe)) if i not in matched],
            [ie[j] for j in range(len(ie)) if j not in matched.values()],
            trace=trace,
        )
    pr, ir = policy.row_texts(), impl.row_texts()
    matched, trace = _match_rows(pr, ir, gateway)
    return GeneralizedReport(
        shape,
        [pr[i] for i in range(len(pr)) if i not in matched],
        [ir[j] for j in range(len(ir)) if j not in matched.values()],
        trace=trace,
    )


# -- end to end ------------------------------------------------------------------


@dataclass
class DeploiRun:
    labels: list[str]
    graph: ExecutionGraph
    steps: list[StepCode]
    execution: list
    implementation: dict[str, Table]
    reports: dict[str, GeneralizedReport]

    @property
    def compliant(self) -> bool:
        return all(r.empty for r in self.reports.values())

    def code(self) -> str:
        return "".join(f"-- step {s.step}\n" + "".join(x.rstrip(";") + ";\n" for x in s.statements) for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "graph": [{"id": s.id, "text": s.text, "tables": list(s.tables), "after": list(s.after)} for s in self.graph.steps],
            "steps": [
                {
                    "step": s.step,
                    "statements": list(s.statements),
                    "parse_errors": list(s.parse_errors),
                    "findings": list(s.findings),
                    "feedback_rounds": s.rounds,
                    "regressions": list(s.regressions),
                }
                for s in self.steps
            ],
            "execution": [{"index": r.index, "sql": r.sql, "ok": r.ok, "error": r.error} for r in self.execution],
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
        }


def run_deploi(
    bundle: PolicyBundle,
    schema: SchemaContext,
    gateway: Gateway,
    target,
    use_llm_dependencies: bool = False,
    feedback_rounds: int = 2,
    hooks: Sequence[str | RevisionHook] | None = None,
) -> DeploiRun:
    labels = [identify_requirement(t, d, gateway) for t, d in zip(bundle.tables, bundle.docs)]
    graph = resolve_dependencies(bundle, labels, gateway, use_llm_dependencies)
    steps = synthesize_generalized(bundle, schema, graph, gateway, target, feedback_rounds)
    execution = execute_steps(steps, target)
    impl = extract_implementation(bundle.extraction, target)
    impl = apply_revisions(impl, list(hooks if hooks is not None else bundle.hooks) or ["identity"])
    reports = {}
    for q in bundle.extraction:
        if q.policy is None:
            continue
        reports[q.label] = audit_generalized(bundle.tables[bundle.index(q.policy)], impl[q.label], gateway)
    return DeploiRun(labels, graph, steps, execution, impl, reports)
