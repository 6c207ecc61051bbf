"""Access matrices, privilege sets, role hierarchy lists and their file formats."""

from __future__ import annotations

import csv
import enum
import graphlib
import io
import json
import os
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Union


class Kind(str, enum.Enum):
    NL = "NL"
    SQL = "SQL"


class Operator(str, enum.Enum):
    SELECT = "SELECT"
    INSERT = "INSERT"
    UPDATE = "UPDATE"
    DELETE = "DELETE"
    CREATE = "CREATE"
    GRANT = "GRANT"


# Rendering order for operator lists and GRANT statements.
CANONICAL_ORDER: tuple[Operator, ...] = tuple(Operator)
_RANK = {op: i for i, op in enumerate(CANONICAL_ORDER)}


def sort_operators(ops: Iterable[Operator | str]) -> tuple[Operator, ...]:
    return tuple(sorted((Operator(op) for op in ops), key=_RANK.__getitem__))


ANCHOR_KEYWORDS = frozenset(
    {"SELECT", "GRANT", "CREATE", "INSERT", "UPDATE", "DELETE", "FROM", "VIEW"}
)

SQL_RESERVED = frozenset(
    ["ALL", "ALTER", "AND", "ANY", "AS", "ASC", "AVG", "BETWEEN", "BY", "CASE", "CAST", "COUNT", "CREATE", "CROSS", "CURRENT_DATE", "CURRENT_TIME", "CURRENT_TIMESTAMP", "CURRENT_USER", "DATABASE", "DEFAULT", "DELETE", "DESC", "DISTINCT", "DROP", "ELSE", "END", "EXCEPT", "EXISTS", "EXTRACT", "FALSE", "FETCH", "FOR", "FOREIGN", "FROM", "FULL", "GRANT", "GROUP", "HAVING", "IF", "ILIKE", "IN", "INNER", "INSERT", "INTERSECT", "INTO", "IS", "JOIN", "KEY", "LEFT", "LIKE", "LIMIT", "MAX", "MIN", "NATURAL", "NOT", "NULL", "NULLS", "OFFSET", "ON", "OPTION", "OR", "ORDER", "OUTER", "POLICY", "PRIMARY", "PUBLIC", "REFERENCES", "REVOKE", "RIGHT", "ROLE", "ROW", "ROWS", "SCHEMA", "SELECT", "SESSION_USER", "SET", "SOME", "SUM", "TABLE", "THEN", "TO", "TRUE", "UNION", "UNIQUE", "UPDATE", "USER", "USING", "VALUES", "VIEW", "WHEN", "WHERE", "WITH"]
)


def classify_text(text: str) -> Kind:
    """SQL iff ``text`` holds an uppercase anchor keyword as a standalone token."""
    for token in re.findall(r"[A-Za-z0-9_]+", text):
        if token in ANCHOR_KEYWORDS:
            return Kind.SQL
    return Kind.NL


@dataclass(frozen=True)
class CellText:
    raw: str
    kind: Kind = Kind.NL

    @classmethod
    def of(cls, raw: str | None, kind: Kind | str | None = None) -> CellText:
        raw = "" if raw is None else str(raw)
        if kind is None:
            return cls(raw, classify_text(raw))
        return cls(raw, Kind(kind))

    @property
    def empty(self) -> bool:
        return not self.raw.strip()

    def __str__(self) -> str:
        return self.raw


class PrivilegeError(ValueError):
    pass


@dataclass(frozen=True)
class PrivilegeSet:
    """A subset of the six canonical operators.

    ``GRANT`` stands for the grant option on the other members, so a set
    holding only ``GRANT`` is rejected.
    """

    operators: frozenset[Operator] = frozenset()

    def __post_init__(self) -> None:
        ops = frozenset(Operator(op) for op in self.operators)
        object.__setattr__(self, "operators", ops)
        if ops == {Operator.GRANT}:
            raise PrivilegeError("GRANT alone delegates nothing")

    @classmethod
    def of(cls, *ops: Operator | str) -> PrivilegeSet:
        return cls(frozenset(op if isinstance(op, Operator) else Operator(str(op).upper()) for op in ops))

    @property
    def grant_option(self) -> bool:
        return Operator.GRANT in self.operators

    @property
    def plain(self) -> tuple[Operator, ...]:
        """Operators other than GRANT, in canonical order."""
        return tuple(op for op in self if op is not Operator.GRANT)

    def __iter__(self) -> Iterator[Operator]:
        return iter(sorted(self.operators, key=_RANK.__getitem__))

    def __len__(self) -> int:
        return len(self.operators)

    def __contains__(self, op: object) -> bool:
        return op in self.operators

    def __bool__(self) -> bool:
        return bool(self.operators)

    def __le__(self, other: PrivilegeSet) -> bool:
        return self.operators <= other.operators

    def __or__(self, other: PrivilegeSet) -> PrivilegeSet:
        return PrivilegeSet(self.operators | other.operators)

    def minus(self, other: PrivilegeSet) -> frozenset[Operator]:
        # A raw frozenset: the difference may be {GRANT} alone.
        return self.operators - other.operators

    def render(self) -> str:
        return ", ".join(op.value for op in self)

    def __str__(self) -> str:
        return self.render() or "(none)"


@dataclass(frozen=True)
class Opaque:
    """A privilege cell that is not a plain operator list."""

    text: str


_PRIV_SPLIT = re.compile(r"[\s,/;]+")


def parse_privileges(cell: CellText | str) -> PrivilegeSet | Opaque:
    raw = cell.raw if isinstance(cell, CellText) else str(cell)
    text = re.sub(r"(?i)\bwith\s+grant\s+option\b", " GRANT ", raw)
    tokens = [t for t in _PRIV_SPLIT.split(text.strip()) if t]
    ops = set()
    for token in tokens:
        try:
            ops.add(Operator(token.upper()))
        except ValueError:
            return Opaque(raw)
    if ops == {Operator.GRANT}:
        return Opaque(raw)
    return PrivilegeSet(frozenset(ops))


_LITERAL_TOKEN = re.compile(
    r"""(?<!\w)'(?P<sq>[^']*)'(?!\w)
      | (?<!\w)"(?P<dq>[^"]*)"(?!\w)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<num>\d+(?:\.\d+)?[A-Za-z_]*)""",
    re.VERBOSE,
)


def _identifier_like(word: str) -> bool:
    if word.upper() in SQL_RESERVED:
        return False
    return "_" in word.strip("_") or re.search(r"[a-z][A-Z]", word) is not None


def extract_literals(text: str) -> list[str]:
    """Substrings of ``text`` that look like database literals.

    Quoted spans, standalone numbers, and identifiers carrying an underscore
    or internal capitals; plain words are never literals.
    """
    found: list[str] = []
    for match in _LITERAL_TOKEN.finditer(text):
        kind = match.lastgroup
        value = match.group(kind)
        if kind == "num":
            if not re.fullmatch(r"\d+(?:\.\d+)?", value):
                continue
        elif kind == "word":
            if not _identifier_like(value):
                continue
        elif not value.strip():
            continue
        if value not in found:
            found.append(value)
    return found


def normalize_literal(value: str) -> str:
    return re.sub(r"\s+", " ", value.replace("_", " ")).strip().casefold()


class MatrixValidationError(ValueError):
    pass


def _check_unique(items: Sequence[CellText], what: str) -> None:
    seen: dict[str, int] = {}
    for i, item in enumerate(items):
        if item.empty:
            raise MatrixValidationError(f"{what} {i} is empty")
        if item.raw in seen:
            raise MatrixValidationError(
                f"duplicate {what} {item.raw!r} at positions {seen[item.raw]} and {i}"
            )
        seen[item.raw] = i


@dataclass(frozen=True)
class AccessMatrix:
    """Subjects x assets grid of privilege cells.

    Holds both natural-language policies and all-SQL implementation matrices.
    """

    subjects: tuple[CellText, ...]
    assets: tuple[CellText, ...]
    cells: tuple[tuple[CellText, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "cells", tuple(tuple(row) for row in self.cells))
        if len(self.cells) != len(self.subjects):
            raise MatrixValidationError(
                f"dimension error: {len(self.subjects)} subjects but {len(self.cells)} rows"
            )
        for i, row in enumerate(self.cells):
            if len(row) != len(self.assets):
                raise MatrixValidationError(
                    f"dimension error: row {i} has {len(row)} cells, expected {len(self.assets)}"
                )
        _check_unique(self.subjects, "subject")
        _check_unique(self.assets, "asset")

    @classmethod
    def build(
        cls,
        subjects: Iterable[str | CellText],
        assets: Iterable[str | CellText],
        cells: Iterable[Iterable[str | CellText | PrivilegeSet | None]],
        kind: Kind | str | None = None,
    ) -> AccessMatrix:
        """Convenience constructor; ``kind`` forces the kind of every header."""

        def header(x: str | CellText) -> CellText:
            return x if isinstance(x, CellText) else CellText.of(x, kind)

        def cell(x: str | CellText | PrivilegeSet | None) -> CellText:
            if isinstance(x, CellText):
                return x
            if isinstance(x, PrivilegeSet):
                return CellText.of(x.render())
            return CellText.of(x)

        return cls(
            tuple(header(s) for s in subjects),
            tuple(header(a) for a in assets),
            tuple(tuple(cell(c) for c in row) for row in cells),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.subjects), len(self.assets)

    def cell(self, i: int, j: int) -> CellText:
        return self.cells[i][j]

    def subject_index(self, raw: str) -> int:
        for i, s in enumerate(self.subjects):
            if s.raw == raw:
                return i
        raise KeyError(raw)

    def asset_index(self, raw: str) -> int:
        for j, a in enumerate(self.assets):
            if a.raw == raw:
                return j
        raise KeyError(raw)

    def row_has_privileges(self, i: int) -> bool:
        return any(not c.empty for c in self.cells[i])

    def column_has_privileges(self, j: int) -> bool:
        return any(not row[j].empty for row in self.cells)

    def replace_cell(self, i: int, j: int, value: str | CellText) -> AccessMatrix:
        value = value if isinstance(value, CellText) else CellText.of(value)
        cells = [list(row) for row in self.cells]
        cells[i][j] = value
        return AccessMatrix(self.subjects, self.assets, tuple(tuple(r) for r in cells))

    def add_subject(self, subject: str | CellText, row: Sequence[str]) -> AccessMatrix:
        subject = subject if isinstance(subject, CellText) else CellText.of(subject)
        return AccessMatrix(
            self.subjects + (subject,),
            self.assets,
            self.cells + (tuple(CellText.of(c) for c in row),),
        )

    def add_asset(self, asset: str | CellText, column: Sequence[str]) -> AccessMatrix:
        asset = asset if isinstance(asset, CellText) else CellText.of(asset)
        return AccessMatrix(
            self.subjects,
            self.assets + (asset,),
            tuple(row + (CellText.of(c),) for row, c in zip(self.cells, column)),
        )


class HierarchyError(ValueError):
    pass


@dataclass(frozen=True)
class HierarchyRow:
    role: str
    parent: str | None = None
    child: str | None = None


def _edges_of(rows: Iterable[HierarchyRow]) -> Iterator[tuple[str, str]]:
    for row in rows:
        if row.child:
            yield row.role, row.child
        if row.parent:
            yield row.parent, row.role


def find_cycle(edges: Iterable[tuple[str, str]]) -> list[str] | None:
    """A cycle in the directed graph given by ``edges``, or None."""
    sorter = graphlib.TopologicalSorter()
    for src, dst in edges:
        sorter.add(src, dst)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        return list(exc.args[1])
    return None


@dataclass(frozen=True)
class RoleHierarchyList:
    rows: tuple[HierarchyRow, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        for i, row in enumerate(self.rows):
            if not row.role or not row.role.strip():
                raise HierarchyError(f"row {i} has no role")
        cycle = find_cycle(self.edges())
        if cycle:
            raise HierarchyError("cycle in role hierarchy: " + " -> ".join(cycle))

    def edges(self) -> list[tuple[str, str]]:
        """(role, inherited-from) pairs, deduplicated in row order."""
        return list(dict.fromkeys(_edges_of(self.rows)))

    def roles(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.role)
        return list(seen)


@dataclass(frozen=True)
class HierarchyEntry:
    subject: int
    source_role: str
    parent: str | None = None
    child: str | None = None


@dataclass(frozen=True)
class ExtendedAccessMatrix:
    """An access matrix joined with role-hierarchy annotations per subject."""

    matrix: AccessMatrix
    hierarchy: tuple[HierarchyEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hierarchy", tuple(self.hierarchy))
        m = len(self.matrix.subjects)
        for entry in self.hierarchy:
            if not 0 <= entry.subject < m:
                raise MatrixValidationError(
                    f"hierarchy entry for subject {entry.subject} outside 0..{m - 1}"
                )

    def entries_for(self, subject: int) -> list[HierarchyEntry]:
        return [e for e in self.hierarchy if e.subject == subject]

    def children_of(self, subject: int) -> list[str]:
        return list(dict.fromkeys(e.child for e in self.entries_for(subject) if e.child))

    def role_child_pairs(self) -> list[tuple[int, str]]:
        return [(e.subject, e.child) for e in self.hierarchy if e.child]


# -- serialization ---------------------------------------------------------

Source = Union[str, bytes, os.PathLike, IO[str], IO[bytes]]


def _read_text(source: Source) -> str:
    """Text content of ``source``; a ``str`` is the content itself, a path-like is read."""
    if isinstance(source, os.PathLike):
        return Path(source).read_text(encoding="utf-8")
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _header_from_json(item: object, where: str) -> CellText:
    if isinstance(item, str):
        return CellText.of(item)
    if isinstance(item, Mapping) and "text" in item:
        return CellText.of(item["text"], item.get("kind"))
    raise MatrixValidationError(f"bad {where} entry: {item!r}")


def matrix_from_dict(doc: Mapping) -> AccessMatrix | ExtendedAccessMatrix:
    try:
        subjects = [_header_from_json(s, "subject") for s in doc["subjects"]]
        assets = [_header_from_json(a, "asset") for a in doc["assets"]]
        rows = doc.get("cells", [])
    except KeyError as exc:
        raise MatrixValidationError(f"missing key {exc}") from None
    cells = [[CellText.of(c) for c in row] for row in rows]
    matrix = AccessMatrix(tuple(subjects), tuple(assets), tuple(map(tuple, cells)))
    if "hierarchy" not in doc or doc["hierarchy"] is None:
        return matrix
    entries = []
    for item in doc["hierarchy"]:
        if "subject" in item:
            subject = int(item["subject"])
        else:
            subject = matrix.subject_index(item.get("subject_text", item["role"]))
        entries.append(
            HierarchyEntry(subject, item["role"], item.get("parent"), item.get("child"))
        )
    return ExtendedAccessMatrix(matrix, tuple(entries))


def _header_to_json(c: CellText) -> dict:
    return {"text": c.raw, "kind": c.kind.value}


def matrix_to_dict(matrix: AccessMatrix | ExtendedAccessMatrix) -> dict:
    extended = isinstance(matrix, ExtendedAccessMatrix)
    m = matrix.matrix if extended else matrix
    doc: dict = {
        "subjects": [_header_to_json(s) for s in m.subjects],
        "assets": [_header_to_json(a) for a in m.assets],
        "cells": [[c.raw for c in row] for row in m.cells],
    }
    if extended:
        doc["hierarchy"] = [
            {"subject": e.subject, "role": e.source_role, "parent": e.parent, "child": e.child}
            for e in matrix.hierarchy
        ]
    return doc


def load_matrix(source: Source, format: str = "json") -> AccessMatrix | ExtendedAccessMatrix:
    """Load a matrix from JSON (canonical) or CSV text.

    CSV layout: the first row lists asset texts after a blank corner cell, the
    first column lists subject texts; missing trailing cells mean no privilege.
    """
    text = _read_text(source)
    fmt = format.lower()
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MatrixValidationError(f"invalid JSON: {exc}") from None
        return matrix_from_dict(doc)
    if fmt != "csv":
        raise ValueError(f"unknown matrix format {format!r}")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MatrixValidationError("empty CSV")
    assets = [CellText.of(a) for a in rows[0][1:]]
    n = len(assets)
    subjects, cells = [], []
    for r, row in enumerate(rows[1:], start=1):
        if not row or not any(x.strip() for x in row):
            continue
        if len(row) - 1 > n:
            raise MatrixValidationError(f"dimension error: CSV row {r} has {len(row) - 1} cells")
        subjects.append(CellText.of(row[0]))
        body = row[1:] + [""] * (n - (len(row) - 1))
        cells.append(tuple(CellText.of(c) for c in body))
    return AccessMatrix(tuple(subjects), tuple(assets), tuple(cells))


def save_matrix(
    matrix: AccessMatrix | ExtendedAccessMatrix, sink: IO[str] | None = None, format: str = "json"
) -> str:
    if format.lower() == "json":
        text = json.dumps(matrix_to_dict(matrix), indent=2, ensure_ascii=False) + "\n"
    elif format.lower() == "csv":
        m = matrix.matrix if isinstance(matrix, ExtendedAccessMatrix) else matrix
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([""] + [a.raw for a in m.assets])
        for s, row in zip(m.subjects, m.cells):
            writer.writerow([s.raw] + [c.raw for c in row])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown matrix format {format!r}")
    if sink is not None:
        sink.write(text)
    return text


def load_hierarchy(source: Source, format: str = "json") -> RoleHierarchyList:
    """Load a role hierarchy list from JSON rows or CSV with role/parent/child columns."""
    text = _read_text(source)
    if format.lower() == "json":
        doc = json.loads(text)
        items = doc["rows"] if isinstance(doc, Mapping) else doc
    else:
        reader = csv.DictReader(io.StringIO(text))
        items = [{k.strip().lower(): v for k, v in row.items() if k} for row in reader]
    rows = []
    for item in items:
        rows.append(
            HierarchyRow(
                str(item.get("role") or "").strip(),
                (item.get("parent") or None) and str(item["parent"]).strip() or None,
                (item.get("child") or None) and str(item["child"]).strip() or None,
            )
        )
    return RoleHierarchyList(tuple(rows))


def hierarchy_to_dict(rhl: RoleHierarchyList) -> list[dict]:
    return [{"role": r.role, "parent": r.parent, "child": r.child} for r in rhl.rows]
