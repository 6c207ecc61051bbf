"""Database schema descriptions used as synthesis context and sandbox seed."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    type: str = "TEXT"


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    rows: tuple[tuple[Any, ...], ...] = ()

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class SchemaContext:
    tables: tuple[Table, ...]
    dialect: str = "postgres"
    data_dictionary: Mapping[str, str] = field(default_factory=dict)
    value_samples: Mapping[tuple[str, str], Sequence[Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for t in self.tables:
            key = t.name.lower()
            if key in seen:
                raise SchemaError(f"duplicate table {t.name!r}")
            seen.add(key)
            cols = [c.name.lower() for c in t.columns]
            if len(cols) != len(set(cols)):
                raise SchemaError(f"duplicate column in table {t.name!r}")
            for row in t.rows:
                if len(row) != len(cols):
                    raise SchemaError(f"row width mismatch in table {t.name!r}: {row!r}")

    def table(self, name: str) -> Table | None:
        for t in self.tables:
            if t.name.lower() == name.lower():
                return t
        return None

    def has_table(self, name: str) -> bool:
        return self.table(name) is not None

    def columns_of(self, name: str) -> set[str]:
        t = self.table(name)
        return {c.name.lower() for c in t.columns} if t else set()

    def render(self) -> str:
        """Schema text for prompts: table definitions, then optional dictionary and samples."""
        lines = []
        for t in self.tables:
            cols = ", ".join(f"{c.name} {c.type}" for c in t.columns)
            lines.append(f"CREATE TABLE {t.name} ({cols});")
        if self.data_dictionary:
            lines.append("-- Column definitions:")
            for key in sorted(self.data_dictionary):
                lines.append(f"-- {key}: {self.data_dictionary[key]}")
        if self.value_samples:
            lines.append("-- Example values:")
            for (tab, col) in sorted(self.value_samples):
                vals = ", ".join(repr(v) for v in self.value_samples[(tab, col)])
                lines.append(f"-- {tab}.{col}: {vals}")
        return "\n".join(lines)

    def render_info(self) -> str:
        lines = []
        for t in self.tables:
            lines.append(f"{t.name}: columns {', '.join(t.column_names())}; {len(t.rows)} rows")
        return "\n".join(lines)

    @classmethod
    def from_dict(cls, doc: Mapping) -> SchemaContext:
        tables = []
        for t in doc.get("tables", []):
            cols = []
            for c in t["columns"]:
                if isinstance(c, str):
                    cols.append(Column(c))
                else:
                    cols.append(Column(c["name"], c.get("type", "TEXT")))
            rows = tuple(tuple(r) for r in t.get("rows", []))
            tables.append(Table(t["name"], tuple(cols), rows))
        samples = {}
        for key, values in (doc.get("value_samples") or {}).items():
            tab, _, col = key.partition(".")
            samples[(tab, col)] = list(values)
        return cls(
            tuple(tables),
            doc.get("dialect", "postgres"),
            dict(doc.get("data_dictionary") or {}),
            samples,
        )

    def to_dict(self) -> dict:
        doc: dict = {
            "dialect": self.dialect,
            "tables": [
                {
                    "name": t.name,
                    "columns": [{"name": c.name, "type": c.type} for c in t.columns],
                    "rows": [list(r) for r in t.rows],
                }
                for t in self.tables
            ],
        }
        if self.data_dictionary:
            doc["data_dictionary"] = dict(self.data_dictionary)
        if self.value_samples:
            doc["value_samples"] = {f"{t}.{c}": list(v) for (t, c), v in self.value_samples.items()}
        return doc


def load_schema(path: str | Path) -> SchemaContext:
    with open(path, encoding="utf-8") as fh:
        return SchemaContext.from_dict(json.load(fh))
