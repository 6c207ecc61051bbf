"""Benchmark construction and scoring.

Builds aligned (base NL, SQL ground truth, perturbed NL) matrix triples and
role-hierarchy benchmarks from tree fixtures, and scores mapping,
subsumption, differencing and synthesis against ground truth.
"""

from __future__ import annotations

import csv
import io
import json
import random
from collections import defaultdict
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from sqlglot import exp

from .gateway import Gateway
from .model import (
    AccessMatrix,
    CellText,
    ExtendedAccessMatrix,
    HierarchyEntry,
    HierarchyRow,
    Kind,
    Operator,
    PrivilegeSet,
    RoleHierarchyList,
    sort_operators,
)
from .oracle import GroundTruth
from .schema import SchemaContext
from .sqltext import parse_query, view_body
from .synthesizer import grant_statement, sanitize_label

PLAIN_OPERATORS = (Operator.SELECT, Operator.INSERT, Operator.UPDATE, Operator.DELETE, Operator.CREATE)


class BenchmarkError(ValueError):
    pass


# -- corpus ------------------------------------------------------------------


@dataclass(frozen=True)
class QueryPair:
    nl: str
    sql: str
    category: str = ""


def load_corpus(path: str | Path) -> list[QueryPair]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [QueryPair(d["nl"], d["sql"], d.get("category", "")) for d in doc]


# -- perturbations ---------------------------------------------------------

ROLE_MODES = ("identity", "role_synonyms", "role_descriptions")
PRIVILEGE_MODES = ("identity", "privilege_synonyms", "privilege_carrier")
VIEW_MODES = (
    "identity",
    "keyword_synonym",
    "keyword_carrier",
    "column_synonym",
    "column_carrier",
    "column_attribute",
    "column_value",
    "value_synonym",
    "multitype",
    "others",
)


@dataclass(frozen=True)
class PerturbationSpec:
    """How to rewrite one kind of matrix text. ``fixture`` maps original text to rewritten text."""

    target: str  # roles | privileges | views
    mode: str
    fixture: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        modes = {"roles": ROLE_MODES, "privileges": PRIVILEGE_MODES, "views": VIEW_MODES}
        if self.target not in modes:
            raise BenchmarkError(f"unknown perturbation target {self.target!r}")
        if self.mode not in modes[self.target]:
            raise BenchmarkError(f"mode {self.mode!r} does not apply to {self.target}")

    @property
    def label(self) -> str:
        return "base" if self.mode == "identity" else self.mode

    def to_dict(self) -> dict:
        doc: dict = {"target": self.target, "mode": self.mode}
        if self.fixture is not None:
            doc["fixture"] = dict(self.fixture)
        return doc


IDENTITY = PerturbationSpec("roles", "identity")


def load_perturbation(path: str | Path) -> PerturbationSpec:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return PerturbationSpec(doc["target"], doc["mode"], doc.get("fixture"))


def save_perturbation(spec: PerturbationSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


_SYNONYMS = {
    Operator.SELECT: "read",
    Operator.INSERT: "add rows to",
    Operator.UPDATE: "modify",
    Operator.DELETE: "remove rows from",
    Operator.CREATE: "create objects in",
}
_CARRIERS = {
    Operator.SELECT: "look through its records",
    Operator.INSERT: "file new entries",
    Operator.UPDATE: "correct existing entries",
    Operator.DELETE: "purge entries",
    Operator.CREATE: "set up new objects",
}


def _join_words(parts: Sequence[str]) -> str:
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def privilege_text(privs: PrivilegeSet, mode: str = "identity") -> str:
    """Phrase for a privilege set; each mode is one-to-one on sets."""
    if mode == "identity":
        return privs.render()
    plain = list(privs.plain)
    if mode == "privilege_synonyms":
        text = f"This position may {_join_words([_SYNONYMS[op] for op in plain])} this view"
        return text + (", and may pass these rights on." if privs.grant_option else ".")
    if mode == "privilege_carrier":
        text = f"This role is trusted to {_join_words([_CARRIERS[op] for op in plain])}"
        return text + (" and to delegate this trust." if privs.grant_option else ".")
    raise BenchmarkError(f"unknown privilege mode {mode!r}")


def perturb_text(text: str, spec: PerturbationSpec, gateway: Gateway | None = None) -> str:
    if spec.mode == "identity":
        return text
    if spec.fixture is not None and text in spec.fixture:
        return spec.fixture[text]
    if gateway is None:
        raise BenchmarkError(f"no fixture entry for {text!r} under {spec.mode} and no gateway")
    return gateway.ask("perturb", {"target": spec.target, "mode": spec.mode, "text": text}).strip()


# -- triples ---------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkTriple:
    base: AccessMatrix
    sql: AccessMatrix
    perturbed: AccessMatrix
    privileges: tuple[tuple[PrivilegeSet, ...], ...]
    role_labels: tuple[str, ...]
    view_names: tuple[str, ...]
    perturbation: PerturbationSpec = IDENTITY
    database: str = ""

    def __post_init__(self) -> None:
        if not (self.base.shape == self.sql.shape == self.perturbed.shape):
            raise BenchmarkError("triple matrices differ in shape")

    @property
    def alignment(self) -> dict[tuple[int, int], tuple[int, int]]:
        n, m = self.base.shape
        return {(i, j): (i, j) for i in range(n) for j in range(m)}

    @property
    def stratum(self) -> tuple[str, str]:
        return (self.database, self.perturbation.label)

    def truth_script(self) -> list[str]:
        """Ground-truth statements implementing the SQL matrix."""
        out = [f"CREATE ROLE {r};" for r in self.role_labels]
        out += [a.raw.rstrip(";") + ";" for a in self.sql.assets]
        for i, row in enumerate(self.privileges):
            for j, privs in enumerate(row):
                if privs:
                    out.append(grant_statement(self.role_labels[i], self.view_names[j], privs))
        return out

    def ground_truth(self) -> GroundTruth:
        truth = GroundTruth()
        for i, label in enumerate(self.role_labels):
            truth.add_role(f"role:{label}", label, self.base.subjects[i].raw, self.perturbed.subjects[i].raw)
        for j, name in enumerate(self.view_names):
            body = _body(self.sql.assets[j].raw)
            truth.add_view(
                f"view:{body}",
                body,
                self.sql.assets[j].raw,
                self.base.assets[j].raw,
                self.perturbed.assets[j].raw,
            )
        for i, row in enumerate(self.privileges):
            for j, privs in enumerate(row):
                if privs:
                    for m in (self.base, self.perturbed):
                        truth.add_privileges(m.cell(i, j).raw, privs)
        return truth


def _body(create_view: str) -> str:
    return view_body(create_view) or create_view


def random_privileges(rng: random.Random, fill: float = 0.8, grant_rate: float = 0.2) -> PrivilegeSet:
    """Empty with probability 1 - fill, else 1-3 plain operators plus GRANT at ``grant_rate``."""
    if rng.random() >= fill:
        return PrivilegeSet()
    ops = set(rng.sample(PLAIN_OPERATORS, rng.randint(1, 3)))
    if rng.random() < grant_rate:
        ops.add(Operator.GRANT)
    return PrivilegeSet(frozenset(ops))


def build_triple(
    pairs: Sequence[QueryPair | tuple[str, str]],
    roles: Sequence[str],
    perturbation: PerturbationSpec = IDENTITY,
    seed: int = 0,
    gateway: Gateway | None = None,
    role_labels: Sequence[str] | None = None,
    database: str = "",
    fill: float = 1.0,
) -> BenchmarkTriple:
    """Base, SQL and perturbed matrices over the same roles, views and random privileges.

    ``fill`` is the chance that a cell holds any privilege at all.
    """
    pairs = [p if isinstance(p, QueryPair) else QueryPair(*p) for p in pairs]
    if not pairs or not roles:
        raise BenchmarkError("a triple needs at least one view and one role")
    labels = list(role_labels) if role_labels is not None else [sanitize_label(r) for r in roles]
    if len(labels) != len(roles) or len({l.lower() for l in labels}) != len(labels):
        raise BenchmarkError("role labels must be distinct, one per role")
    rng = random.Random(seed)
    privs = tuple(tuple(random_privileges(rng, fill) for _ in pairs) for _ in roles)
    view_names = tuple(f"view_{j}" for j in range(len(pairs)))

    def cells(mode: str) -> list[list[str]]:
        return [[privilege_text(p, mode) if p else "" for p in row] for row in privs]

    base = AccessMatrix.build(list(roles), [p.nl for p in pairs], cells("identity"))
    sql = AccessMatrix(
        tuple(CellText(l, Kind.SQL) for l in labels),
        tuple(CellText(f"CREATE VIEW {n} AS {p.sql}", Kind.SQL) for n, p in zip(view_names, pairs)),
        tuple(
            tuple(
                CellText(grant_statement(labels[i], view_names[j], p), Kind.SQL) if p else CellText("", Kind.SQL)
                for j, p in enumerate(row)
            )
            for i, row in enumerate(privs)
        ),
    )
    subjects, assets, grid = list(roles), [p.nl for p in pairs], cells("identity")
    if perturbation.target == "roles":
        subjects = [perturb_text(r, perturbation, gateway) for r in roles]
    elif perturbation.target == "views":
        assets = [perturb_text(a, perturbation, gateway) for a in assets]
    elif perturbation.mode != "identity":
        grid = cells(perturbation.mode)
    perturbed = AccessMatrix.build(subjects, assets, grid)
    return BenchmarkTriple(base, sql, perturbed, privs, tuple(labels), view_names, perturbation, database)


# -- hierarchy benchmarks ----------------------------------------------------


@dataclass(frozen=True)
class TreeFixture:
    name: str
    rhl: RoleHierarchyList
    labels: Mapping[str, str]  # role description -> identifier

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {r: [] for r in self.rhl.roles()}
        for parent, child in self.rhl.edges():
            out.setdefault(parent, []).append(child)
        return out

    def root(self) -> str:
        kids = {c for cs in self.children().values() for c in cs}
        roots = [r for r in self.rhl.roles() if r not in kids]
        if len(roots) != 1:
            raise BenchmarkError(f"tree {self.name!r} has {len(roots)} roots")
        return roots[0]

    def leaves(self) -> list[str]:
        return [r for r, cs in self.children().items() if not cs]

    def levels(self) -> int:
        kids = self.children()

        def depth(r: str) -> int:
            return 1 + max((depth(c) for c in kids[r]), default=0)

        return depth(self.root())

    def leaf_depths(self) -> list[int]:
        kids = self.children()
        out = []

        def walk(r: str, d: int) -> None:
            if not kids[r]:
                out.append(d)
            for c in kids[r]:
                walk(c, d + 1)

        walk(self.root(), 1)
        return out


def load_tree(path: str | Path) -> TreeFixture:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = []
    for r in doc["rows"]:
        rows.append(HierarchyRow(r["role"], r.get("parent"), r.get("child")))
    return TreeFixture(doc["name"], RoleHierarchyList(tuple(rows)), dict(doc["labels"]))


@dataclass(frozen=True)
class HierarchyBench:
    tree: TreeFixture
    policy: ExtendedAccessMatrix
    implementation: ExtendedAccessMatrix
    privileges: Mapping[str, tuple[PrivilegeSet, ...]]  # role -> per-view privileges
    extras: Mapping[str, tuple[PrivilegeSet, ...]]

    def check_union(self) -> list[str]:
        """Cells where a non-leaf role differs from the union of its children plus its extras."""
        bad = []
        kids = self.tree.children()
        for role, cs in kids.items():
            if not cs:
                continue
            for j, privs in enumerate(self.privileges[role]):
                expect = self.extras[role][j]
                for c in cs:
                    expect = expect | self.privileges[c][j]
                if expect != privs:
                    bad.append(f"{role} view {j}: {privs.render()} != {expect.render()}")
        return bad


def build_hierarchy_bench(
    tree: TreeFixture,
    pairs: Sequence[QueryPair | tuple[str, str]],
    seed: int = 0,
    max_leaf_operators: int = 3,
) -> HierarchyBench:
    """Post-order privileges: leaves get 1..3 random operators, inner roles the union of their children."""
    pairs = [p if isinstance(p, QueryPair) else QueryPair(*p) for p in pairs]
    rng = random.Random(seed)
    kids = tree.children()
    privs: dict[str, tuple[PrivilegeSet, ...]] = {}
    extras: dict[str, tuple[PrivilegeSet, ...]] = {}

    def visit(role: str) -> None:
        for c in kids[role]:
            visit(c)
        if not kids[role]:
            privs[role] = tuple(
                PrivilegeSet(frozenset(rng.sample(PLAIN_OPERATORS, rng.randint(1, max_leaf_operators)))) for _ in pairs
            )
            extras[role] = tuple(PrivilegeSet() for _ in pairs)
            return
        row = []
        for j in range(len(pairs)):
            acc = PrivilegeSet()
            for c in kids[role]:
                acc = acc | privs[c][j]
            row.append(acc)
        privs[role] = tuple(row)
        extras[role] = tuple(PrivilegeSet() for _ in pairs)

    visit(tree.root())
    roles = tree.rhl.roles()
    grid = [[privs[r][j].render() for j in range(len(pairs))] for r in roles]
    policy_m = AccessMatrix.build(roles, [p.nl for p in pairs], grid)
    impl_m = AccessMatrix(
        tuple(CellText(tree.labels[r], Kind.SQL) for r in roles),
        tuple(CellText(f"CREATE VIEW view_{j} AS {p.sql}", Kind.SQL) for j, p in enumerate(pairs)),
        tuple(
            tuple(
                CellText(grant_statement(tree.labels[r], f"view_{j}", privs[r][j]), Kind.SQL)
                for j in range(len(pairs))
            )
            for r in roles
        ),
    )
    index = {r: i for i, r in enumerate(roles)}
    # plain equijoin of the hierarchy rows with each matrix on the role column
    policy_entries = tuple(HierarchyEntry(index[r.role], r.role, r.parent, r.child) for r in tree.rhl.rows)
    impl_entries = tuple(
        HierarchyEntry(
            index[r.role],
            tree.labels[r.role],
            tree.labels[r.parent] if r.parent else None,
            tree.labels[r.child] if r.child else None,
        )
        for r in tree.rhl.rows
    )
    return HierarchyBench(
        tree,
        ExtendedAccessMatrix(policy_m, policy_entries),
        ExtendedAccessMatrix(impl_m, impl_entries),
        privs,
        extras,
    )


# -- scoring -------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreCard:
    tp: int
    fp: int
    fn: int
    stratum: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise BenchmarkError("confusion counts must be non-negative")

    @property
    def precision(self) -> Fraction:
        d = self.tp + self.fp
        return Fraction(self.tp, d) if d else Fraction(0)

    @property
    def recall(self) -> Fraction:
        d = self.tp + self.fn
        return Fraction(self.tp, d) if d else Fraction(0)

    @property
    def f1(self) -> Fraction:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else Fraction(0)

    @property
    def f1_error(self) -> Fraction:
        return 1 - self.f1

    def __add__(self, other: ScoreCard) -> ScoreCard:
        stratum = self.stratum if self.stratum == other.stratum else ()
        return ScoreCard(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, stratum)

    def to_dict(self) -> dict:
        return {
            "stratum": list(self.stratum),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": round(float(self.precision), 6),
            "recall": round(float(self.recall), 6),
            "f1": round(float(self.f1), 6),
            "f1_error": round(float(self.f1_error), 6),
        }


def confusion(predicted: Iterable, truth: Iterable, stratum: tuple[str, ...] = ()) -> ScoreCard:
    p, t = set(predicted), set(truth)
    return ScoreCard(len(p & t), len(p - t), len(t - p), stratum)


def score_mapping(
    role_map: Mapping[int, int],
    view_map: Mapping[int, int],
    alignment: Mapping[tuple[int, int], tuple[int, int]],
    stratum: tuple[str, ...] = (),
) -> ScoreCard:
    """Positives are role-view pairs the two matrices are predicted (or known) to share."""
    predicted = {
        ((i, j), (role_map[i], view_map[j])) for i, j in alignment if i in role_map and j in view_map
    }
    return confusion(predicted, alignment.items(), stratum)


def score_subsumption(
    predicted: Mapping[tuple[int, int], bool],
    truth: Mapping[tuple[int, int], bool],
    stratum: tuple[str, ...] = (),
) -> ScoreCard:
    """Positives are cells whose second-matrix privileges are subsumed by the first."""
    return confusion([k for k, v in predicted.items() if v], [k for k, v in truth.items() if v], stratum)


def score_diff(result, triple_alignment: Mapping[tuple[int, int], tuple[int, int]], m2: AccessMatrix, truth_subsumed: Mapping[tuple[int, int], bool], stratum: tuple[str, ...] = ()) -> dict[str, ScoreCard]:
    """Role-view mapping and privilege subsumption scores of one differencing run.

    A subsumption prediction only counts as a true positive when it was made
    on the truly aligned cell.
    """
    rmap, vmap = result.subjects.matches, result.assets.matches
    rv = score_mapping(rmap, vmap, triple_alignment, stratum)
    violated = {(m2.subject_index(v.subject), m2.asset_index(v.asset)) for v in result.report.privilege_violations}
    predicted, truth = set(), set()
    for (i, j), target in triple_alignment.items():
        if truth_subsumed.get((i, j)) and not m2.cell(*target).empty:
            truth.add(((i, j), target))
        if i in rmap and j in vmap:
            got = (rmap[i], vmap[j])
            if not m2.cell(*got).empty and got not in violated:
                predicted.add(((i, j), got))
    return {"rv": rv, "priv": confusion(predicted, truth, stratum)}


def aggregate(cards: Iterable[ScoreCard], key: Callable[[ScoreCard], tuple] = lambda c: ()) -> dict[tuple, ScoreCard]:
    """Micro-average: sum the confusion counts of every card sharing a key."""
    out: dict[tuple, ScoreCard] = {}
    for c in cards:
        k = key(c)
        out[k] = out[k] + c if k in out else ScoreCard(c.tp, c.fp, c.fn, k)
    return out


def cards_to_csv(cards: Iterable[ScoreCard], stratum_names: Sequence[str] = ("database", "perturbation")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*stratum_names, "tp", "fp", "fn", "precision", "recall", "f1", "f1_error"])
    for c in cards:
        d = c.to_dict()
        strat = list(c.stratum) + [""] * (len(stratum_names) - len(c.stratum))
        w.writerow([*strat, c.tp, c.fp, c.fn, f"{d['precision']:.6f}", f"{d['recall']:.6f}", f"{d['f1']:.6f}", f"{d['f1_error']:.6f}"])
    return buf.getvalue()


# -- recorded confusion counts ------------------------------------------------------


@dataclass(frozen=True)
class ConfusionRecord:
    method: str
    comparison: str  # "NL vs NL" | "NL vs SQL"
    metric: str  # "RV" | "Priv"
    card: ScoreCard


def load_confusion(path: str | Path) -> list[ConfusionRecord]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for r in doc["records"]:
        card = ScoreCard(r["tp"], r["fp"], r["fn"], (r["database"], r["perturbation"]))
        out.append(ConfusionRecord(r["method"], r["comparison"], r["metric"], card))
    return out


def total_f1_errors(records: Sequence[ConfusionRecord]) -> dict[tuple[str, str, str], ScoreCard]:
    """Totals over all databases and perturbations, keyed by (comparison, metric, method)."""
    sums: dict[tuple[str, str, str], ScoreCard] = {}
    for r in records:
        k = (r.comparison, r.metric, r.method)
        sums[k] = sums[k] + r.card if k in sums else ScoreCard(r.card.tp, r.card.fp, r.card.fn, k)
    return sums


# -- synthesis accuracy ------------------------------------------------------

CATEGORY_ROWS = (
    "Single column Projection",
    "Multiple column Projection",
    "Single Whole-table Aggregation",
    "Single join",
    "Multi-way join",
    "Common Table Expression",
    "Nested Queries",
    "Single WHERE clause condition",
    "Multiple WHERE clause conditions",
)

_AGGREGATES = (exp.Count, exp.Sum, exp.Avg, exp.Min, exp.Max)


def classify_query(sql: str) -> str:
    """Query-type category by keyword test, checked in a fixed order.

    Nested subqueries win over everything; WITH or HAVING marks the
    common-table-expression row; more than three tables is a multi-way join.
    """
    tree = parse_query(sql)
    cte_bodies = {id(c.this) for c in tree.find_all(exp.CTE)}
    for sub in tree.find_all(exp.Subquery, exp.Select):
        if sub is tree or id(sub) in cte_bodies:
            continue
        if isinstance(sub, exp.Select) and isinstance(sub.parent, (exp.Subquery, exp.CTE)):
            continue
        return "Nested Queries"
    if tree.find(exp.CTE) or tree.find(exp.Having):
        return "Common Table Expression"
    tables = {t.name.lower() for t in tree.find_all(exp.Table)}
    if len(tables) > 3:
        return "Multi-way join"
    if len(tables) > 1:
        return "Single join"
    where = tree.args.get("where")
    if where is not None:
        if where.find(exp.And, exp.Or):
            return "Multiple WHERE clause conditions"
        return "Single WHERE clause condition"
    if tree.args.get("group") or tree.find(*_AGGREGATES):
        return "Single Whole-table Aggregation"
    if isinstance(tree, exp.Select) and len(tree.expressions) == 1 and not tree.find(exp.Star):
        return "Single column Projection"
    return "Multiple column Projection"


@dataclass(frozen=True)
class CellOutcome:
    role: str
    view: str
    category: str
    correct: bool
    reason: str = ""


@dataclass
class SynthesisScore:
    outcomes: list[CellOutcome] = field(default_factory=list)

    def table(self, order: Sequence[str] = CATEGORY_ROWS) -> list[tuple[str, int, int]]:
        tally: dict[str, list[int]] = defaultdict(lambda: [0, 0])
        for o in self.outcomes:
            tally[o.category][0] += o.correct
            tally[o.category][1] += 1
        rows = [(c, *tally[c]) for c in order if c in tally]
        rows += [(c, *v) for c, v in sorted(tally.items()) if c not in order]
        rows.append(("Total", sum(r[1] for r in rows), sum(r[2] for r in rows)))
        return rows

    def render(self) -> str:
        rows = self.table()
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{c:<{width}}  {ok} / {n}" for c, ok, n in rows) + "\n"


def score_synthesis(
    synth_db,
    truth_db,
    roles: Sequence[tuple[str, str]],
    views: Sequence[tuple[str | None, str, str]],
) -> SynthesisScore:
    """Compare two executed databases cell by cell.

    ``roles`` pairs (synthesized label, truth label); ``views`` holds
    (synthesized view name or None, truth view name, category). A cell is
    correct when both sides grant the same operators and the two views
    return the same rows.
    """
    def grant_map(db) -> dict[tuple[str, str], frozenset]:
        out: dict[tuple[str, str], set] = defaultdict(set)
        for g in db.fetch_grants():
            out[(g.grantee, g.asset)].add((g.operator, g.grant_option))
        return {k: frozenset(v) for k, v in out.items()}

    got, want = grant_map(synth_db), grant_map(truth_db)
    view_ok: dict[str, tuple[bool, str]] = {}
    for sname, tname, _ in views:
        if sname is None:
            view_ok[tname] = (False, "view was not synthesized")
            continue
        try:
            same = synth_db.result_set(f"SELECT * FROM {sname}") == truth_db.result_set(f"SELECT * FROM {tname}")
        except Exception as exc:  # a missing or broken view is a wrong cell, not a crash
            view_ok[tname] = (False, str(exc))
            continue
        view_ok[tname] = (same, "" if same else "view rows differ")
    score = SynthesisScore()
    for slabel, tlabel in roles:
        for sname, tname, category in views:
            ok, why = view_ok[tname]
            if ok and got.get((slabel.lower(), (sname or "").lower()), frozenset()) != want.get((tlabel.lower(), tname.lower()), frozenset()):
                ok, why = False, "grants differ"
            score.outcomes.append(CellOutcome(tlabel, tname, category, ok, why))
    return score


def privileges_grid(matrix: AccessMatrix) -> list[list[PrivilegeSet | None]]:
    from .differencer import cell_privileges

    return [[cell_privileges(c) if not c.empty else PrivilegeSet() for c in row] for row in matrix.cells]


def render_operators(privs: PrivilegeSet) -> str:
    return ", ".join(op.value for op in sort_operators(privs))


# -- suite runs ------------------------------------------------------------------


@dataclass(frozen=True)
class Suite:
    """One database's benchmark inputs: schema, query corpus, roles and perturbations."""

    name: str
    schema: SchemaContext
    corpus: tuple[QueryPair, ...]
    roles: tuple[str, ...]
    diff_views: tuple[int, ...]
    perturbations: tuple[PerturbationSpec, ...]


def load_suite(root: str | Path, perturbations: str | Path | None = None) -> Suite:
    from .schema import load_schema

    root = Path(root)
    pert_dir = Path(perturbations) if perturbations else root.parent / "perturbations"
    specs = tuple(load_perturbation(p) for p in sorted(pert_dir.glob("*.json")))
    diff_views = json.loads((root / "diff_views.json").read_text(encoding="utf-8"))
    return Suite(
        root.name,
        load_schema(root / "schema.json"),
        tuple(load_corpus(root / "corpus.json")),
        tuple(json.loads((root / "roles.json").read_text(encoding="utf-8"))),
        tuple(diff_views),
        specs,
    )


def suite_triples(suite: Suite, seed: int = 0, gateway: Gateway | None = None) -> list[BenchmarkTriple]:
    """One 10 x 10 differencing triple per perturbation, all with the same privileges."""
    pairs = [suite.corpus[j] for j in suite.diff_views]
    return [build_triple(pairs, suite.roles, spec, seed, gateway, database=suite.name) for spec in suite.perturbations]


def synthesis_triple(suite: Suite, seed: int = 0) -> BenchmarkTriple:
    """Roles against every corpus query (the query-type accuracy matrix)."""
    return build_triple(list(suite.corpus), suite.roles, IDENTITY, seed, database=suite.name)


def suite_truth(suite: Suite, seed: int = 0) -> GroundTruth:
    truth = GroundTruth()
    for t in suite_triples(suite, seed) + [synthesis_triple(suite, seed)]:
        truth = truth.merge(t.ground_truth())
    return truth


@dataclass
class DiffRun:
    stratum: tuple[str, str]
    comparison: object
    auditing: object
    cards: dict[tuple[str, str], ScoreCard]


def run_differencing(triple: BenchmarkTriple, gateway: Gateway | None, sandbox=None, prune: bool = True) -> DiffRun:
    """Policy comparison (base vs perturbed) and policy auditing (base vs SQL) on one triple."""
    from .differencer import diff_detail

    truth = {(i, j): bool(p) for i, row in enumerate(triple.privileges) for j, p in enumerate(row)}
    stratum = triple.stratum
    comp = diff_detail(triple.base, triple.perturbed, gateway, sandbox, prune)
    audit = diff_detail(triple.base, triple.sql, gateway, sandbox, prune)
    c = score_diff(comp, triple.alignment, triple.perturbed, truth, stratum)
    a = score_diff(audit, triple.alignment, triple.sql, truth, stratum)
    cards = {
        ("NL vs NL", "RV"): c["rv"],
        ("NL vs NL", "Priv"): c["priv"],
        ("NL vs SQL", "RV"): a["rv"],
        ("NL vs SQL", "Priv"): a["priv"],
    }
    return DiffRun(stratum, comp.report, audit.report, cards)


@dataclass
class RoundTrip:
    synthesis: object
    execution: list
    implementation: AccessMatrix
    report: object
    target: object


def run_roundtrip(matrix: AccessMatrix, schema, gateway: Gateway | None, embedder=None) -> RoundTrip:
    """Synthesize a matrix, execute it on a fresh sandbox, regenerate the ACM and diff it."""
    from .catalog import SandboxDatabase
    from .differencer import diff
    from .synthesizer import synthesize

    scratch = SandboxDatabase.from_schema(schema)
    try:
        synthesis = synthesize(matrix, schema, gateway, scratch, embedder)
    finally:
        scratch.close()
    target = SandboxDatabase.from_schema(schema)
    execution = target.execute_script(synthesis.script.texts())
    acm = target.generate_acm()
    report = diff(matrix, acm, gateway, target)
    return RoundTrip(synthesis, execution, acm, report, target)


def run_synthesis(triple: BenchmarkTriple, schema, gateway: Gateway | None, categories: Sequence[str], embedder=None) -> tuple[SynthesisScore, RoundTrip]:
    """Query-type accuracy: synthesized and ground-truth scripts executed on twin sandboxes."""
    from .catalog import SandboxDatabase

    rt = run_roundtrip(triple.base, schema, gateway, embedder)
    truth_db = SandboxDatabase.from_schema(schema)
    truth_db.execute_script(triple.truth_script())
    syn = rt.synthesis
    roles = list(zip(syn.role_labels, triple.role_labels))
    views = [(syn.view_labels[j], triple.view_names[j], categories[j]) for j in range(len(triple.view_names))]
    score = score_synthesis(rt.target, truth_db, roles, views)
    truth_db.close()
    return score, rt


@dataclass
class SuiteResult:
    diffs: list[DiffRun]
    roundtrips: dict[str, RoundTrip]
    synthesis: SynthesisScore | None

    def records(self, method: str = "LLM4AC") -> list[ConfusionRecord]:
        return [ConfusionRecord(method, comp, metric, card) for run in self.diffs for (comp, metric), card in run.cards.items()]

    def scorecards_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["database", "perturbation", "comparison", "metric", "tp", "fp", "fn", "f1_error"])
        for r in self.records():
            w.writerow([*r.card.stratum, r.comparison, r.metric, r.card.tp, r.card.fp, r.card.fn, f"{float(r.card.f1_error):.6f}"])
        return buf.getvalue()

    def scripts(self) -> dict[str, str]:
        return {label: rt.synthesis.script.render() for label, rt in self.roundtrips.items()}

    def to_dict(self) -> dict:
        return {
            "differencing": [
                {
                    "stratum": list(run.stratum),
                    "comparison": run.comparison.to_dict(),
                    "auditing": run.auditing.to_dict(),
                    "cards": {f"{c} {m}": card.to_dict() for (c, m), card in run.cards.items()},
                }
                for run in self.diffs
            ],
            "roundtrip": {label: rt.report.to_dict() for label, rt in self.roundtrips.items()},
            "synthesis": self.synthesis.table() if self.synthesis else None,
        }

    def close(self) -> None:
        for rt in self.roundtrips.values():
            rt.target.close()


def run_suite(suite: Suite, gateway: Gateway | None, seed: int = 0, roundtrip: bool = True, synthesis: bool = True, embedder=None) -> SuiteResult:
    """Differencing on every perturbation, round trips on the perturbed matrices, query-type accuracy."""
    diffs, trips = [], {}
    for triple in suite_triples(suite, seed):
        diffs.append(run_differencing(triple, gateway))
        if roundtrip:
            trips[triple.perturbation.label] = run_roundtrip(triple.perturbed, suite.schema, gateway, embedder)
    score = None
    if synthesis:
        triple = synthesis_triple(suite, seed)
        score, rt = run_synthesis(triple, suite.schema, gateway, [p.category for p in suite.corpus], embedder)
        rt.target.close()
    return SuiteResult(diffs, trips, score)
