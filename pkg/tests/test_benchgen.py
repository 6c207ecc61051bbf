from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlacm.benchgen import (
    CATEGORY_ROWS,
    BenchmarkError,
    PerturbationSpec,
    QueryPair,
    ScoreCard,
    aggregate,
    build_hierarchy_bench,
    build_triple,
    cards_to_csv,
    classify_query,
    confusion,
    load_confusion,
    load_perturbation,
    load_suite,
    load_tree,
    privilege_text,
    run_differencing,
    run_synthesis,
    save_perturbation,
    suite_triples,
    suite_truth,
    synthesis_triple,
    total_f1_errors,
)
from nlacm.cli import DATA
from nlacm.gateway import Gateway, ReplayBackend
from nlacm.model import Operator, PrivilegeSet
from nlacm.oracle import oracle_gateway

PAIRS = [
    QueryPair("names of all cars", "SELECT name FROM cars"),
    QueryPair("cars heavier than 3000", "SELECT name FROM cars WHERE weight > 3000"),
    QueryPair("number of makers", "SELECT count(*) FROM makers"),
]
ROLES = ["Fleet manager", "Junior mechanic"]
OPS = [Operator.SELECT, Operator.INSERT, Operator.UPDATE, Operator.DELETE, Operator.CREATE]


def _suite():
    return load_suite(DATA / "car_1")


def test_triple_shapes_and_identity():
    t = build_triple(PAIRS, ROLES, seed=3)
    assert t.base.shape == t.sql.shape == t.perturbed.shape == (2, 3)
    assert t.base == t.perturbed
    assert t.role_labels == ("fleet_manager", "junior_mechanic")
    assert t.sql.assets[1].raw == "CREATE VIEW view_1 AS SELECT name FROM cars WHERE weight > 3000"
    assert all(p for row in t.privileges for p in row)


def test_role_synonym_perturbation_only_touches_subjects():
    spec = PerturbationSpec("roles", "role_synonyms", {"Fleet manager": "Head of fleet", "Junior mechanic": "Apprentice"})
    t = build_triple(PAIRS, ROLES, spec, seed=3)
    assert [s.raw for s in t.perturbed.subjects] == ["Head of fleet", "Apprentice"]
    assert t.perturbed.assets == t.base.assets and t.perturbed.cells == t.base.cells


def test_missing_perturbation_text_without_gateway():
    spec = PerturbationSpec("views", "keyword_synonym", {})
    with pytest.raises(BenchmarkError):
        build_triple(PAIRS, ROLES, spec)
    with pytest.raises(BenchmarkError):
        PerturbationSpec("roles", "column_synonym")


def test_seeded_generation_is_deterministic():
    assert build_triple(PAIRS, ROLES, seed=9) == build_triple(PAIRS, ROLES, seed=9)
    assert build_triple(PAIRS, ROLES, seed=9).privileges != build_triple(PAIRS, ROLES, seed=10).privileges


def test_privilege_phrasings_are_one_to_one():
    sets = [PrivilegeSet(frozenset(c)) for r in range(1, 4) for c in itertools.combinations(OPS, r)]
    sets += [PrivilegeSet(p.operators | {Operator.GRANT}) for p in sets]
    for mode in ("identity", "privilege_synonyms", "privilege_carrier"):
        assert len({privilege_text(p, mode) for p in sets}) == len(sets)


def test_perturbation_round_trip(tmp_path):
    spec = PerturbationSpec("views", "column_synonym", {"a": "b"})
    save_perturbation(spec, tmp_path / "p.json")
    assert load_perturbation(tmp_path / "p.json") == spec


def test_tree_fixtures():
    deep = load_tree(DATA / "trees" / "deep.json")
    wide = load_tree(DATA / "trees" / "wide.json")
    balanced = load_tree(DATA / "trees" / "balanced.json")
    assert (len(deep.rhl.roles()), deep.levels()) == (16, 6)
    assert (len(wide.rhl.roles()), wide.levels()) == (19, 2)
    assert len(balanced.rhl.roles()) == 12
    assert max(balanced.leaf_depths()) - min(balanced.leaf_depths()) <= 1


@pytest.mark.parametrize("name", ["deep", "wide", "balanced"])
def test_hierarchy_bench_unions_children(name):
    tree = load_tree(DATA / "trees" / f"{name}.json")
    bench = build_hierarchy_bench(tree, PAIRS, seed=4)
    assert bench.check_union() == []
    for leaf in tree.leaves():
        assert all(1 <= len(p.plain) <= 3 for p in bench.privileges[leaf])
    assert bench.policy.matrix.shape == (len(tree.rhl.roles()), len(PAIRS))


def test_score_example():
    card = ScoreCard(8, 2, 2)
    assert card.precision == Fraction(4, 5) and card.recall == Fraction(4, 5)
    assert card.f1 == Fraction(4, 5) and card.f1_error == Fraction(1, 5)
    assert ScoreCard(0, 0, 0).f1_error == 1


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 10**6))
def test_confusion_matches_brute_force(seed):
    rng = random.Random(seed)
    universe = range(rng.randint(1, 30))
    pred = [x for x in universe if rng.random() < 0.5]
    truth = [x for x in universe if rng.random() < 0.5]
    card = confusion(pred, truth)
    assert card.tp == sum(1 for x in universe if x in pred and x in truth)
    assert card.fp == sum(1 for x in universe if x in pred and x not in truth)
    assert card.fn == sum(1 for x in universe if x not in pred and x in truth)
    if card.tp:
        p, r = Fraction(card.tp, len(pred)), Fraction(card.tp, len(truth))
        assert card.f1 == 2 * p * r / (p + r)


def test_micro_average_and_csv():
    cards = [ScoreCard(1, 1, 0, ("a", "x")), ScoreCard(3, 0, 1, ("a", "y"))]
    total = aggregate(cards)[()]
    assert (total.tp, total.fp, total.fn) == (4, 1, 1)
    text = cards_to_csv(cards)
    assert text.splitlines()[0].startswith("database,perturbation,tp")
    assert text.splitlines()[1].startswith("a,x,1,1,0,0.500000")


def test_recorded_confusion_totals():
    totals = total_f1_errors(load_confusion(DATA / "recorded_confusion.json"))
    assert round(float(totals[("NL vs NL", "RV", "LLM4AC")].f1_error), 3) == 0.041
    assert round(float(totals[("NL vs SQL", "Priv", "LLM4AC")].f1_error), 3) == 0.006


def test_query_categories():
    assert classify_query("SELECT name FROM cars") == "Single column Projection"
    assert classify_query("SELECT a, b FROM cars") == "Multiple column Projection"
    assert classify_query("SELECT count(*) FROM cars") == "Single Whole-table Aggregation"
    assert classify_query("SELECT a FROM x JOIN y ON x.i = y.i") == "Single join"
    assert classify_query("SELECT a FROM w JOIN x ON 1=1 JOIN y ON 1=1 JOIN z ON 1=1") == "Multi-way join"
    assert classify_query("WITH c AS (SELECT a FROM t) SELECT a FROM c") == "Common Table Expression"
    assert classify_query("SELECT a FROM t WHERE b IN (SELECT b FROM u)") == "Nested Queries"
    assert classify_query("SELECT a FROM t WHERE b > 1") == "Single WHERE clause condition"
    assert classify_query("SELECT a FROM t WHERE b > 1 AND c < 2") == "Multiple WHERE clause conditions"


def test_corpus_covers_every_category():
    suite = _suite()
    cats = {p.category for p in suite.corpus}
    assert cats == set(CATEGORY_ROWS)
    assert all(classify_query(p.sql) == p.category for p in suite.corpus)


def test_suite_differencing_scores_perfectly_under_exact_answers():
    suite = _suite()
    truth = suite_truth(suite)
    for t in suite_triples(suite):
        run = run_differencing(t, oracle_gateway(truth))
        for card in run.cards.values():
            assert card.f1_error == 0, (t.perturbation.label, card)


def test_synthesis_scores_from_replay():
    suite = _suite()
    gw = Gateway(ReplayBackend.from_file(DATA / "car_1" / "fixtures.ndjson"))
    triple = synthesis_triple(suite)
    score, rt = run_synthesis(triple, suite.schema, gw, [p.category for p in suite.corpus])
    rows = {c: (ok, n) for c, ok, n in score.table()}
    assert rows["Nested Queries"] == (0, 10)
    assert rows["Total"] == (310, 330)
