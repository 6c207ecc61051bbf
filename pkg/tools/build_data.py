"""Write the benchmark data files shipped under src/nlacm/data.

Run from the repository root: ``python3 tools/build_data.py``. The output
is committed; tests read the files and never call this script. Re-running
it with the same seeds rewrites byte-identical files.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "nlacm" / "data"


def _write(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# -- car database ----------------------------------------------------------------

CAR_SCHEMA = {
    "dialect": "postgres",
    "tables": [
        {
            "name": "continents",
            "columns": [{"name": "contid", "type": "INTEGER"}, {"name": "continent", "type": "TEXT"}],
            "rows": [[1, "america"], [2, "europe"], [3, "asia"]],
        },
        {
            "name": "countries",
            "columns": [
                {"name": "countryid", "type": "INTEGER"},
                {"name": "countryname", "type": "TEXT"},
                {"name": "continent", "type": "INTEGER"},
            ],
            "rows": [[1, "usa", 1], [2, "germany", 2], [3, "japan", 3], [4, "france", 2], [5, "italy", 2]],
        },
        {
            "name": "car_makers",
            "columns": [
                {"name": "id", "type": "INTEGER"},
                {"name": "maker", "type": "TEXT"},
                {"name": "fullname", "type": "TEXT"},
                {"name": "country", "type": "INTEGER"},
            ],
            "rows": [
                [1, "amc", "American Motor Company", 1],
                [2, "volkswagen", "Volkswagen", 2],
                [3, "bmw", "BMW", 2],
                [4, "gm", "General Motors", 1],
                [5, "ford", "Ford Motor Company", 1],
                [6, "toyota", "Toyota", 3],
                [7, "renault", "Renault", 4],
                [8, "fiat", "Fiat", 5],
            ],
        },
        {
            "name": "model_list",
            "columns": [
                {"name": "modelid", "type": "INTEGER"},
                {"name": "maker", "type": "INTEGER"},
                {"name": "model", "type": "TEXT"},
            ],
            "rows": [
                [1, 1, "amc"], [2, 2, "audi"], [3, 3, "bmw"], [4, 4, "buick"], [5, 4, "chevrolet"],
                [6, 5, "ford"], [7, 6, "toyota"], [8, 7, "renault"], [9, 8, "fiat"], [10, 2, "volkswagen"],
            ],
        },
        {
            "name": "car_names",
            "columns": [
                {"name": "makeid", "type": "INTEGER"},
                {"name": "model", "type": "TEXT"},
                {"name": "make", "type": "TEXT"},
            ],
            "rows": [
                [1, "chevrolet", "chevrolet chevelle malibu"],
                [2, "buick", "buick skylark 320"],
                [3, "amc", "amc rebel sst"],
                [4, "ford", "ford torino"],
                [5, "ford", "ford galaxie 500"],
                [6, "chevrolet", "chevrolet impala"],
                [7, "toyota", "toyota corona mark ii"],
                [8, "volkswagen", "volkswagen 1131 deluxe sedan"],
                [9, "audi", "audi 100 ls"],
                [10, "bmw", "bmw 2002"],
                [11, "fiat", "fiat 124b"],
                [12, "renault", "renault 12 (sw)"],
            ],
        },
        {
            "name": "cars_data",
            "columns": [
                {"name": "id", "type": "INTEGER"},
                {"name": "mpg", "type": "REAL"},
                {"name": "cylinders", "type": "INTEGER"},
                {"name": "edispl", "type": "REAL"},
                {"name": "horsepower", "type": "INTEGER"},
                {"name": "weight", "type": "INTEGER"},
                {"name": "accelerate", "type": "REAL"},
                {"name": "year", "type": "INTEGER"},
            ],
            "rows": [
                [1, 18, 8, 307, 130, 3504, 12.0, 1970],
                [2, 15, 8, 350, 165, 3693, 11.5, 1970],
                [3, 18, 8, 318, 150, 3436, 11.0, 1970],
                [4, 17, 8, 302, 140, 3449, 10.5, 1970],
                [5, 15, 8, 429, 198, 4341, 10.0, 1970],
                [6, 14, 8, 454, 220, 4354, 9.0, 1970],
                [7, 24, 4, 113, 95, 2372, 15.0, 1970],
                [8, 26, 4, 97, 46, 1835, 20.5, 1970],
                [9, 24, 4, 107, 90, 2430, 14.5, 1970],
                [10, 26, 4, 121, 113, 2234, 12.5, 1976],
                [11, 30, 4, 79, 67, 1950, 19.0, 1978],
                [12, 26, 4, 96, 69, 2189, 18.0, 1977],
            ],
        },
    ],
    "data_dictionary": {
        "car_makers.country": "countries.countryid of the maker's home country",
        "model_list.maker": "car_makers.id of the maker",
        "car_names.makeid": "cars_data.id of the car",
        "countries.continent": "continents.contid",
    },
}

# (category, NL description, ground-truth SQL)
CAR_CORPUS = [
    ("Single column Projection", "the names of all car makers", "SELECT maker FROM car_makers"),
    ("Single column Projection", "every country name", "SELECT countryname FROM countries"),
    ("Single column Projection", "the names of the continents", "SELECT continent FROM continents"),
    ("Single column Projection", "every car model name", "SELECT model FROM model_list"),
    ("Single column Projection", "the production year of every car", "SELECT year FROM cars_data"),
    ("Multiple column Projection", "car makers with their full names", "SELECT maker, fullname FROM car_makers"),
    ("Multiple column Projection", "country names and their continent ids", "SELECT countryname, continent FROM countries"),
    ("Multiple column Projection", "fuel economy, horsepower and weight of every car", "SELECT mpg, horsepower, weight FROM cars_data"),
    ("Multiple column Projection", "car ids with the make of each car", "SELECT makeid, make FROM car_names"),
    ("Multiple column Projection", "model ids and model names", "SELECT modelid, model FROM model_list"),
    (
        "Single Whole-table Aggregation",
        "the number of cars for each cylinder count",
        "SELECT cylinders, COUNT(*) AS cars FROM cars_data GROUP BY cylinders",
    ),
    (
        "Single Whole-table Aggregation",
        "average car weight per production year",
        "SELECT year, AVG(weight) AS avg_weight FROM cars_data GROUP BY year",
    ),
    (
        "Single Whole-table Aggregation",
        "how many countries each continent id has",
        "SELECT continent, COUNT(*) AS countries FROM countries GROUP BY continent",
    ),
    (
        "Single join",
        "full maker names with the name of the maker's country",
        "SELECT car_makers.fullname, countries.countryname FROM car_makers JOIN countries ON car_makers.country = countries.countryid",
    ),
    (
        "Single join",
        "each model name with the full name of its maker",
        "SELECT model_list.model, car_makers.fullname FROM model_list JOIN car_makers ON model_list.maker = car_makers.id",
    ),
    (
        "Single join",
        "the make of each car with its fuel economy",
        "SELECT car_names.make, cars_data.mpg FROM car_names JOIN cars_data ON car_names.makeid = cars_data.id",
    ),
    (
        "Single join",
        "country names with the name of their continent",
        "SELECT countries.countryname, continents.continent FROM countries JOIN continents ON countries.continent = continents.contid",
    ),
    (
        "Single join",
        "the make, horsepower and maker id of every car",
        "SELECT car_names.make, cars_data.horsepower, model_list.maker FROM car_names "
        "JOIN cars_data ON car_names.makeid = cars_data.id JOIN model_list ON car_names.model = model_list.model",
    ),
    (
        "Multi-way join",
        "the make of each car with its maker's full name, country and continent",
        "SELECT car_names.make, car_makers.fullname, countries.countryname, continents.continent FROM car_names "
        "JOIN model_list ON car_names.model = model_list.model JOIN car_makers ON model_list.maker = car_makers.id "
        "JOIN countries ON car_makers.country = countries.countryid JOIN continents ON countries.continent = continents.contid",
    ),
    (
        "Multi-way join",
        "production year, make and maker name of every car",
        "SELECT cars_data.year, car_names.make, car_makers.maker FROM cars_data "
        "JOIN car_names ON cars_data.id = car_names.makeid JOIN model_list ON car_names.model = model_list.model "
        "JOIN car_makers ON model_list.maker = car_makers.id",
    ),
    (
        "Common Table Expression",
        "ids and weights of cars heavier than 3000",
        "WITH heavy AS (SELECT id, weight FROM cars_data WHERE weight > 3000) SELECT id, weight FROM heavy",
    ),
    (
        "Common Table Expression",
        "maker ids that have more than one model, with their model counts",
        "SELECT maker, COUNT(*) AS models FROM model_list GROUP BY maker HAVING COUNT(*) > 1",
    ),
    (
        "Common Table Expression",
        "cylinder counts whose cars average more than 100 horsepower",
        "SELECT cylinders, AVG(horsepower) AS hp FROM cars_data GROUP BY cylinders HAVING AVG(horsepower) > 100",
    ),
    (
        "Common Table Expression",
        "the number of cars produced in each year",
        "WITH per_year AS (SELECT year, COUNT(*) AS n FROM cars_data GROUP BY year) SELECT year, n FROM per_year",
    ),
    (
        "Nested Queries",
        "makes of cars with more than the average horsepower",
        "SELECT make FROM car_names WHERE makeid IN "
        "(SELECT id FROM cars_data WHERE horsepower > (SELECT AVG(horsepower) FROM cars_data))",
    ),
    ("Single WHERE clause condition", "models made by maker 4", "SELECT model FROM model_list WHERE maker = 4"),
    ("Single WHERE clause condition", "ids and fuel economy of eight cylinder cars", "SELECT id, mpg FROM cars_data WHERE cylinders = 8"),
    ("Single WHERE clause condition", "countries on continent 2", "SELECT countryname FROM countries WHERE continent = 2"),
    ("Single WHERE clause condition", "the full name of the maker ford", "SELECT fullname FROM car_makers WHERE maker = 'ford'"),
    ("Single WHERE clause condition", "ids of cars built after 1975", "SELECT id FROM cars_data WHERE year > 1975"),
    (
        "Multiple WHERE clause conditions",
        "ids of four cylinder cars doing better than 25 mpg",
        "SELECT id FROM cars_data WHERE cylinders = 4 AND mpg > 25",
    ),
    (
        "Multiple WHERE clause conditions",
        "makes of ford or chevrolet cars",
        "SELECT make FROM car_names WHERE model = 'ford' OR model = 'chevrolet'",
    ),
    (
        "Multiple WHERE clause conditions",
        "ids and weights of heavy powerful cars built before 1975",
        "SELECT id, weight FROM cars_data WHERE weight > 3000 AND year < 1975 AND horsepower > 100",
    ),
]

# completions the recorded model got wrong, keyed by corpus index
WRONG_COMPLETIONS = {
    19: (
        "SELECT cars_data.year, car_names.make, car_makers.maker FROM cars_data "
        "JOIN car_names ON cars_data.id = car_names.makeid JOIN model_list ON car_names.model = model_list.model "
        "JOIN car_makers ON model_list.maker = car_makers.maker"
    ),
    24: "SELECT make FROM car_names WHERE makeid IN (SELECT id FROM cars_data WHERE horsepower > 100)",
}

ROLES = [
    ("Nonprofit Organization intern", "Charitable Organization Administration Intern",
     "A person who works in a charitable organization to gain experience in overseeing operations and programs."),
    ("Fleet manager", "Vehicle Fleet Supervisor",
     "Someone who oversees the company's vehicles, their upkeep and their assignment to staff."),
    ("Sales associate", "Retail Sales Representative",
     "An employee who helps customers choose cars and closes purchases on the showroom floor."),
    ("Data analyst", "Information Analysis Specialist",
     "A staff member who studies figures from the database to find trends and write reports."),
    ("Service technician", "Automotive Repair Mechanic",
     "A worker who inspects, maintains and repairs vehicles in the service bay."),
    ("Regional director", "Area Operations Head",
     "The executive accountable for every dealership and office in one geographic region."),
    ("Procurement officer", "Purchasing Agent",
     "The person who negotiates with manufacturers and orders new stock."),
    ("Compliance auditor", "Regulatory Review Inspector",
     "An independent reviewer who checks records against legal and internal rules."),
    ("Marketing coordinator", "Promotions Organizer",
     "An employee who plans advertising campaigns and product launch events."),
    ("Database administrator", "Data Platform Custodian",
     "The technical owner who maintains the database, its backups and its users."),
]

# corpus entries used for the 10 x 10 differencing matrices
DIFF_VIEWS = [0, 5, 10, 13, 18, 20, 25, 28, 30, 31]

# Dr.-Spider-style rewrites of those view descriptions, in DIFF_VIEWS order
VIEW_REWRITES = {
    "column_synonym": [
        "the titles of all automobile manufacturers",
        "automobile manufacturers with their complete names",
        "the count of automobiles for each number of cylinders",
        "complete manufacturer names with the name of the manufacturer's nation",
        "the brand of each automobile with its manufacturer's complete name, nation and continent",
        "ids and masses of automobiles heavier than 3000",
        "models produced by manufacturer 4",
        "the complete name of the manufacturer ford",
        "ids of four cylinder automobiles doing better than 25 miles per gallon",
        "brands of ford or chevrolet automobiles",
    ],
    "keyword_carrier": [
        "could you list the names of all car makers",
        "show me car makers along with their full names",
        "please tell me the number of cars for each cylinder count",
        "I want full maker names with the name of the maker's country",
        "list the make of each car together with its maker's full name, country and continent",
        "could you give the ids and weights of cars heavier than 3000",
        "which models are made by maker 4",
        "tell me the full name of the maker ford",
        "please find ids of four cylinder cars doing better than 25 mpg",
        "show the makes of ford or chevrolet cars",
    ],
}


def car_files() -> None:
    root = DATA / "car_1"
    _write(root / "schema.json", CAR_SCHEMA)
    _write(root / "corpus.json", [{"nl": nl, "sql": sql, "category": cat} for cat, nl, sql in CAR_CORPUS])
    _write(root / "wrong_completions.json", {str(k): v for k, v in WRONG_COMPLETIONS.items()})
    _write(root / "roles.json", [r[0] for r in ROLES])
    _write(root / "diff_views.json", DIFF_VIEWS)
    pert = DATA / "perturbations"
    _write(pert / "base.json", {"target": "roles", "mode": "identity"})
    _write(pert / "role_synonyms.json", {"target": "roles", "mode": "role_synonyms", "fixture": {r[0]: r[1] for r in ROLES}})
    _write(
        pert / "role_descriptions.json",
        {"target": "roles", "mode": "role_descriptions", "fixture": {r[0]: r[2] for r in ROLES}},
    )
    _write(pert / "privilege_synonyms.json", {"target": "privileges", "mode": "privilege_synonyms"})
    _write(pert / "privilege_carrier.json", {"target": "privileges", "mode": "privilege_carrier"})
    for mode, texts in VIEW_REWRITES.items():
        fixture = {CAR_CORPUS[j][1]: t for j, t in zip(DIFF_VIEWS, texts)}
        _write(pert / f"{mode}.json", {"target": "views", "mode": mode, "fixture": fixture})


# -- trees -------------------------------------------------------------------------

TITLES = [
    "Chief Executive Officer", "VP of Engineering", "Director of Platform", "Head of Infrastructure",
    "Infrastructure Team Lead", "Site Reliability Engineer", "Network Engineer", "Storage Engineer",
    "Build Engineer", "Release Engineer", "Security Engineer", "Database Engineer", "QA Engineer",
    "Support Engineer", "Technical Writer", "Frontend Engineer", "Backend Engineer", "Data Engineer",
    "Mobile Engineer", "Machine Learning Engineer",
]


def _tree_doc(name: str, children: dict[str, list[str]]) -> dict:
    parent = {c: p for p, cs in children.items() for c in cs}
    rows = []
    for role in children:
        kids = children[role]
        if not kids:
            rows.append({"role": role, "parent": parent.get(role), "child": None})
        for c in kids:
            rows.append({"role": role, "parent": parent.get(role), "child": c})
    labels = {r: "_".join(r.lower().replace("of ", "").split()) for r in children}
    return {"name": name, "rows": rows, "labels": labels}


def tree_files() -> None:
    # deep: a six-node spine with two extra leaves under each spine node except the last
    spine = ["Chief Executive Officer", "VP of Engineering", "Director of Platform",
             "Head of Infrastructure", "Infrastructure Team Lead", "Site Reliability Engineer"]
    leaves = iter(TITLES[6:])
    deep: dict[str, list[str]] = {}
    for i, node in enumerate(spine):
        kids = [spine[i + 1]] if i + 1 < len(spine) else []
        if i + 1 < len(spine):
            kids += [next(leaves), next(leaves)]
        deep[node] = kids
        for k in kids:
            deep.setdefault(k, [])
    _write(DATA / "trees" / "deep.json", _tree_doc("deep", deep))

    wide = {"Chief Executive Officer": TITLES[1:19]}
    for t in TITLES[1:19]:
        wide[t] = []
    _write(DATA / "trees" / "wide.json", _tree_doc("wide", wide))

    t = TITLES
    balanced = {
        t[0]: [t[1], t[2], t[3]],
        t[1]: [t[4], t[5]],
        t[2]: [t[6], t[7]],
        t[3]: [t[8], t[9]],
        t[9]: [t[10], t[11]],
    }
    for k in list(balanced.values()):
        for c in k:
            balanced.setdefault(c, [])
    _write(DATA / "trees" / "balanced.json", _tree_doc("balanced", balanced))


# -- recorded confusion counts --------------------------------------------------------

# total 1 - F1 per (comparison, metric) and method, from the published table
TOTAL_ERRORS = {
    ("NL vs NL", "RV"): {"Plain LLM": 0.149, "Sentence": 0.084, "Word": 0.220, "Jaccard": 0.204, "LLM4AC": 0.041},
    ("NL vs NL", "Priv"): {"Plain LLM": 0.119, "Sentence": 0.116, "Word": 0.122, "Jaccard": 0.116, "LLM4AC": 0.003},
    ("NL vs SQL", "RV"): {"Plain LLM": 0.553, "Sentence": 0.765, "Word": 0.632, "Jaccard": 0.837, "LLM4AC": 0.035},
    ("NL vs SQL", "Priv"): {"Plain LLM": 0.021, "Sentence": 0.007, "Word": 0.014, "Jaccard": 0.014, "LLM4AC": 0.006},
}
DATABASES = ["orchestra", "dog_kennels", "employee_hire_evaluation", "student_transcript_tracking", "car_1"]
PERTURBATIONS = ["role_synonyms", "role_descriptions", "privilege_synonyms", "privilege_carrier", "column_synonym"]


def _split(total: int, parts: int, rng: random.Random) -> list[int]:
    """Near-even split of ``total`` with the remainder on randomly chosen parts."""
    out = [total // parts] * parts
    for k in rng.sample(range(parts), total % parts):
        out[k] += 1
    return out


def confusion_file() -> None:
    """Per-stratum counts whose totals give each published error exactly.

    With fp = fn, F1 = tp / (tp + fp); a total of 1000 positives per cell
    makes 1 - F1 = fp / 1000.
    """
    rng = random.Random(2024)
    records = []
    strata = [(d, p) for d in DATABASES for p in PERTURBATIONS]
    for (comparison, metric), methods in TOTAL_ERRORS.items():
        for method, err in methods.items():
            wrong = round(err * 1000)
            fps = _split(wrong, len(strata), rng)
            fns = _split(wrong, len(strata), rng)
            for (db, pert), fp, fn in zip(strata, fps, fns):
                tp = 40 - fn
                records.append(
                    {"method": method, "comparison": comparison, "metric": metric, "database": db,
                     "perturbation": pert, "tp": tp, "fp": fp, "fn": fn}
                )
    _write(DATA / "recorded_confusion.json", {"note": "reconstructed counts; totals match the published errors", "records": records})


# -- literal repair corpus -----------------------------------------------------------

REPAIR_VALUES = {
    ("broadcasts", "status"): ["Live_Final", "Tape_Delayed", "Highlights_Only", "Pre_Game_Show", "Post_Game_Analysis"],
    ("broadcasts", "venue"): ["Madison Square Garden", "Wembley Stadium", "Camp Nou", "Maracana Stadium", "Rose Bowl"],
    ("tracks", "genre"): ["Hip_Hop", "Rhythm_And_Blues", "Drum_And_Bass", "Heavy_Metal", "Bossa_Nova", "Trip_Hop", "Acid_Jazz", "Deep_House"],
}


def _corrupt(value: str, kind: str) -> str:
    if kind == "separator":
        return value.replace("_", " ") if "_" in value else value.replace(" ", "_")
    if kind == "case":
        return value.lower() if value != value.lower() else value.upper()
    # truncation keeps the leading two thirds
    return value[: max(3, (2 * len(value)) // 3)].rstrip(" _")


def repair_file() -> None:
    schema = {
        "dialect": "postgres",
        "tables": [
            {
                "name": "broadcasts",
                "columns": [{"name": "id", "type": "INTEGER"}, {"name": "status", "type": "TEXT"}, {"name": "venue", "type": "TEXT"}],
                "rows": [
                    [i + 1, s, v]
                    for i, (s, v) in enumerate(zip(REPAIR_VALUES[("broadcasts", "status")], REPAIR_VALUES[("broadcasts", "venue")]))
                ],
            },
            {
                "name": "tracks",
                "columns": [{"name": "id", "type": "INTEGER"}, {"name": "genre", "type": "TEXT"}],
                "rows": [[i + 1, g] for i, g in enumerate(REPAIR_VALUES[("tracks", "genre")])],
            },
        ],
    }
    cases = []
    kinds = ["separator", "case", "truncation"]
    for (table, column), values in REPAIR_VALUES.items():
        for v in values:
            for k in kinds:
                bad = _corrupt(v, k)
                if bad == v:
                    continue
                cases.append(
                    {
                        "corruption": k,
                        "sql": f"CREATE VIEW v AS SELECT id FROM {table} WHERE {column} = '{bad}'",
                        "table": table,
                        "column": column,
                        "corrupted": bad,
                        "expected": v,
                    }
                )
    _write(DATA / "repair" / "schema.json", schema)
    _write(DATA / "repair" / "corpus.json", cases[:50])


def main() -> None:
    car_files()
    tree_files()
    confusion_file()
    repair_file()


if __name__ == "__main__":
    main()
