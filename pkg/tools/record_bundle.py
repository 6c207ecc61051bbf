"""Record the replay fixtures shipped with the demo deployment bundle.

Run from the repository root: ``python3 tools/record_bundle.py``. Responses
are scripted here; the pipeline itself renders every prompt, so the saved
digests match what a replay run will ask.
"""

from __future__ import annotations

import re
from pathlib import Path

from nlacm.catalog import SandboxDatabase
from nlacm.deploi import load_bundle, run_deploi
from nlacm.gateway import Gateway, OracleBackend
from nlacm.schema import load_schema

BUNDLE = Path(__file__).resolve().parents[1] / "src" / "nlacm" / "data" / "bundles" / "retail"

STEPS = {
    1: "CREATE ROLE ceo;\nCREATE ROLE manager;\nCREATE ROLE clerk;",
    2: "GRANT clerk TO manager;\nGRANT manager TO ceo;",
    3: (
        "GRANT SELECT ON orders TO clerk;\n"
        "GRANT SELECT ON customer TO manager;\n"
        "GRANT UPDATE ON orders TO manager;\n"
        "GRANT UPDATE ON customer TO ceo;\n"
        "GRANT INSERT, DELETE ON orders TO ceo;"
    ),
    # first attempt names a column that does not exist
    4: (
        "ALTER TABLE orders ENABLE ROW LEVEL SECURITY;\n"
        "CREATE POLICY clerk_business_hours ON orders FOR SELECT TO clerk "
        "USING (order_status = 'open' AND EXTRACT(ISODOW FROM CURRENT_DATE) < 6 "
        "AND LOCALTIME BETWEEN '09:00' AND '17:00');"
    ),
}
FIXED_4 = STEPS[4].replace("order_status", "status")

LABELS = {
    "role,parent,child": "role hierarchy",
    "role,table,operation,window": "temporal constraints",
}


def _sql(code: str) -> str:
    return f"Here are the statements:\n```sql\n{code}\n```"


def _category(req):
    head = str(req.slots["table"]).splitlines()[0]
    return LABELS.get(head, "access control privileges")


def _synthesis(req):
    step = int(re.search(r"Current step: (\d+)", str(req.slots["instructions"])).group(1))
    return _sql(STEPS[step])


def _feedback(req):
    return _sql(FIXED_4) if "order_status" in str(req.slots["errors"]) else None


def _match(req):
    return req.candidates[0] + " implements the clerk read window."


def main() -> None:
    bundle = load_bundle(BUNDLE)
    schema = load_schema(BUNDLE / "schema.json")
    backend = OracleBackend(
        {
            "requirement_category": _category,
            "generalized_synthesis": _synthesis,
            "synthesis_feedback": _feedback,
            "requirement_match": _match,
        }
    )
    gateway = Gateway(backend)
    run = run_deploi(bundle, schema, gateway, SandboxDatabase.from_schema(schema))
    assert run.compliant, run.to_dict()
    n = gateway.save_fixtures(BUNDLE / "fixtures.ndjson")
    print(f"recorded {n} responses")


if __name__ == "__main__":
    main()
