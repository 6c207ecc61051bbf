"""Exact-answer completion rules built from benchmark ground truth.

Every text (role description, role label, view description, view SQL,
privilege phrase) is mapped to the entity it denotes; each prompt template
is then answered by looking entities up instead of judging language. Used
to record replay fixtures and to run pipelines with a perfect model.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

from .gateway import Gateway, OracleBackend, PromptRequest, _norm
from .model import PrivilegeSet
from .sqltext import SqlSyntaxError, canonical_query, view_body


def _sql_key(text: str) -> str | None:
    if text.lstrip()[:6].upper().rstrip() not in ("SELECT", "CREATE", "WITH"):
        return None
    body = view_body(text)
    if body is None:
        return None
    try:
        return "sql:" + canonical_query(body)
    except SqlSyntaxError:
        return None


@dataclass
class GroundTruth:
    """Entity knowledge behind a set of matrices.

    ``entities`` maps any text to an entity id; ``labels`` gives a role
    entity's SQL identifier; ``view_sql`` a view entity's query;
    ``privileges`` maps privilege phrases to operator sets; ``answers`` holds
    free-text responses keyed by (template id, key text).
    """

    entities: dict[str, str] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)
    view_sql: dict[str, str] = field(default_factory=dict)
    privileges: dict[str, PrivilegeSet] = field(default_factory=dict)
    answers: dict[tuple[str, str], str] = field(default_factory=dict)

    def add_entity(self, entity: str, *texts: str) -> None:
        for text in texts:
            if not text:
                continue
            key = _sql_key(text)
            if key:
                self.entities[key] = entity
            self.entities[_norm(text)] = entity

    def add_role(self, entity: str, label: str, *texts: str) -> None:
        self.labels[entity] = label
        self.add_entity(entity, label, *texts)

    def add_view(self, entity: str, sql: str, *texts: str) -> None:
        self.view_sql[entity] = sql
        self.add_entity(entity, sql, *texts)

    def add_privileges(self, text: str, privs: PrivilegeSet) -> None:
        self.privileges[_norm(text)] = privs

    def entity(self, text: str) -> str | None:
        key = _sql_key(text)
        if key and key in self.entities:
            return self.entities[key]
        return self.entities.get(_norm(text))

    def privileges_of(self, text: str) -> PrivilegeSet | None:
        from .differencer import cell_privileges
        from .model import CellText

        if _norm(text) in self.privileges:
            return self.privileges[_norm(text)]
        if not text.strip():
            return PrivilegeSet()
        return cell_privileges(CellText.of(text))

    def merge(self, other: GroundTruth) -> GroundTruth:
        out = GroundTruth(dict(self.entities), dict(self.labels), dict(self.view_sql), dict(self.privileges), dict(self.answers))
        out.entities.update(other.entities)
        out.labels.update(other.labels)
        out.view_sql.update(other.view_sql)
        out.privileges.update(other.privileges)
        out.answers.update(other.answers)
        return out


NO_MATCH = "None of the candidates describes it."


def _choose(truth: GroundTruth, phrase: str, candidates) -> str:
    target = truth.entity(phrase)
    if target is None:
        return NO_MATCH
    for c in candidates:
        if truth.entity(c) == target:
            return f"{c}\nBoth refer to the same entity."
    return NO_MATCH


def oracle_rules(truth: GroundTruth) -> dict:
    def answer(template: str, key: str):
        return truth.answers.get((template, _norm(key)))

    def role_label(req: PromptRequest):
        ent = truth.entity(str(req.slots["role"]))
        return truth.labels.get(ent) if ent else None

    def view_completion(req: PromptRequest):
        ent = truth.entity(str(req.slots["description"]))
        if ent is None or ent not in truth.view_sql:
            return None
        return f"{req.slots['view_name']} AS {truth.view_sql[ent]};"

    def privilege_map(req: PromptRequest):
        privs = truth.privileges_of(str(req.slots["nl"]))
        return privs.render() if privs else None

    def choice(req: PromptRequest):
        return _choose(truth, str(req.slots["phrase"]), req.candidates)

    def exceeds(req: PromptRequest):
        policy_text = str(req.slots["policy"])
        policy = PrivilegeSet() if policy_text == "(no privileges)" else truth.privileges_of(policy_text)
        impl = truth.privileges_of(str(req.slots["impl"]))
        if policy is None or impl is None:
            return None
        extra = impl.minus(policy)
        if extra:
            return "Yes. The implementation also allows " + ", ".join(sorted(op.value for op in extra)) + "."
        return "No. Every implemented operation is allowed by the policy."

    def subset(req: PromptRequest):
        target = truth.entity(str(req.slots["role"]))
        hits = [c for c in req.candidates if target and truth.entity(c) == target]
        return "\n".join(hits) if hits else NO_MATCH

    def audit(req: PromptRequest):
        a, b = truth.entity(str(req.slots["left"])), truth.entity(str(req.slots["right"]))
        return "Yes, they describe the same role." if a and a == b else "No, these are different roles."

    def relative_label(slot: str):
        def rule(req: PromptRequest):
            ent = truth.entity(str(req.slots[slot]))
            label = truth.labels.get(ent) if ent else None
            if label is None or label not in req.candidates:
                return NO_MATCH
            return label

        return rule

    def free(template: str, slot: str):
        return lambda req: answer(template, str(req.slots[slot]))

    def perturb(req: PromptRequest):
        return answer("perturb", f"{req.slots['mode']} {req.slots['text']}")

    return {
        "role_label": role_label,
        "view_completion": view_completion,
        "view_reask": view_completion,
        "privilege_map": privilege_map,
        "view_nl_vs_sql": choice,
        "view_nl_vs_nl": choice,
        "role_nl_vs_sql": choice,
        "role_nl_vs_nl": choice,
        "requirement_match": choice,
        "privilege_exceeds": exceeds,
        "bipartite_match": subset,
        "audit_pair": audit,
        "child_label": relative_label("child"),
        "parent_label": relative_label("parent"),
        "requirement_category": free("requirement_category", "table"),
        "dependency_instructions": free("dependency_instructions", "tables"),
        "dependency_tables": free("dependency_tables", "instructions"),
        "dependency_steps": free("dependency_steps", "instructions"),
        "generalized_synthesis": free("generalized_synthesis", "instructions"),
        "synthesis_feedback": free("synthesis_feedback", "errors"),
        "perturb": perturb,
    }


def oracle_gateway(truth: GroundTruth, overrides: Mapping[str, object] | None = None, parallelism: int = 1) -> Gateway:
    """A gateway answering from ``truth``; ``overrides`` replaces rules per template."""
    rules = oracle_rules(truth)
    rules.update(overrides or {})
    return Gateway(OracleBackend(rules), parallelism)
