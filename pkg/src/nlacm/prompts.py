"""Catalog of prompt templates.

Slots are written ``{name}``; list-valued slots are rendered as numbered
entries. Angle brackets mark where a value is spliced into a sentence.
"""

from __future__ import annotations

import re
import string
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum


class AnswerShape(str, Enum):
    FREE_TEXT = "free_text"
    CANDIDATE_CHOICE = "candidate_choice"
    CANDIDATE_SUBSET = "candidate_subset"
    YES_NO = "yes_no"
    OPERATOR_LIST = "operator_list"
    SQL_COMPLETION = "sql_completion"


class TemplateError(KeyError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    expected_answer_shape: AnswerShape
    list_slots: frozenset[str] = frozenset()

    @property
    def slots(self) -> frozenset[str]:
        return frozenset(
            name for _, name, _, _ in string.Formatter().parse(self.body) if name
        )


def _t(id: str, body: str, shape: AnswerShape, lists: Sequence[str] = ()) -> PromptTemplate:
    body = re.sub(r"[ \t]+", " ", body.strip())
    return PromptTemplate(id, body, shape, frozenset(lists))


COMPLETE_VIEW = (
    "Complete postgres SQL statement only and with no explanation, and do not grant "
    "privileges on tables, roles, and users that are not explicitly requested in the "
    "statement. CREATE VIEW"
)

TEMPLATES: dict[str, PromptTemplate] = {
    t.id: t
    for t in [
        _t(
            "role_label",
            "Consider the following role description <{role}>. What role does this describe?",
            AnswerShape.FREE_TEXT,
        ),
        _t(
            "view_completion",
            "### Database schema:\n{schema}\n### View description: {description}\n"
            "### View name: {view_name}\n### " + COMPLETE_VIEW,
            AnswerShape.SQL_COMPLETION,
        ),
        _t(
            "view_reask",
            "The following completion is not a valid postgres CREATE VIEW statement:\n"
            "{previous}\n### Database schema:\n{schema}\n### View description: {description}\n"
            "### View name: {view_name}\n### " + COMPLETE_VIEW,
            AnswerShape.SQL_COMPLETION,
        ),
        _t(
            "privilege_map",
            "Consider the following statement: <{nl}>. According to this, which of the "
            "database operations SELECT, UPDATE/INSERT, DELETE, CREATE, GRANT are "
            "permitted for role <{role}> on table/view <{view}>?",
            AnswerShape.OPERATOR_LIST,
        ),
        _t(
            "view_nl_vs_sql",
            "Which database table or view from the list <{candidates}> does this phrase "
            "<{phrase}> most likely describe? Begin your answer with this table/view.",
            AnswerShape.CANDIDATE_CHOICE,
            ["candidates"],
        ),
        _t(
            "view_nl_vs_nl",
            "Which database table or view description from the list <{candidates}> most "
            "likely describes the same table or view as this phrase <{phrase}>? Begin your "
            "answer with your chosen description from the list.",
            AnswerShape.CANDIDATE_CHOICE,
            ["candidates"],
        ),
        _t(
            "role_nl_vs_sql",
            "Which database role from the list <{candidates}> does this phrase <{phrase}> "
            "most likely describe?",
            AnswerShape.CANDIDATE_CHOICE,
            ["candidates"],
        ),
        _t(
            "role_nl_vs_nl",
            "Which database role description from the list <{candidates}> most likely "
            "describes the same role as this phrase <{phrase}>?",
            AnswerShape.CANDIDATE_CHOICE,
            ["candidates"],
        ),
        _t(
            "privilege_exceeds",
            "Consider the privileges a policy allows for role <{role}> on table/view "
            "<{view}>: <{policy}>. Consider the privileges an implementation grants for the "
            "same role and table/view: <{impl}>. Do the implementation privileges exceed the "
            "policy privileges? Begin your answer with yes or no, then explain.",
            AnswerShape.YES_NO,
        ),
        _t(
            "bipartite_match",
            "Consider the following role description <{role}>. List all roles from the list "
            "of role descriptions <{candidates}> that describe the same role as <{role}>.",
            AnswerShape.CANDIDATE_SUBSET,
            ["candidates"],
        ),
        _t(
            "audit_pair",
            "Consider the following descriptions of a database role: <{left}>, <{right}>. "
            "These roles are drawn from a database with roles <{left_roles}>, "
            "<{right_roles}>. Do these describe the same role?",
            AnswerShape.YES_NO,
            ["left_roles", "right_roles"],
        ),
        _t(
            "child_label",
            "Consider the following role <{label}> described as <{role}>. <{role}> inherits "
            "privileges from a role described by <{child}>. <{child}> describes one role in "
            "the following set: <{labels}>. What is the best label for this description?",
            AnswerShape.CANDIDATE_CHOICE,
            ["labels"],
        ),
        _t(
            "parent_label",
            "Consider the following role <{label}> described as <{role}>. A role described "
            "by <{parent}> inherits privileges from <{role}>. <{parent}> describes one role "
            "in the following set: <{labels}>. What is the best label for this description?",
            AnswerShape.CANDIDATE_CHOICE,
            ["labels"],
        ),
        _t(
            "requirement_category",
            "Consider the following table: <{table}>. Consider the given documentation "
            "describing this table: <{doc}>. What category of deployment information does "
            "this represent?",
            AnswerShape.FREE_TEXT,
        ),
        _t(
            "dependency_instructions",
            "You are a database security analyst. Your job is to make sure excessive access "
            "privileges are not granted to anyone. Consider the following tables "
            "representing deployment policies: <{labels}>, <{tables}>. Consider the "
            "following documentation for these tables: <{docs}>. Write a set of "
            "instructions for implementing these policies on a <{backend}> backend.",
            AnswerShape.FREE_TEXT,
        ),
        _t(
            "dependency_tables",
            "Instructions: <{instructions}>. For each step in the instructions, which "
            "policy tables from <{labels}> are needed?",
            AnswerShape.FREE_TEXT,
        ),
        _t(
            "dependency_steps",
            "Instructions: <{instructions}>. For each step in the instructions, list the "
            "previous steps whose outputs will be needed for this step.",
            AnswerShape.FREE_TEXT,
        ),
        _t(
            "generalized_synthesis",
            "Implement the following deployment constraints in database backend <{backend}>: "
            "Requirements: <{requirements}> Documentation Describing the Tables: <{docs}>, "
            "Instructions for implementation: <{instructions}>. Also make sure to use the "
            "following schema information, where applicable: Database Schema: <{schema}>, "
            "Schema information: <{schema_info}>. Generate the required SQL statements.",
            AnswerShape.SQL_COMPLETION,
        ),
        _t(
            "synthesis_feedback",
            "{original}\nA previous attempt produced:\n{code}\nChecking it against the "
            "database found these errors:\n{errors}\nGenerate the required SQL statements "
            "again, fixing these errors.",
            AnswerShape.SQL_COMPLETION,
        ),
        _t(
            "requirement_match",
            "Which implemented database element from the list <{candidates}> implements "
            "this deployment requirement <{phrase}>? Begin your answer with your chosen "
            "element from the list, or answer none if no element implements it.",
            AnswerShape.CANDIDATE_CHOICE,
            ["candidates"],
        ),
        _t(
            "perturb",
            "Rewrite the following {target} text using the perturbation <{mode}> so that it "
            "is worded differently but means exactly the same thing. Answer with the "
            "rewritten text only. Text: <{text}>",
            AnswerShape.FREE_TEXT,
        ),
    ]
}


def render_list(items: Sequence[str]) -> str:
    if not items:
        raise TemplateError("empty candidate list")
    return "\n" + "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1)) + "\n"


def render_prompt(template_id: str, slots: Mapping[str, object]) -> str:
    """Render a cataloged template; list slots must be non-empty sequences."""
    try:
        template = TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown template {template_id!r}") from None
    missing = template.slots - set(slots)
    if missing:
        raise TemplateError(f"{template_id}: missing slot(s) {sorted(missing)}")
    values = {}
    for name in template.slots:
        value = slots[name]
        if name in template.list_slots:
            if isinstance(value, str):
                raise TemplateError(f"{template_id}: slot {name!r} needs a list")
            values[name] = render_list([str(v) for v in value])
        else:
            values[name] = str(value)
    return template.body.format(**values)
