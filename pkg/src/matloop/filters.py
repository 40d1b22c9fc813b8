"""JSON filter expressions over table rows.

Wire format mirrors the query API: a comparison is ``{"ge": ["Cr", 0.1]}``,
combinators are ``{"and": [...]}', ``{"or": [...]}`` and ``{"not": {...}}``.

Null semantics: any comparison against a missing cell evaluates false, and
``not`` negates that two-valued outcome (so ``not eq`` on a null row is true).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .errors import MalformedFilterError, UnknownColumnError
from .schema import SchemaTemplate

COMPARISON_OPS = ("eq", "ne", "lt", "le", "gt", "ge", "contains")
COMBINATORS = ("and", "or", "not")

_NUMERIC_DTYPES = ("real", "integer")
_ORDERED_DTYPES = ("real", "integer", "text", "datetime")


@dataclass(frozen=True)
class Comparison:
    op: str
    column: str
    literal: Any


@dataclass(frozen=True)
class Combinator:
    op: str
    children: tuple


FilterNode = "Comparison | Combinator"


def parse_filter(doc: Any, template: SchemaTemplate):
    """Parse and validate a JSON filter document against a template.

    Raises MalformedFilterError for structural problems and
    UnknownColumnError when a comparison names a column the template lacks.
    """
    if not isinstance(doc, dict) or len(doc) != 1:
        raise MalformedFilterError(
            f"filter node must be a single-key object, got {doc!r}"
        )
    (op, payload), = doc.items()

    if op in ("and", "or"):
        if not isinstance(payload, list) or not payload:
            raise MalformedFilterError(f"{op!r} expects a non-empty list of nodes")
        return Combinator(op, tuple(parse_filter(child, template) for child in payload))
    if op == "not":
        return Combinator("not", (parse_filter(payload, template),))
    if op not in COMPARISON_OPS:
        raise MalformedFilterError(f"unknown filter operator {op!r}")

    if not isinstance(payload, list) or len(payload) != 2:
        raise MalformedFilterError(f"{op!r} expects [column, literal], got {payload!r}")
    column, literal = payload
    spec = template.field_map().get(column)
    if spec is None:
        raise UnknownColumnError(f"filter references unknown column {column!r}", column=column)

    if op == "contains":
        if spec.dtype != "text":
            raise MalformedFilterError(
                f"'contains' only applies to text columns, {column!r} is {spec.dtype}"
            )
        if not isinstance(literal, str):
            raise MalformedFilterError("'contains' literal must be a string")
    elif spec.dtype in _NUMERIC_DTYPES:
        if isinstance(literal, bool) or not isinstance(literal, (int, float)):
            raise MalformedFilterError(
                f"{column!r} is {spec.dtype}; literal {literal!r} is not numeric"
            )
    elif spec.dtype == "boolean":
        if not isinstance(literal, bool):
            raise MalformedFilterError(f"{column!r} is boolean; literal {literal!r} is not")
        if op not in ("eq", "ne"):
            raise MalformedFilterError(f"boolean columns support only eq/ne, got {op!r}")
    else:  # text, datetime, uuid, file_ref compare as strings
        if not isinstance(literal, str):
            raise MalformedFilterError(
                f"{column!r} is {spec.dtype}; literal {literal!r} is not a string"
            )
        if spec.dtype not in _ORDERED_DTYPES and op not in ("eq", "ne"):
            raise MalformedFilterError(
                f"{spec.dtype} columns support only eq/ne, got {op!r}"
            )
    return Comparison(op, column, literal)


def _compare(op: str, value: Any, literal: Any) -> bool:
    if op == "eq":
        return value == literal
    if op == "ne":
        return value != literal
    if op == "lt":
        return value < literal
    if op == "le":
        return value <= literal
    if op == "gt":
        return value > literal
    if op == "ge":
        return value >= literal
    if op == "contains":
        return literal in value
    raise MalformedFilterError(f"unknown comparison {op!r}")


def evaluate(node, row: dict) -> bool:
    """Evaluate a parsed filter tree on one row (column name -> value)."""
    if isinstance(node, Comparison):
        value = row.get(node.column)
        if value is None:
            return False
        return _compare(node.op, value, node.literal)
    if node.op == "and":
        return all(evaluate(child, row) for child in node.children)
    if node.op == "or":
        return any(evaluate(child, row) for child in node.children)
    return not evaluate(node.children[0], row)


def to_json_dict(node) -> dict:
    if isinstance(node, Comparison):
        return {node.op: [node.column, node.literal]}
    if node.op == "not":
        return {"not": to_json_dict(node.children[0])}
    return {node.op: [to_json_dict(child) for child in node.children]}
