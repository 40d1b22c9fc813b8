"""Schema templates and traveler forms.

A :class:`SchemaTemplate` is a typed, unit-annotated, ontology-tagged table
definition. A :class:`TravelerForm` binds validation rules and conditional
field visibility to one target table so that records are checked before they
ever reach storage.

Both serialize to JSON documents with stable key order.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

from .errors import InvalidTemplateError, UnknownFieldError

DTYPE_NAMES = ("real", "integer", "text", "boolean", "datetime", "uuid", "file_ref")
ARCHETYPES = ("research", "industry_qms", "agentic")

# Flat controlled vocabulary; extend via load_vocabulary().
DEFAULT_ONTOLOGY_TERMS = frozenset({
    "ThermodynamicProperty",
    "CrystalStructureProperty",
    "MechanicalProperty",
    "ElectrochemicalProperty",
    "TransportProperty",
    "Composition",
    "ProcessingCondition",
    "MeasurementParameter",
    "InstrumentMetadata",
    "UncertaintyEstimate",
})

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def load_vocabulary(path) -> frozenset[str]:
    """Read one controlled term per line; blank and # lines ignored."""
    terms = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            term = line.strip()
            if term and not term.startswith("#"):
                terms.add(term)
    return frozenset(terms)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    dtype: str
    unit: str | None = None
    nullable: bool = True
    ontology_tag: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "dtype": self.dtype,
            "unit": self.unit,
            "nullable": self.nullable,
            "ontology_tag": self.ontology_tag,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FieldSpec":
        return cls(
            name=d["name"],
            dtype=d["dtype"],
            unit=d.get("unit"),
            nullable=bool(d.get("nullable", True)),
            ontology_tag=d.get("ontology_tag"),
        )


@dataclass(frozen=True)
class SchemaTemplate:
    name: str
    archetype: str
    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))

    def validate(self, vocabulary: frozenset[str] = DEFAULT_ONTOLOGY_TERMS):
        """Raise InvalidTemplateError naming the first violated invariant."""
        if not _IDENT_RE.match(self.name or ""):
            raise InvalidTemplateError(f"template name {self.name!r} is not an identifier")
        if self.archetype not in ARCHETYPES:
            raise InvalidTemplateError(
                f"archetype {self.archetype!r} not in {ARCHETYPES}", archetype=self.archetype
            )
        if len(self.fields) == 0:
            raise InvalidTemplateError("template must declare at least one field")
        seen = set()
        for f in self.fields:
            if not _IDENT_RE.match(f.name or ""):
                raise InvalidTemplateError(f"field name {f.name!r} is not an identifier")
            if f.name in seen:
                raise InvalidTemplateError(f"duplicate field name {f.name!r}")
            seen.add(f.name)
            if f.dtype not in DTYPE_NAMES:
                raise InvalidTemplateError(f"field {f.name!r} has unknown dtype {f.dtype!r}")
            if f.unit is not None and f.dtype not in ("real", "integer"):
                raise InvalidTemplateError(
                    f"field {f.name!r}: unit only allowed on real/integer fields"
                )
            if f.ontology_tag is not None and f.ontology_tag not in vocabulary:
                raise InvalidTemplateError(
                    f"field {f.name!r}: ontology tag {f.ontology_tag!r} not in vocabulary"
                )

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "archetype": self.archetype,
            "fields": [f.to_json_dict() for f in self.fields],
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "SchemaTemplate":
        d = json.loads(text)
        return cls(
            name=d["name"],
            archetype=d["archetype"],
            fields=tuple(FieldSpec.from_json_dict(f) for f in d["fields"]),
        )


# ---------------------------------------------------------------------------
# Value coercion
# ---------------------------------------------------------------------------

_UUID_RE = re.compile(
    r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$"
)


def coerce_value(spec: FieldSpec, value: Any):
    """Coerce ``value`` to the field's dtype or raise TypeError.

    NaN reals are recorded as nulls (missing), never as sentinel numbers.
    Returns None for accepted missing values.
    """
    if value is None:
        return None
    if spec.dtype == "real":
        if isinstance(value, bool):
            raise TypeError(f"{spec.name}: boolean is not a real number")
        if isinstance(value, (int, float)):
            out = float(value)
        elif isinstance(value, str):
            if value.strip() == "":
                return None
            out = float(value)
        else:
            raise TypeError(f"{spec.name}: cannot interpret {type(value).__name__} as real")
        return None if math.isnan(out) else out
    if spec.dtype == "integer":
        if isinstance(value, bool):
            raise TypeError(f"{spec.name}: boolean is not an integer")
        if isinstance(value, int):
            return int(value)
        if isinstance(value, float):
            if math.isnan(value):
                return None
            if value != int(value):
                raise TypeError(f"{spec.name}: {value!r} is not integral")
            return int(value)
        if isinstance(value, str):
            if value.strip() == "":
                return None
            return int(value.strip())
        raise TypeError(f"{spec.name}: cannot interpret {type(value).__name__} as integer")
    if spec.dtype == "text":
        if isinstance(value, str):
            return value
        raise TypeError(f"{spec.name}: expected text, got {type(value).__name__}")
    if spec.dtype == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            if low == "":
                return None
            raise TypeError(f"{spec.name}: {value!r} is not a boolean")
        raise TypeError(f"{spec.name}: expected boolean, got {type(value).__name__}")
    if spec.dtype == "datetime":
        if isinstance(value, datetime):
            return value.isoformat()
        if isinstance(value, str):
            if value.strip() == "":
                return None
            datetime.fromisoformat(value.replace("Z", "+00:00"))
            return value
        raise TypeError(f"{spec.name}: expected ISO datetime, got {type(value).__name__}")
    if spec.dtype == "uuid":
        if isinstance(value, str) and _UUID_RE.match(value.strip()):
            return value.strip().lower()
        raise TypeError(f"{spec.name}: {value!r} is not a UUID")
    if spec.dtype == "file_ref":
        if isinstance(value, str):
            return value
        raise TypeError(f"{spec.name}: expected file reference string")
    raise TypeError(f"{spec.name}: unknown dtype {spec.dtype!r}")


# ---------------------------------------------------------------------------
# Traveler forms
# ---------------------------------------------------------------------------

COMPARE_OPS = ("eq", "ne", "lt", "le", "gt", "ge")

_OP_FUNCS = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Condition:
    """Single comparison against an earlier field; missing values compare false."""

    field: str
    op: str
    value: Any

    def holds(self, record: dict) -> bool:
        observed = record.get(self.field)
        if observed is None:
            return False
        try:
            return bool(_OP_FUNCS[self.op](observed, self.value))
        except TypeError:
            return False

    def to_json_dict(self) -> dict:
        return {"field": self.field, "op": self.op, "value": self.value}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Condition":
        return cls(field=d["field"], op=d["op"], value=d["value"])


@dataclass(frozen=True)
class Rule:
    """Validation rule over a submitted record.

    kinds:
      range       - field value within [minimum, maximum]
      regex       - text field matches pattern
      required_if - field required when all conditions hold
      sum_to      - listed real fields sum to target within tolerance
    """

    kind: str
    field: str | None = None
    minimum: float | None = None
    maximum: float | None = None
    pattern: str | None = None
    conditions: tuple[Condition, ...] = ()
    fields: tuple[str, ...] = ()
    target: float = 1.0
    tolerance: float = 1e-9

    def referenced_fields(self) -> set[str]:
        refs = set(self.fields)
        if self.field:
            refs.add(self.field)
        refs.update(c.field for c in self.conditions)
        return refs

    def check(self, record: dict) -> str | None:
        """Return a violation message or None."""
        if self.kind == "range":
            v = record.get(self.field)
            if v is None:
                return None
            if self.minimum is not None and v < self.minimum:
                return f"{self.field}={v!r} below minimum {self.minimum}"
            if self.maximum is not None and v > self.maximum:
                return f"{self.field}={v!r} above maximum {self.maximum}"
            return None
        if self.kind == "regex":
            v = record.get(self.field)
            if v is None:
                return None
            if not isinstance(v, str) or not re.fullmatch(self.pattern, v):
                return f"{self.field}={v!r} does not match /{self.pattern}/"
            return None
        if self.kind == "required_if":
            if all(c.holds(record) for c in self.conditions):
                if record.get(self.field) is None:
                    return f"{self.field} required by rule but missing"
            return None
        if self.kind == "sum_to":
            total = 0.0
            for name in self.fields:
                v = record.get(name)
                if v is None:
                    return f"sum rule over {list(self.fields)}: {name} is missing"
                total += float(v)
            if abs(total - self.target) > self.tolerance:
                return (
                    f"sum of {list(self.fields)} is {total!r}, "
                    f"expected {self.target} ± {self.tolerance}"
                )
            return None
        return f"unknown rule kind {self.kind!r}"

    def to_json_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.field is not None:
            d["field"] = self.field
        if self.minimum is not None:
            d["minimum"] = self.minimum
        if self.maximum is not None:
            d["maximum"] = self.maximum
        if self.pattern is not None:
            d["pattern"] = self.pattern
        if self.conditions:
            d["conditions"] = [c.to_json_dict() for c in self.conditions]
        if self.fields:
            d["fields"] = list(self.fields)
            d["target"] = self.target
            d["tolerance"] = self.tolerance
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Rule":
        return cls(
            kind=d["kind"],
            field=d.get("field"),
            minimum=d.get("minimum"),
            maximum=d.get("maximum"),
            pattern=d.get("pattern"),
            conditions=tuple(Condition.from_json_dict(c) for c in d.get("conditions", [])),
            fields=tuple(d.get("fields", [])),
            target=d.get("target", 1.0),
            tolerance=d.get("tolerance", 1e-9),
        )


@dataclass(frozen=True)
class Branch:
    """Conditional visibility: ``field`` is shown only when all conditions hold.

    Conditions may reference only fields that precede ``field`` in template
    order, which keeps the visibility graph acyclic.
    """

    field: str
    conditions: tuple[Condition, ...]

    def visible(self, record: dict) -> bool:
        return all(c.holds(record) for c in self.conditions)

    def to_json_dict(self) -> dict:
        return {"field": self.field, "conditions": [c.to_json_dict() for c in self.conditions]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Branch":
        return cls(
            field=d["field"],
            conditions=tuple(Condition.from_json_dict(c) for c in d.get("conditions", [])),
        )


@dataclass(frozen=True)
class Violation:
    field: str | None
    rule: str
    observed: Any
    message: str

    def to_json_dict(self) -> dict:
        return {
            "field": self.field,
            "rule": self.rule,
            "observed": self.observed,
            "message": self.message,
        }


@dataclass(frozen=True)
class TravelerForm:
    form_id: str
    target_table: str
    rules: tuple[Rule, ...] = ()
    branches: tuple[Branch, ...] = ()
    attachment_slots: tuple[str, ...] = ()

    def validate_against(self, template: SchemaTemplate):
        """Check that every rule and branch references existing fields and that
        branch predicates only look backwards in field order."""
        names = [f.name for f in template.fields]
        order = {n: i for i, n in enumerate(names)}
        for rule in self.rules:
            for ref in rule.referenced_fields():
                if ref not in order:
                    raise UnknownFieldError(
                        f"form {self.form_id!r}: rule references unknown field {ref!r}"
                    )
        for br in self.branches:
            if br.field not in order:
                raise UnknownFieldError(
                    f"form {self.form_id!r}: branch on unknown field {br.field!r}"
                )
            for cond in br.conditions:
                if cond.field not in order:
                    raise UnknownFieldError(
                        f"form {self.form_id!r}: branch condition on unknown field {cond.field!r}"
                    )
                if order[cond.field] >= order[br.field]:
                    raise InvalidTemplateError(
                        f"form {self.form_id!r}: branch on {br.field!r} must reference "
                        f"earlier fields only (got {cond.field!r})"
                    )

    def hidden_fields(self, record: dict) -> set[str]:
        return {br.field for br in self.branches if not br.visible(record)}

    def to_json(self) -> str:
        doc = {
            "form_id": self.form_id,
            "target_table": self.target_table,
            "rules": [r.to_json_dict() for r in self.rules],
            "branches": [b.to_json_dict() for b in self.branches],
            "attachment_slots": list(self.attachment_slots),
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "TravelerForm":
        d = json.loads(text)
        return cls(
            form_id=d["form_id"],
            target_table=d["target_table"],
            rules=tuple(Rule.from_json_dict(r) for r in d.get("rules", [])),
            branches=tuple(Branch.from_json_dict(b) for b in d.get("branches", [])),
            attachment_slots=tuple(d.get("attachment_slots", [])),
        )


def validate_record(form: TravelerForm, template: SchemaTemplate,
                    record: dict) -> tuple[dict | None, list[Violation]]:
    """Validate a submitted record against a traveler form and its template.

    Returns ``(validated, violations)``. On success ``validated`` holds the
    coerced record (every template field present, missing ones as None) and
    ``violations`` is empty; on failure ``validated`` is None and each
    violation names the field, the rule kind, and the observed value.
    """
    violations: list[Violation] = []
    specs = template.field_map()

    for key in record:
        if key not in specs:
            violations.append(Violation(key, "unknown-field", record[key],
                                        f"field {key!r} not in template {template.name!r}"))

    coerced: dict[str, Any] = {}
    for name, spec in specs.items():
        raw = record.get(name)
        try:
            coerced[name] = coerce_value(spec, raw)
        except (TypeError, ValueError) as exc:
            violations.append(Violation(name, "type-mismatch", raw, str(exc)))
            coerced[name] = None

    hidden = form.hidden_fields(coerced)
    for name, spec in specs.items():
        if not spec.nullable and coerced.get(name) is None and name not in hidden:
            violations.append(Violation(name, "not-nullable", None,
                                        f"non-nullable field {name!r} is missing"))

    for rule in form.rules:
        if rule.field in hidden:
            continue
        message = rule.check(coerced)
        if message is not None:
            observed = coerced.get(rule.field) if rule.field else None
            violations.append(Violation(rule.field, rule.kind, observed, message))

    if violations:
        return None, violations
    return coerced, []
