"""Embedded schema-governed tabular store.

Single-file persistence with write-ahead journaling: every mutation is
appended to the journal (a JSON-lines file) before being applied in memory,
and :meth:`DataStore.compact` folds the journal into one snapshot line.
Opening a store replays the file.

Concurrency: tables are append-only, so a reader snapshot is just a captured
row count; writers serialize per table behind a lock. Cross-table operations
take no global lock.
"""

from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Iterable

import numpy as np

from . import filters
from .errors import (
    DuplicateNameError,
    MalformedFilterError,
    RecordRejectedError,
    TableMissingError,
    UnknownColumnError,
    ValidationNotRunError,
)
from .schema import (
    DEFAULT_ONTOLOGY_TERMS,
    FieldSpec,
    SchemaTemplate,
    TravelerForm,
    Violation,
    coerce_value,
    validate_record as _validate_record,
)
from .seeding import deterministic_uuid, fresh_uuid


@dataclass(frozen=True)
class ProvenanceStamp:
    uuid: str
    source: str
    actor: str
    timestamp: str
    parent_uuids: tuple[str, ...] = ()
    transform: str = ""

    def to_json_dict(self) -> dict:
        return {
            "uuid": self.uuid,
            "source": self.source,
            "actor": self.actor,
            "timestamp": self.timestamp,
            "parent_uuids": list(self.parent_uuids),
            "transform": self.transform,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ProvenanceStamp":
        return cls(
            uuid=d["uuid"],
            source=d.get("source", ""),
            actor=d.get("actor", ""),
            timestamp=d.get("timestamp", ""),
            parent_uuids=tuple(d.get("parent_uuids", [])),
            transform=d.get("transform", ""),
        )


@dataclass(frozen=True)
class ValidatedRecord:
    """Proof token produced by validate_record; ingest on form-bound tables
    refuses anything else."""

    table: str
    form_id: str
    values: dict


@dataclass
class RowSet:
    columns: tuple[FieldSpec, ...]
    rows: list[tuple]
    provenance: list[ProvenanceStamp]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_dicts(self) -> list[dict]:
        names = self.column_names()
        return [dict(zip(names, row)) for row in self.rows]


def _now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def format_cell(value: Any) -> str:
    """CSV cell text; floats round-trip at 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class _Table:
    def __init__(self, template: SchemaTemplate):
        self.template = template
        self.columns: dict[str, list] = {f.name: [] for f in template.fields}
        self.stamps: list[ProvenanceStamp] = []
        self.form: TravelerForm | None = None
        self.lock = threading.Lock()

    @property
    def row_count(self) -> int:
        return len(self.stamps)

    def row_as_dict(self, i: int) -> dict:
        return {name: col[i] for name, col in self.columns.items()}


class DataStore:
    """Schema-templated tables with traveler-form validation and provenance.

    ``path=None`` keeps everything in memory; otherwise the journal file at
    ``path`` is replayed on open and appended on every write.
    """

    def __init__(self, path: str | None = None, *, rng: np.random.Generator | None = None,
                 vocabulary=DEFAULT_ONTOLOGY_TERMS):
        self._tables: dict[str, _Table] = {}
        self._forms: dict[str, TravelerForm] = {}
        self._uuids: set[str] = set()
        self._last_stamp_by_actor: dict[str, str] = {}
        self._path = path
        self._rng = rng
        self._vocabulary = vocabulary
        self._journal_lock = threading.Lock()
        if path is not None:
            self._replay()

    # -- journaling ---------------------------------------------------------

    def _replay(self):
        try:
            fh = open(self._path, encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                self._apply(entry, journal=False)

    def _journal(self, entry: dict):
        if self._path is None:
            return
        with self._journal_lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
                fh.flush()

    def compact(self):
        """Rewrite the journal as a single snapshot line."""
        if self._path is None:
            return
        snapshot = {
            "op": "snapshot",
            "tables": {
                name: {
                    "template": json.loads(t.template.to_json()),
                    "columns": {k: v for k, v in t.columns.items()},
                    "stamps": [s.to_json_dict() for s in t.stamps],
                    "form_id": t.form.form_id if t.form else None,
                }
                for name, t in self._tables.items()
            },
            "forms": {fid: json.loads(f.to_json()) for fid, f in self._forms.items()},
        }
        with self._journal_lock:
            with open(self._path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(snapshot, sort_keys=True, ensure_ascii=False) + "\n")
                fh.flush()

    def _apply(self, entry: dict, journal: bool = True):
        op = entry["op"]
        if op == "snapshot":
            self._tables.clear()
            self._forms.clear()
            self._uuids.clear()
            for fid, fdoc in entry.get("forms", {}).items():
                self._forms[fid] = TravelerForm.from_json(json.dumps(fdoc))
            for name, tdoc in entry["tables"].items():
                template = SchemaTemplate.from_json(json.dumps(tdoc["template"]))
                table = _Table(template)
                table.columns = {k: list(v) for k, v in tdoc["columns"].items()}
                table.stamps = [ProvenanceStamp.from_json_dict(s) for s in tdoc["stamps"]]
                if tdoc.get("form_id"):
                    table.form = self._forms.get(tdoc["form_id"])
                self._tables[name] = table
                self._uuids.update(s.uuid for s in table.stamps)
            return
        if op == "create_table":
            template = SchemaTemplate.from_json(json.dumps(entry["template"]))
            self._create_table_mem(template)
        elif op == "bind_form":
            form = TravelerForm.from_json(json.dumps(entry["form"]))
            self._bind_form_mem(form)
        elif op == "ingest":
            stamp = ProvenanceStamp.from_json_dict(entry["stamp"])
            self._ingest_mem(entry["table"], entry["values"], stamp)
        else:
            raise ValueError(f"unknown journal op {op!r}")
        if journal:
            self._journal(entry)

    # -- schema -------------------------------------------------------------

    def _create_table_mem(self, template: SchemaTemplate):
        self._tables[template.name] = _Table(template)

    def create_table(self, template: SchemaTemplate) -> str:
        """Create an empty table from a validated template; returns its id."""
        template.validate(self._vocabulary)
        if template.name in self._tables:
            raise DuplicateNameError(f"table {template.name!r} already exists",
                                     table=template.name)
        self._apply({"op": "create_table", "template": json.loads(template.to_json())})
        return template.name

    def _bind_form_mem(self, form: TravelerForm):
        self._forms[form.form_id] = form
        self._tables[form.target_table].form = form

    def bind_form(self, form: TravelerForm):
        """Attach a traveler form to its target table; later ingests must carry
        a ValidatedRecord produced by this form."""
        table = self._require_table(form.target_table)
        form.validate_against(table.template)
        self._apply({"op": "bind_form", "form": json.loads(form.to_json())})

    def get_form(self, form_id: str) -> TravelerForm | None:
        return self._forms.get(form_id)

    def _require_table(self, table_id: str) -> _Table:
        table = self._tables.get(table_id)
        if table is None:
            raise TableMissingError(f"no table named {table_id!r}", table=table_id)
        return table

    def list_tables(self) -> list[str]:
        return sorted(self._tables)

    def template(self, table_id: str) -> SchemaTemplate:
        return self._require_table(table_id).template

    # -- validation & ingest --------------------------------------------------

    def validate_record(self, form: TravelerForm, record: dict
                        ) -> tuple[ValidatedRecord | None, list[Violation]]:
        table = self._require_table(form.target_table)
        form.validate_against(table.template)
        coerced, violations = _validate_record(form, table.template, record)
        if violations:
            return None, violations
        return ValidatedRecord(form.target_table, form.form_id, coerced), []

    def _next_timestamp(self, actor: str) -> str:
        now = _now_rfc3339()
        last = self._last_stamp_by_actor.get(actor)
        if last is not None and now < last:
            now = last
        self._last_stamp_by_actor[actor] = now
        return now

    def _new_uuid(self) -> str:
        while True:
            u = deterministic_uuid(self._rng) if self._rng is not None else fresh_uuid()
            if u not in self._uuids:
                return u

    def _ingest_mem(self, table_id: str, values: dict, stamp: ProvenanceStamp):
        table = self._tables[table_id]
        with table.lock:
            for f in table.template.fields:
                table.columns[f.name].append(values.get(f.name))
            table.stamps.append(stamp)
            self._uuids.add(stamp.uuid)

    def ingest_record(self, table_id: str, record, actor: str, *,
                      source: str = "", transform: str = "",
                      parent_uuids: Iterable[str] = ()) -> ProvenanceStamp:
        """Append one validated record; returns its fresh provenance stamp.

        Tables with a bound form require the ValidatedRecord token from
        validate_record; bare dicts are type-coerced against the template and
        rejected with violations on mismatch.
        """
        table = self._require_table(table_id)
        if table.form is not None:
            if not isinstance(record, ValidatedRecord):
                raise ValidationNotRunError(
                    f"table {table_id!r} requires validation through form "
                    f"{table.form.form_id!r} before ingest"
                )
            if record.table != table_id:
                raise ValidationNotRunError(
                    f"record was validated for table {record.table!r}, not {table_id!r}"
                )
            values = record.values
        elif isinstance(record, ValidatedRecord):
            values = record.values
        else:
            values, violations = self._coerce_bare(table.template, record)
            if violations:
                raise RecordRejectedError(
                    f"record rejected with {len(violations)} violation(s)",
                    violations=violations,
                )
        stamp = ProvenanceStamp(
            uuid=self._new_uuid(),
            source=source,
            actor=actor,
            timestamp=self._next_timestamp(actor),
            parent_uuids=tuple(parent_uuids),
            transform=transform,
        )
        self._apply({
            "op": "ingest",
            "table": table_id,
            "values": values,
            "stamp": stamp.to_json_dict(),
        })
        return stamp

    @staticmethod
    def _coerce_bare(template: SchemaTemplate, record: dict
                     ) -> tuple[dict, list[Violation]]:
        violations: list[Violation] = []
        specs = template.field_map()
        for key in record:
            if key not in specs:
                violations.append(Violation(key, "unknown-field", record[key],
                                            f"field {key!r} not in template"))
        values: dict[str, Any] = {}
        for name, spec in specs.items():
            try:
                values[name] = coerce_value(spec, record.get(name))
            except (TypeError, ValueError) as exc:
                violations.append(Violation(name, "type-mismatch", record.get(name), str(exc)))
                values[name] = None
        for name, spec in specs.items():
            if not spec.nullable and values.get(name) is None:
                violations.append(Violation(name, "not-nullable", None,
                                            f"non-nullable field {name!r} is missing"))
        return values, violations

    # -- queries ------------------------------------------------------------

    def query_rows(self, table_id: str, columns: list[str] | None = None,
                   filter_doc: Any = None, num_rows: int | None = None) -> RowSet:
        """Rows in stable ingestion order, optionally filtered and truncated."""
        table = self._require_table(table_id)
        specs = table.template.field_map()
        if columns is None:
            columns = [f.name for f in table.template.fields]
        for c in columns:
            if c not in specs:
                raise UnknownColumnError(f"unknown column {c!r} in table {table_id!r}",
                                         column=c)
        if num_rows is not None and num_rows <= 0:
            raise MalformedFilterError(f"num_rows must be positive, got {num_rows}")

        tree = None
        if filter_doc is not None:
            tree = filters.parse_filter(filter_doc, table.template)

        n = table.row_count  # snapshot: appended rows beyond n are invisible
        out_rows: list[tuple] = []
        out_stamps: list[ProvenanceStamp] = []
        for i in range(n):
            if tree is not None:
                row = table.row_as_dict(i)
                if not filters.evaluate(tree, row):
                    continue
            out_rows.append(tuple(table.columns[c][i] for c in columns))
            out_stamps.append(table.stamps[i])
            if num_rows is not None and len(out_rows) >= num_rows:
                break
        return RowSet(tuple(specs[c] for c in columns), out_rows, out_stamps)

    def table_metadata(self, table_id: str) -> dict:
        table = self._require_table(table_id)
        n = table.row_count
        missing = {
            f.name: sum(1 for v in table.columns[f.name][:n] if v is None)
            for f in table.template.fields
        }
        return {
            "table": table_id,
            "archetype": table.template.archetype,
            "columns": [f.name for f in table.template.fields],
            "dtypes": {f.name: f.dtype for f in table.template.fields},
            "units": {f.name: f.unit for f in table.template.fields},
            "ontology_tags": {f.name: f.ontology_tag for f in table.template.fields},
            "row_count": n,
            "missing_counts": missing,
            "form_id": table.form.form_id if table.form else None,
        }

    def provenance(self, table_id: str) -> list[ProvenanceStamp]:
        table = self._require_table(table_id)
        return list(table.stamps)

    # -- CSV ----------------------------------------------------------------

    def export_csv(self, table_id: str, columns: list[str] | None = None) -> str:
        """RFC-4180 text with a one-line header; nulls exported as empty cells."""
        rowset = self.query_rows(table_id, columns)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(rowset.column_names())
        for row in rowset.rows:
            writer.writerow([format_cell(v) for v in row])
        return buf.getvalue()

    def import_csv(self, table_id: str, text: str, actor: str, *,
                   source: str = "csv-import") -> tuple[int, list[Violation]]:
        """Ingest rows from CSV text whose header matches the template columns.

        Returns (accepted count, violations of rejected rows). Tables with a
        bound form route every row through it.
        """
        table = self._require_table(table_id)
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFilterError("CSV is empty") from None
        expected = [f.name for f in table.template.fields]
        if header != expected:
            raise UnknownColumnError(
                f"CSV header {header!r} does not match template columns {expected!r}"
            )
        accepted = 0
        all_violations: list[Violation] = []
        for row in reader:
            if not row:
                continue
            record = {name: (cell if cell != "" else None) for name, cell in zip(header, row)}
            if table.form is not None:
                validated, violations = self.validate_record(table.form, record)
                if violations:
                    all_violations.extend(violations)
                    continue
                self.ingest_record(table_id, validated, actor, source=source)
            else:
                try:
                    self.ingest_record(table_id, record, actor, source=source)
                except RecordRejectedError as exc:
                    all_violations.extend(exc.violations)
                    continue
            accepted += 1
        return accepted, all_violations
