"""REST surface over the datastore, benchmark registry and campaign engine.

Request lifecycle: bearer-token auth is decided before the body is read
(401), payload validation before any state mutation (400), and unhandled
internal failures map to 500 with an opaque incident id. Handlers never leak
stack traces. Responses are canonical JSON (sorted keys), with CSV available
through ``Accept: text/csv`` on row-query and export routes.

Environment: MATLOOP_BIND (host:port), MATLOOP_TOKENS (token file path),
MATLOOP_DATA (data directory).
"""

from __future__ import annotations

import base64
import json
import os
import threading
import uuid as uuid_lib
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import Response

from .benchmarks import list_benchmarks
from .campaign import Campaign, CampaignConfig
from .errors import (
    AlreadyMeasuredError,
    ArityMismatchError,
    CampaignStateError,
    ConfigError,
    DuplicateNameError,
    EmptyLogError,
    MalformedFilterError,
    MatloopError,
    RecordRejectedError,
    TableMissingError,
    UnknownBenchmarkError,
    UnknownColumnError,
    UnknownProposalError,
    ValidationNotRunError,
)
from .schema import SchemaTemplate, TravelerForm
from .store import DataStore

ROLES = ("viewer", "editor", "admin")
_ROLE_RANK = {r: i for i, r in enumerate(ROLES)}

_NOT_FOUND_ERRORS = (TableMissingError, UnknownBenchmarkError, UnknownProposalError)
_BAD_REQUEST_ERRORS = (
    DuplicateNameError, MalformedFilterError, UnknownColumnError, ConfigError,
    RecordRejectedError, ValidationNotRunError, ArityMismatchError,
    AlreadyMeasuredError, CampaignStateError, EmptyLogError,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, path: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.path = path


@dataclass(frozen=True)
class ApiToken:
    token: str
    role: str
    org: str


def load_tokens(path: str) -> dict[str, ApiToken]:
    """Token file: one ``token,role,org`` line per credential."""
    tokens: dict[str, ApiToken] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3 or parts[1] not in ROLES:
                raise ValueError(f"bad token line: {line!r}")
            tokens[parts[0]] = ApiToken(*parts)
    return tokens


def _canonical(payload, status: int = 200) -> Response:
    return Response(content=json.dumps(payload, sort_keys=True, ensure_ascii=False),
                    status_code=status, media_type="application/json")


def _error_response(status: int, code: str, message: str, path: str | None = None,
                    incident: str | None = None) -> Response:
    doc: dict = {"error": {"code": code, "message": message}}
    if path is not None:
        doc["error"]["path"] = path
    if incident is not None:
        doc["error"]["incident_id"] = incident
    return _canonical(doc, status)


class _Validator:
    """Field-by-field body validation that names the failing path."""

    def __init__(self, body, path: str = "body"):
        if not isinstance(body, dict):
            raise ApiError(400, "bad-payload", "request body must be a JSON object",
                           path)
        self.body = body
        self.path = path
        self.seen: set[str] = set()

    def take(self, name: str, types, required: bool = False, default=None):
        self.seen.add(name)
        if name not in self.body:
            if required:
                raise ApiError(400, "missing-field", f"{name} is required",
                               f"{self.path}.{name}")
            return default
        value = self.body[name]
        if types is not None and not isinstance(value, types):
            raise ApiError(400, "bad-type", f"{name} has the wrong type",
                           f"{self.path}.{name}")
        if isinstance(value, bool) and types is not None and bool not in (
                types if isinstance(types, tuple) else (types,)):
            raise ApiError(400, "bad-type", f"{name} has the wrong type",
                           f"{self.path}.{name}")
        return value

    def finish(self):
        unknown = set(self.body) - self.seen
        if unknown:
            name = sorted(unknown)[0]
            raise ApiError(400, "unknown-field", f"unknown field {name!r}",
                           f"{self.path}.{name}")


def create_app(store: DataStore | None = None, tokens: dict[str, ApiToken] | None = None,
               data_dir: str | None = None) -> FastAPI:
    if data_dir is not None:
        os.makedirs(data_dir, exist_ok=True)
        os.makedirs(os.path.join(data_dir, "campaigns"), exist_ok=True)
        if store is None:
            store = DataStore(os.path.join(data_dir, "store.jsonl"))
    if store is None:
        store = DataStore()
    if tokens is None:
        tokens = {}

    app = FastAPI(title="matloop", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.tokens = tokens
    app.state.campaigns = {}
    app.state.campaign_locks = {}
    app.state.data_dir = data_dir
    lock = threading.Lock()

    if data_dir is not None:
        camp_dir = os.path.join(data_dir, "campaigns")
        for fname in sorted(os.listdir(camp_dir)):
            if fname.endswith(".json"):
                with open(os.path.join(camp_dir, fname), encoding="utf-8") as fh:
                    doc = json.load(fh)
                cid = fname[:-5]
                app.state.campaigns[cid] = Campaign.from_snapshot(doc, store=store)
                app.state.campaign_locks[cid] = threading.Lock()

    # -- helpers -------------------------------------------------------------

    def require(request: Request, min_role: str = "viewer") -> ApiToken:
        header = request.headers.get("authorization", "")
        if not header.startswith("Bearer "):
            raise ApiError(401, "unauthorized", "missing bearer token")
        token = tokens.get(header[len("Bearer "):].strip())
        if token is None:
            raise ApiError(401, "unauthorized", "unknown token")
        if _ROLE_RANK[token.role] < _ROLE_RANK[min_role]:
            raise ApiError(403, "forbidden", f"requires {min_role} role")
        return token

    async def parse_json(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiError(400, "bad-json", f"body is not valid JSON: {exc}",
                           "body") from None

    def persist_campaign(cid: str):
        if data_dir is None:
            return
        path = os.path.join(data_dir, "campaigns", f"{cid}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(app.state.campaigns[cid].to_json())

    def get_campaign(cid: str) -> tuple[Campaign, threading.Lock]:
        camp = app.state.campaigns.get(cid)
        if camp is None:
            raise ApiError(404, "not-found", f"no campaign {cid!r}")
        return camp, app.state.campaign_locks[cid]

    def campaign_view(cid: str, camp: Campaign) -> dict:
        front_idx: list[int] = []
        if camp.Y_obs:
            from .pareto import pareto_front
            front_idx = list(pareto_front(camp.internal_Y()).indices)
        return {
            "id": cid,
            "phase": camp.phase,
            "config": camp.config.to_json_dict(),
            "iteration": camp.iteration,
            "cum_cost": camp.cum_cost,
            "observations": {
                "X": [list(x) for x in camp.X_obs],
                "Y": [list(y) for y in camp.Y_obs],
                "fidelity": camp.fid_obs,
                "cost": camp.cost_obs,
                "iter": camp.iter_obs,
                "proposal_id": camp.obs_proposal_ids,
            },
            "front_indices": front_idx,
            "pending": [p.to_json_dict() for p in camp.pending],
            "input_names": camp.config.input_names(),
            "objective_names": camp.config.objective_names(),
            "directions": list(camp.directions),
            "imputation_report": camp.imputation_report,
            "records": [r.to_json_dict() for r in camp.records],
        }

    # -- error mapping ---------------------------------------------------------

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message, exc.path)

    @app.exception_handler(MatloopError)
    async def handle_matloop_error(request: Request, exc: MatloopError):
        if isinstance(exc, _NOT_FOUND_ERRORS):
            return _error_response(404, exc.code, str(exc))
        if isinstance(exc, _BAD_REQUEST_ERRORS):
            return _error_response(400, exc.code, str(exc))
        incident = uuid_lib.uuid4().hex[:12]
        return _error_response(500, "internal", "internal error", incident=incident)

    @app.exception_handler(Exception)
    async def handle_internal(request: Request, exc: Exception):
        incident = uuid_lib.uuid4().hex[:12]
        return _error_response(500, "internal", "internal error", incident=incident)

    # -- routes ------------------------------------------------------------------

    @app.get("/v1/healthz")
    async def healthz():
        return _canonical({"ok": True})

    @app.get("/v1/tables")
    async def list_tables(request: Request):
        require(request, "viewer")
        return _canonical({"tables": store.list_tables()})

    @app.post("/v1/tables")
    async def create_table(request: Request):
        require(request, "admin")
        body = _Validator(await parse_json(request))
        template_doc = body.take("template", dict, required=True)
        form_doc = body.take("form", dict)
        body.finish()
        template = SchemaTemplate.from_json(json.dumps(template_doc))
        table_id = store.create_table(template)
        if form_doc is not None:
            store.bind_form(TravelerForm.from_json(json.dumps(form_doc)))
        return _canonical({"table": table_id}, status=201)

    @app.get("/v1/tables/{table_id}/metadata")
    async def table_metadata(table_id: str, request: Request):
        require(request, "viewer")
        return _canonical(store.table_metadata(table_id))

    @app.post("/v1/tables/{table_id}/query")
    async def query_rows(table_id: str, request: Request):
        require(request, "viewer")
        body = _Validator(await parse_json(request))
        columns = body.take("columns", list)
        filter_doc = body.take("filter", dict)
        num_rows = body.take("numRows", int)
        cursor = body.take("cursor", str)
        body.finish()
        if columns is not None:
            if not columns or not all(isinstance(c, str) for c in columns):
                raise ApiError(400, "bad-type", "columns must be a non-empty list "
                               "of names", "body.columns")
        if num_rows is not None and num_rows < 1:
            raise ApiError(400, "bad-value", "numRows must be positive",
                           "body.numRows")
        offset = 0
        if cursor is not None:
            try:
                offset = int(base64.urlsafe_b64decode(cursor.encode()).decode())
            except Exception:
                raise ApiError(400, "bad-value", "malformed cursor",
                               "body.cursor") from None
        rowset = store.query_rows(table_id, columns, filter_doc, None)
        rows = rowset.rows[offset:]
        next_cursor = None
        if num_rows is not None and len(rows) > num_rows:
            rows = rows[:num_rows]
            next_cursor = base64.urlsafe_b64encode(
                str(offset + num_rows).encode()).decode()
        if "text/csv" in request.headers.get("accept", ""):
            import csv as _csv
            import io as _io
            from .store import format_cell
            buf = _io.StringIO()
            w = _csv.writer(buf, lineterminator="\r\n")
            w.writerow(rowset.column_names())
            for row in rows:
                w.writerow([format_cell(v) for v in row])
            return Response(content=buf.getvalue(), media_type="text/csv")
        return _canonical({
            "columns": rowset.column_names(),
            "rows": [list(r) for r in rows],
            "cursor": next_cursor,
        })

    @app.post("/v1/tables/{table_id}/records")
    async def ingest_records(table_id: str, request: Request):
        token = require(request, "editor")
        body = _Validator(await parse_json(request))
        records = body.take("records", list, required=True)
        actor = body.take("actor", str, default=token.org)
        body.finish()
        if not records or not all(isinstance(r, dict) for r in records):
            raise ApiError(400, "bad-type", "records must be a non-empty list of "
                           "objects", "body.records")
        accepted = 0
        stamps = []
        violations = []
        form = store.get_form(store.table_metadata(table_id)["form_id"]) \
            if store.table_metadata(table_id)["form_id"] else None
        for i, record in enumerate(records):
            if form is not None:
                validated, errs = store.validate_record(form, record)
                if errs:
                    violations.append({"index": i,
                                       "violations": [v.to_json_dict() for v in errs]})
                    continue
                stamp = store.ingest_record(table_id, validated, actor,
                                            source="api")
            else:
                try:
                    stamp = store.ingest_record(table_id, record, actor, source="api")
                except RecordRejectedError as exc:
                    violations.append({"index": i,
                                       "violations": [v.to_json_dict()
                                                      for v in exc.violations]})
                    continue
            accepted += 1
            stamps.append(stamp.to_json_dict())
        return _canonical({"accepted": accepted, "rejected": violations,
                           "stamps": stamps}, status=201 if accepted else 200)

    @app.get("/v1/benchmarks")
    async def benchmarks_route(request: Request):
        require(request, "viewer")
        return _canonical({"benchmarks": [b.to_json_dict() for b in list_benchmarks()]})

    @app.get("/v1/campaigns")
    async def list_campaigns(request: Request):
        require(request, "viewer")
        return _canonical({"campaigns": [
            {"id": cid, "phase": c.phase, "mode": c.config.mode,
             "iteration": c.iteration}
            for cid, c in sorted(app.state.campaigns.items())
        ]})

    @app.post("/v1/campaigns")
    async def create_campaign(request: Request):
        require(request, "editor")
        body = await parse_json(request)
        config = CampaignConfig.from_json_dict(body)   # ConfigError -> 400
        camp = Campaign(config, store=store)
        with lock:
            cid = uuid_lib.uuid4().hex[:12]
            app.state.campaigns[cid] = camp
            app.state.campaign_locks[cid] = threading.Lock()
        persist_campaign(cid)
        return _canonical(campaign_view(cid, camp), status=201)

    @app.get("/v1/campaigns/{cid}")
    async def get_campaign_route(cid: str, request: Request):
        require(request, "viewer")
        camp, _ = get_campaign(cid)
        return _canonical(campaign_view(cid, camp))

    @app.post("/v1/campaigns/{cid}/propose")
    async def propose_route(cid: str, request: Request):
        require(request, "editor")
        camp, camp_lock = get_campaign(cid)
        with camp_lock:
            proposals = camp.propose()
        persist_campaign(cid)
        return _canonical({"proposals": [p.to_json_dict() for p in proposals],
                           "phase": camp.phase})

    @app.post("/v1/campaigns/{cid}/measurements")
    async def measurements_route(cid: str, request: Request):
        require(request, "editor")
        body = _Validator(await parse_json(request))
        items = body.take("measurements", list, required=True)
        body.finish()
        if not items or not all(isinstance(m, dict) for m in items):
            raise ApiError(400, "bad-type", "measurements must be a non-empty list",
                           "body.measurements")
        parsed = []
        for i, item in enumerate(items):
            v = _Validator(item, path=f"body.measurements[{i}]")
            pid = v.take("proposal_id", str, required=True)
            values = v.take("values", list)
            fidelity = v.take("fidelity", (int, float))
            expire = v.take("expire", bool, default=False)
            v.finish()
            if not expire:
                if not values or not all(isinstance(x, (int, float))
                                         and not isinstance(x, bool) for x in values):
                    raise ApiError(400, "bad-type", "values must be a list of numbers",
                                   f"body.measurements[{i}].values")
            parsed.append((pid, values, fidelity, expire))
        camp, camp_lock = get_campaign(cid)
        with camp_lock:
            for pid, values, fidelity, expire in parsed:
                if expire:
                    camp.expire_proposal(pid)
                else:
                    camp.submit_measurements(pid, values, fidelity_used=fidelity)
        persist_campaign(cid)
        return _canonical(campaign_view(cid, camp))

    @app.post("/v1/campaigns/{cid}/step")
    async def step_route(cid: str, request: Request):
        require(request, "editor")
        camp, camp_lock = get_campaign(cid)
        with camp_lock:
            record = camp.step_benchmark()
        persist_campaign(cid)
        return _canonical({"record": record.to_json_dict() if record else None,
                           "phase": camp.phase})

    @app.get("/v1/campaigns/{cid}/diagnostics")
    async def diagnostics_route(cid: str, request: Request):
        require(request, "viewer")
        camp, _ = get_campaign(cid)
        return _canonical(camp.diagnostics())

    @app.get("/v1/campaigns/{cid}/export")
    async def export_route(cid: str, request: Request, which: str = "observations"):
        require(request, "viewer")
        if which not in ("observations", "proposals", "iterations", "front"):
            raise ApiError(400, "bad-value", f"unknown export {which!r}", "query.which")
        camp, _ = get_campaign(cid)
        return Response(content=camp.export_csv(which), media_type="text/csv")

    return app


def create_default_app() -> FastAPI:
    """App factory reading configuration from the environment."""
    token_path = os.environ.get("MATLOOP_TOKENS")
    tokens = load_tokens(token_path) if token_path else {}
    data_dir = os.environ.get("MATLOOP_DATA")
    return create_app(tokens=tokens, data_dir=data_dir)


def serve(host: str | None = None, port: int | None = None, *,
          tokens_path: str | None = None, data_dir: str | None = None):
    import uvicorn

    if tokens_path:
        os.environ["MATLOOP_TOKENS"] = tokens_path
    if data_dir:
        os.environ["MATLOOP_DATA"] = data_dir
    bind = os.environ.get("MATLOOP_BIND", "127.0.0.1:8080")
    env_host, _, env_port = bind.rpartition(":")
    uvicorn.run(create_default_app(),
                host=host or env_host or "127.0.0.1",
                port=port if port is not None else int(env_port or 8080),
                log_level="warning")
