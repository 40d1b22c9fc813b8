"""Headless command-line interface.

Exit codes: 0 success, 1 usage error (bad flags, bad config, header mismatch),
2 runtime fault. With --json, stdout is a single machine-parseable JSON
document; otherwise human-readable tables.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .benchmarks import list_benchmarks
from .campaign import Campaign, CampaignConfig
from .errors import ConfigError, MatloopError, UnknownColumnError
from .schema import SchemaTemplate, TravelerForm
from .store import DataStore


def _emit(payload: dict, as_json: bool, human: str):
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(human)


def _load_json_file(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise click.UsageError(f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"{what} file is not valid JSON: {exc}")


@click.group()
def cli():
    """Closed-loop optimization campaigns over governed tabular data."""


# -- table ---------------------------------------------------------------------

@cli.group()
def table():
    """Create and inspect schema-templated tables."""


@table.command("create")
@click.option("--store", "store_path", required=True, help="Store journal file.")
@click.option("--template", "template_path", required=True,
              help="Schema template JSON document.")
@click.option("--form", "form_path", default=None,
              help="Optional traveler form JSON to bind.")
@click.option("--json", "as_json", is_flag=True)
def table_create(store_path, template_path, form_path, as_json):
    doc = _load_json_file(template_path, "template")
    store = DataStore(store_path)
    template = SchemaTemplate.from_json(json.dumps(doc))
    table_id = store.create_table(template)
    if form_path:
        form_doc = _load_json_file(form_path, "form")
        store.bind_form(TravelerForm.from_json(json.dumps(form_doc)))
    _emit({"table": table_id}, as_json, f"created table {table_id}")


@table.command("metadata")
@click.option("--store", "store_path", required=True)
@click.option("--table", "table_id", required=True)
@click.option("--json", "as_json", is_flag=True)
def table_metadata(store_path, table_id, as_json):
    store = DataStore(store_path)
    meta = store.table_metadata(table_id)
    lines = [f"table {meta['table']} ({meta['archetype']}): "
             f"{meta['row_count']} rows"]
    for col in meta["columns"]:
        unit = meta["units"][col] or "-"
        tag = meta["ontology_tags"][col] or "-"
        lines.append(f"  {col}: {meta['dtypes'][col]} unit={unit} tag={tag} "
                     f"missing={meta['missing_counts'][col]}")
    _emit(meta, as_json, "\n".join(lines))


@table.command("query")
@click.option("--store", "store_path", required=True)
@click.option("--table", "table_id", required=True)
@click.option("--columns", default=None, help="Comma-separated column names.")
@click.option("--filter", "filter_json", default=None, help="Filter JSON document.")
@click.option("--num-rows", type=int, default=None)
@click.option("--json", "as_json", is_flag=True)
def table_query(store_path, table_id, columns, filter_json, num_rows, as_json):
    store = DataStore(store_path)
    cols = [c.strip() for c in columns.split(",")] if columns else None
    filter_doc = None
    if filter_json:
        try:
            filter_doc = json.loads(filter_json)
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"--filter is not valid JSON: {exc}")
    rowset = store.query_rows(table_id, cols, filter_doc, num_rows)
    payload = {"columns": rowset.column_names(),
               "rows": [list(r) for r in rowset.rows]}
    human = [" | ".join(rowset.column_names())]
    human += [" | ".join("" if v is None else str(v) for v in row)
              for row in rowset.rows]
    _emit(payload, as_json, "\n".join(human))


@cli.command("ingest")
@click.option("--store", "store_path", required=True)
@click.option("--table", "table_id", required=True)
@click.option("--csv", "csv_path", required=True)
@click.option("--actor", default="cli")
@click.option("--json", "as_json", is_flag=True)
def ingest(store_path, table_id, csv_path, actor, as_json):
    """Validate and ingest CSV rows through the table's traveler form."""
    try:
        with open(csv_path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise click.UsageError(f"csv file not found: {csv_path}")
    store = DataStore(store_path)
    try:
        accepted, violations = store.import_csv(table_id, text, actor)
    except UnknownColumnError as exc:
        raise click.UsageError(str(exc))
    detail = [v.to_json_dict() for v in violations[:10]]
    payload = {"accepted": accepted, "rejected_violations": len(violations),
               "first_violations": detail}
    human = [f"{accepted} accepted, {len(violations)} violation(s)"]
    human += [f"  {v['field']}: {v['message']}" for v in detail]
    _emit(payload, as_json, "\n".join(human))
    if accepted == 0:
        raise MatloopError("no rows accepted")


# -- benchmarks ------------------------------------------------------------------

@cli.group()
def benchmarks():
    """Analytic benchmark registry."""


@benchmarks.command("list")
@click.option("--json", "as_json", is_flag=True)
def benchmarks_list(as_json):
    defs = [b.to_json_dict() for b in list_benchmarks()]
    human = []
    for b in defs:
        opt = f" optimum {b['optima'][0]['value']}" if b["optima"] else ""
        human.append(f"{b['name']}: {b['kind']}, d={b['dim']}, m={b['objectives']}"
                     f"{opt} - {b['description']}")
    _emit({"benchmarks": defs}, as_json, "\n".join(human))


# -- campaign --------------------------------------------------------------------

@cli.group()
def campaign():
    """Run, resume and export optimization campaigns."""


def _write_bundle(camp: Campaign, out_dir: str, figures: bool) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    for which in ("observations", "iterations", "proposals", "front"):
        with open(os.path.join(out_dir, f"{which}.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            fh.write(camp.export_csv(which))
    with open(os.path.join(out_dir, "snapshot.json"), "w", encoding="utf-8") as fh:
        fh.write(camp.to_json())
    Yb = camp.Y_obs
    summary = {
        "phase": camp.phase,
        "iterations": camp.iteration,
        "evaluations": len(camp.X_obs),
        "total_cost": camp.cum_cost,
        "final_hv": camp.records[-1].hv if camp.records else None,
        "best_values": None,
    }
    if Yb:
        import numpy as np

        Y = np.asarray(Yb, dtype=float)
        best = []
        for k, direction in enumerate(camp.directions):
            best.append(float(Y[:, k].max() if direction == "maximize"
                              else Y[:, k].min()))
        summary["best_values"] = best
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    if figures and camp.records:
        from . import report

        report.render_all(camp, out_dir)
    return summary


@campaign.command("run")
@click.option("--config", "config_path", required=True)
@click.option("--out", "out_dir", required=True)
@click.option("--store", "store_path", default=None,
              help="Store journal (required for dataset mode).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--figures/--no-figures", default=True)
@click.option("--json", "as_json", is_flag=True)
def campaign_run(config_path, out_dir, store_path, seed, figures, as_json):
    doc = _load_json_file(config_path, "config")
    if seed is not None:
        doc["seed"] = seed
    try:
        config = CampaignConfig.from_json_dict(doc)
        store = DataStore(store_path) if store_path else None
        camp = Campaign(config, store=store)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    if config.mode == "benchmark":
        camp.run()
    summary = _write_bundle(camp, out_dir, figures)
    _emit(summary, as_json,
          f"{summary['phase']}: {summary['evaluations']} evaluations, "
          f"{summary['iterations']} iterations, cost {summary['total_cost']}, "
          f"outputs in {out_dir}")


@campaign.command("resume")
@click.option("--snapshot", "snapshot_path", required=True)
@click.option("--out", "out_dir", required=True)
@click.option("--store", "store_path", default=None)
@click.option("--figures/--no-figures", default=True)
@click.option("--json", "as_json", is_flag=True)
def campaign_resume(snapshot_path, out_dir, store_path, figures, as_json):
    doc = _load_json_file(snapshot_path, "snapshot")
    store = DataStore(store_path) if store_path else None
    camp = Campaign.from_snapshot(doc, store=store)
    if camp.config.mode == "benchmark":
        camp.run()
    summary = _write_bundle(camp, out_dir, figures)
    _emit(summary, as_json,
          f"{summary['phase']}: {summary['evaluations']} evaluations, "
          f"outputs in {out_dir}")


@campaign.command("export")
@click.option("--snapshot", "snapshot_path", required=True)
@click.option("--out", "out_dir", required=True)
@click.option("--which", type=click.Choice(["observations", "iterations",
                                            "proposals", "front"]),
              default="observations")
@click.option("--json", "as_json", is_flag=True)
def campaign_export(snapshot_path, out_dir, which, as_json):
    doc = _load_json_file(snapshot_path, "snapshot")
    camp = Campaign.from_snapshot(doc)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{which}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(camp.export_csv(which))
    _emit({"written": path}, as_json, f"wrote {path}")


# -- server ----------------------------------------------------------------------

@cli.command("serve")
@click.option("--host", default=None, help="Bind host (default MATLOOP_BIND).")
@click.option("--port", type=int, default=None, help="Bind port.")
@click.option("--tokens", "tokens_path", default=None)
@click.option("--data", "data_dir", default=None)
def serve_cmd(host, port, tokens_path, data_dir):
    """Start the REST API server."""
    from .api import serve

    serve(host=host, port=port, tokens_path=tokens_path, data_dir=data_dir)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except MatloopError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
