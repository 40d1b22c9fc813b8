"""Command-line interface: exit codes, outputs, replay determinism."""

import json

from matloop.cli import main

TEMPLATE = {
    "name": "alloys",
    "archetype": "research",
    "fields": [
        {"name": "Nb", "dtype": "real", "nullable": False},
        {"name": "Creep_Merit", "dtype": "real"},
    ],
}


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_benchmarks_list(capsys):
    code, out, _ = run(capsys, "benchmarks", "list")
    assert code == 0
    assert "goldstein_price" in out
    code, out, _ = run(capsys, "benchmarks", "list", "--json")
    names = [b["name"] for b in json.loads(out)["benchmarks"]]
    assert "branin_currin" in names


def test_table_create_and_metadata(tmp_path, capsys):
    store = str(tmp_path / "store.jsonl")
    tpl = tmp_path / "template.json"
    tpl.write_text(json.dumps(TEMPLATE), encoding="utf-8")
    code, out, _ = run(capsys, "table", "create", "--store", store,
                       "--template", str(tpl), "--json")
    assert code == 0 and json.loads(out) == {"table": "alloys"}
    code, out, _ = run(capsys, "table", "metadata", "--store", store,
                       "--table", "alloys", "--json")
    assert code == 0
    assert json.loads(out)["columns"] == ["Nb", "Creep_Merit"]


def test_table_create_missing_template_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "table", "create", "--store",
                       str(tmp_path / "s.jsonl"), "--template",
                       str(tmp_path / "none.json"))
    assert code == 1


def test_ingest_flow(tmp_path, capsys):
    store = str(tmp_path / "store.jsonl")
    tpl = tmp_path / "template.json"
    tpl.write_text(json.dumps(TEMPLATE), encoding="utf-8")
    run(capsys, "table", "create", "--store", store, "--template", str(tpl))

    csv_path = tmp_path / "rows.csv"
    csv_path.write_text("Nb,Creep_Merit\r\n0.1,5.0\r\n0.2,6.0\r\n0.3,7.0\r\n"
                        "0.4,8.0\r\n0.5,9.0\r\n", encoding="utf-8")
    code, out, _ = run(capsys, "ingest", "--store", store, "--table", "alloys",
                       "--csv", str(csv_path), "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["accepted"] == 5 and doc["rejected_violations"] == 0

    bad = tmp_path / "bad.csv"
    bad.write_text("Nb,Creep_Merit\r\nzebra,5.0\r\n0.2,6.0\r\n", encoding="utf-8")
    code, out, _ = run(capsys, "ingest", "--store", store, "--table", "alloys",
                       "--csv", str(bad), "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["accepted"] == 1 and doc["rejected_violations"] >= 1

    none_good = tmp_path / "none.csv"
    none_good.write_text("Nb,Creep_Merit\r\nzebra,1\r\n", encoding="utf-8")
    code, _, err = run(capsys, "ingest", "--store", store, "--table", "alloys",
                       "--csv", str(none_good))
    assert code == 2

    mismatch = tmp_path / "mismatch.csv"
    mismatch.write_text("Wrong,Header\r\n1,2\r\n", encoding="utf-8")
    before = store_rows(store)
    code, _, err = run(capsys, "ingest", "--store", store, "--table", "alloys",
                       "--csv", str(mismatch))
    assert code == 1
    assert store_rows(store) == before   # no partial writes


def store_rows(path) -> int:
    from matloop.store import DataStore

    return DataStore(path).table_metadata("alloys")["row_count"]


def test_table_query_with_filter(tmp_path, capsys):
    store = str(tmp_path / "store.jsonl")
    tpl = tmp_path / "template.json"
    tpl.write_text(json.dumps(TEMPLATE), encoding="utf-8")
    run(capsys, "table", "create", "--store", store, "--template", str(tpl))
    csv_path = tmp_path / "rows.csv"
    csv_path.write_text("Nb,Creep_Merit\r\n0.1,5.0\r\n0.9,6.0\r\n", encoding="utf-8")
    run(capsys, "ingest", "--store", store, "--table", "alloys", "--csv",
        str(csv_path))
    code, out, _ = run(capsys, "table", "query", "--store", store, "--table",
                       "alloys", "--columns", "Nb",
                       "--filter", '{"gt": ["Nb", 0.5]}', "--json")
    assert code == 0
    assert json.loads(out)["rows"] == [[0.9]]


CONFIG = {
    "mode": "benchmark",
    "benchmark": "goldstein_price",
    "iterations": 2,
    "init_n": 4,
    "seed": 3,
    "acquisition": "EI",
}


def test_campaign_run_writes_bundle(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CONFIG), encoding="utf-8")
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "campaign", "run", "--config", str(cfg),
                       "--out", str(out_dir), "--json")
    assert code == 0
    summary = json.loads(out)
    assert summary["phase"] == "converged"
    assert summary["evaluations"] == 6
    for name in ("observations.csv", "iterations.csv", "proposals.csv",
                 "front.csv", "summary.json", "snapshot.json",
                 "hypervolume.png", "acquisition.png", "pareto.png",
                 "convergence.png"):
        assert (out_dir / name).exists(), name
    assert summary["best_values"] is not None


def test_campaign_run_missing_config(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, _, err = run(capsys, "campaign", "run", "--config",
                       str(tmp_path / "nope.json"), "--out", str(out_dir))
    assert code == 1
    assert not out_dir.exists()    # no partial outputs


def test_campaign_run_bad_config(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({**CONFIG, "iterations": 0}), encoding="utf-8")
    code, _, err = run(capsys, "campaign", "run", "--config", str(cfg),
                       "--out", str(tmp_path / "out"))
    assert code == 1


def test_campaign_replay_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CONFIG), encoding="utf-8")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run(capsys, "campaign", "run", "--config", str(cfg), "--out",
               str(out_a), "--no-figures")[0] == 0
    assert run(capsys, "campaign", "run", "--config", str(cfg), "--out",
               str(out_b), "--no-figures")[0] == 0
    for name in ("observations.csv", "iterations.csv", "proposals.csv",
                 "front.csv", "summary.json", "snapshot.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_seed_override_changes_outputs(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CONFIG), encoding="utf-8")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run(capsys, "campaign", "run", "--config", str(cfg), "--out", str(out_a),
        "--no-figures")
    run(capsys, "campaign", "run", "--config", str(cfg), "--out", str(out_b),
        "--no-figures", "--seed", "99")
    assert (out_a / "observations.csv").read_bytes() != \
        (out_b / "observations.csv").read_bytes()


def test_campaign_export_from_snapshot(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CONFIG), encoding="utf-8")
    out_dir = tmp_path / "out"
    run(capsys, "campaign", "run", "--config", str(cfg), "--out", str(out_dir),
        "--no-figures")
    export_dir = tmp_path / "export"
    code, out, _ = run(capsys, "campaign", "export", "--snapshot",
                       str(out_dir / "snapshot.json"), "--out", str(export_dir),
                       "--which", "front", "--json")
    assert code == 0
    assert (export_dir / "front.csv").read_bytes() == \
        (out_dir / "front.csv").read_bytes()


def test_campaign_resume_reaches_same_outputs(tmp_path, capsys):
    cfg_doc = {**CONFIG, "iterations": 4}
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(cfg_doc), encoding="utf-8")
    full_dir = tmp_path / "full"
    run(capsys, "campaign", "run", "--config", str(cfg), "--out",
        str(full_dir), "--no-figures")

    # run half in-process, then resume via the CLI
    from matloop.campaign import Campaign, CampaignConfig

    half = Campaign(CampaignConfig.from_json_dict(cfg_doc))
    for _ in range(3):
        half.step_benchmark()
    snap = tmp_path / "half.json"
    snap.write_text(half.to_json(), encoding="utf-8")
    resumed_dir = tmp_path / "resumed"
    code, _, _ = run(capsys, "campaign", "resume", "--snapshot", str(snap),
                     "--out", str(resumed_dir), "--no-figures")
    assert code == 0
    assert (resumed_dir / "observations.csv").read_bytes() == \
        (full_dir / "observations.csv").read_bytes()


def test_unknown_subcommand_usage_error(capsys):
    assert run(capsys, "frobnicate")[0] == 1
