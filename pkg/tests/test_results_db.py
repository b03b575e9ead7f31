import csv
from argparse import Namespace
from datetime import datetime

import pytest

from src.cli import RunConfig
from src.database.db_utils import (
    RESULT_COLUMNS,
    STATUS_FAILED,
    STATUS_OK,
    export_runs_csv,
    fetch_runs,
    find_completed_run,
    record_run,
)
from src.database.models import ResultsDatabase
from src.handlers import sweep_handler
from src.utils.provenance import canonical_json, timestamps


@pytest.fixture
def db(tmp_path):
    return ResultsDatabase(str(tmp_path / "results.db"))


def small_config(**overrides):
    base = dict(grid_exp=1, patch_size=4, steps=1, threads=1, summary_path=None)
    base.update(overrides)
    return RunConfig(**base)


def record(db, cfg, status=STATUS_OK, **extra):
    return record_run(db, cfg.hash, canonical_json(cfg.to_dict()), cfg, status, stamps=timestamps(), **extra)


def test_jalali_timestamp():
    stamps = timestamps(datetime(2024, 3, 20, 12, 0, 0))
    assert stamps["created_at"] == "2024-03-20T12:00:00"
    assert stamps["created_at_jalali"] == "1403/01/01 12:00:00"


def test_record_and_find(db):
    cfg = small_config()
    assert record(db, cfg, time_per_step_per_patch=1e-5, wall_s=0.2, checksum="abc")
    row = find_completed_run(db, cfg.hash)
    assert row["checksum"] == "abc"
    assert row["threads"] == 1
    assert row["created_at_jalali"]


def test_failed_run_is_not_completed(db):
    cfg = small_config(strategy="hold-back")
    record(db, cfg, STATUS_FAILED, error="starvation")
    assert find_completed_run(db, cfg.hash) is None
    record(db, cfg, checksum="def")
    assert find_completed_run(db, cfg.hash)["checksum"] == "def"


def test_fetch_keeps_requested_order_and_skips_missing(db):
    a, b = small_config(threads=1), small_config(threads=2)
    record(db, a)
    record(db, b)
    rows = fetch_runs(db, [b.hash, "0" * 16, a.hash])
    assert [row["threads"] for row in rows] == [2, 1]


def test_export_csv(db, tmp_path):
    record(db, small_config(), checksum="abc")
    path = tmp_path / "results.csv"
    export_runs_csv(fetch_runs(db, [small_config().hash]), path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == RESULT_COLUMNS
    assert rows[0]["status"] == STATUS_OK


# ===== sweep =====

def test_parse_variant():
    assert sweep_handler.parse_variant("enclave-merge-and-backfill") == ("enclave", "merge-and-backfill")
    with pytest.raises(ValueError):
        sweep_handler.parse_variant("bsp")


def test_build_matrix():
    cells = sweep_handler.build_matrix(small_config(), [1, 2], ["bsp-native", "enclave-backfill"], ["well", "ill"])
    assert len(cells) == 8
    assert len({cell.hash for cell in cells}) == 8


def sweep_args(tmp_path, **overrides):
    args = dict(
        sweep_threads="1,2",
        variants="bsp-native,enclave-hold-back",
        balances="well",
        results_db=str(tmp_path / "results.db"),
        results_csv=str(tmp_path / "results.csv"),
        force=False,
    )
    args.update(overrides)
    return Namespace(**args)


def test_sweep_is_idempotent(tmp_path, monkeypatch):
    calls = []
    simulate = sweep_handler.simulate

    def counting(cell, *args, **kwargs):
        calls.append(cell.hash)
        return simulate(cell, *args, **kwargs)

    monkeypatch.setattr(sweep_handler, "simulate", counting)
    args = sweep_args(tmp_path)
    assert sweep_handler.cmd_sweep(small_config(), args) == 0
    assert len(calls) == 4
    assert sweep_handler.cmd_sweep(small_config(), args) == 0
    assert len(calls) == 4
    with open(args.results_csv, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert len({row["checksum"] for row in rows}) == 1

    assert sweep_handler.cmd_sweep(small_config(), sweep_args(tmp_path, force=True)) == 0
    assert len(calls) == 8


def test_sweep_records_failures_and_continues(tmp_path, monkeypatch):
    simulate = sweep_handler.simulate

    def failing(cell, *args, **kwargs):
        if cell.strategy == "hold-back":
            raise RuntimeError("broken cell")
        return simulate(cell, *args, **kwargs)

    monkeypatch.setattr(sweep_handler, "simulate", failing)
    args = sweep_args(tmp_path, sweep_threads="1")
    assert sweep_handler.cmd_sweep(small_config(), args) == 1
    db = ResultsDatabase(args.results_db)
    statuses = {row["strategy"]: row["status"] for row in db.execute_query("SELECT * FROM runs")}
    assert statuses == {"native": STATUS_OK, "hold-back": STATUS_FAILED}


def test_benchmark_report_warns():
    def row(solver, strategy, threads, value):
        return {"solver": solver, "strategy": strategy, "balance": "ill", "threads": threads,
                "status": STATUS_OK, "time_per_step_per_patch": value}

    rows = [
        row("bsp", "native", 1, 4.0),
        row("bsp", "native", 8, 1.0),
        row("enclave", "hold-back", 8, 0.5),
        row("enclave", "native", 8, 0.6),
        row("enclave", "backfill", 8, 0.5),
    ]
    lines = sweep_handler.benchmark_report(rows, [1, 8])
    assert lines[0].startswith("WARN ill-balanced bsp speedup")
    assert all(line.startswith("OK") for line in lines[1:])
    assert len(lines) == 4
