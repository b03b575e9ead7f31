"""
هندلر دستور sweep: اجرای ماتریس threads × (solver-strategy) × balance
نتایج در دفتر SQLite با کلید hash پیکربندی ثبت می‌شوند؛ خانه‌های موفق قبلی دوباره اجرا نمی‌شوند
"""
import json
import logging
import os
import sys
import time

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
import config

from ..database.db_utils import (
    STATUS_FAILED,
    STATUS_OK,
    export_runs_csv,
    fetch_runs,
    find_completed_run,
    record_run,
)
from ..database.models import ResultsDatabase
from ..utils.provenance import canonical_json, timestamps
from .run_handler import EXIT_FAILURE, EXIT_IO, EXIT_OK, simulate

logger = logging.getLogger(__name__)

DEFAULT_THREADS = "1,2,4,8"
DEFAULT_VARIANTS = "bsp-native,enclave-native,enclave-hold-back,enclave-backfill"
DEFAULT_BALANCES = "well,ill"

# حدود گزارش نرم محک (فقط WARN)
MAX_ILL_BSP_SPEEDUP = 3.0
MIN_ENCLAVE_OVER_BSP = 1.2


def add_arguments(parser):
    parser.add_argument("--sweep-threads", default=DEFAULT_THREADS, help="فهرست تعداد نخ‌ها")
    parser.add_argument("--variants", default=DEFAULT_VARIANTS, help="فهرست solver-strategy")
    parser.add_argument("--balances", default=DEFAULT_BALANCES)
    parser.add_argument("--results-db", default=config.RESULTS_DB_PATH)
    parser.add_argument("--results-csv", default=config.RESULTS_CSV_PATH)
    parser.add_argument("--force", action="store_true", help="اجرای دوباره خانه‌های موفق قبلی")


def _split(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_variant(variant):
    """'enclave-hold-back' → ('enclave', 'hold-back')"""
    solver, _, strategy = variant.partition("-")
    if not strategy:
        raise ValueError(f"variant {variant!r} must look like solver-strategy")
    return solver, strategy


def build_matrix(base, threads, variants, balances):
    cells = []
    for balance in balances:
        for variant in variants:
            solver, strategy = parse_variant(variant)
            for thread_count in threads:
                cells.append(base.with_overrides(
                    solver=solver,
                    strategy=strategy,
                    threads=thread_count,
                    balance=balance,
                    partitions=None,
                    trace_path=None,
                    summary_path=None,
                    summary_csv_path=None,
                ))
    return cells


def run_cell(db, cell, force=False):
    """اجرا و ثبت یک خانه؛ خطا ثبت می‌شود و sweep ادامه پیدا می‌کند"""
    config_hash = cell.hash
    if not force and find_completed_run(db, config_hash) is not None:
        logger.info(f"خانه {config_hash} قبلا با موفقیت اجرا شده، رد شد")
        return True
    config_json = canonical_json(cell.to_dict())
    started = time.perf_counter()
    try:
        result = simulate(cell)
    except Exception as e:
        logger.warning(f"خانه {cell.solver}-{cell.strategy}/{cell.threads}/{cell.balance} ناموفق: {e}")
        record_run(db, config_hash, config_json, cell, STATUS_FAILED, error=str(e), stamps=timestamps())
        return False
    wall_s = time.perf_counter() - started
    record_run(
        db, config_hash, config_json, cell, STATUS_OK,
        time_per_step_per_patch=result.summary.time_per_step_per_patch,
        wall_s=wall_s,
        checksum=result.checksum,
        stamps=timestamps(),
    )
    logger.info(f"خانه {cell.solver}-{cell.strategy}/{cell.threads}/{cell.balance}: {wall_s:.2f}s")
    return True


def _lookup(rows, solver, strategy, balance, threads):
    for row in rows:
        if (row["solver"], row["strategy"], row["balance"], row["threads"]) == (solver, strategy, balance, threads):
            if row["status"] == STATUS_OK and row["time_per_step_per_patch"]:
                return row["time_per_step_per_patch"]
    return None


def benchmark_report(rows, threads):
    """گزارش نرم شکل مقیاس‌پذیری حالت نامتوازن؛ تخطی فقط WARN چاپ می‌کند

    Returns:
        list: خطوط گزارش
    """
    lines = []
    low, high = min(threads), max(threads)
    bsp_low = _lookup(rows, "bsp", "native", "ill", low)
    bsp_high = _lookup(rows, "bsp", "native", "ill", high)
    if bsp_low and bsp_high:
        speedup = bsp_low / bsp_high
        status = "OK" if speedup <= MAX_ILL_BSP_SPEEDUP else "WARN"
        lines.append(f"{status} ill-balanced bsp speedup {low}->{high} threads: {speedup:.2f}x (expected <= {MAX_ILL_BSP_SPEEDUP}x)")
    for strategy in ("hold-back", "backfill"):
        enclave = _lookup(rows, "enclave", strategy, "ill", high)
        if enclave and bsp_high:
            ratio = bsp_high / enclave
            status = "OK" if ratio >= MIN_ENCLAVE_OVER_BSP else "WARN"
            lines.append(f"{status} ill-balanced enclave-{strategy} throughput over bsp at {high} threads: {ratio:.2f}x (expected >= {MIN_ENCLAVE_OVER_BSP}x)")
    native = _lookup(rows, "enclave", "native", "ill", high)
    backfill = _lookup(rows, "enclave", "backfill", "ill", high)
    if native and backfill:
        status = "OK" if backfill <= native else "WARN"
        lines.append(f"{status} ill-balanced enclave-backfill {backfill:.3e}s vs enclave-native {native:.3e}s at {high} threads")
    for line in lines:
        if line.startswith("WARN"):
            logger.warning(line)
    return lines


def cmd_sweep(cfg, args):
    threads = [int(t) for t in _split(args.sweep_threads)]
    cells = build_matrix(cfg, threads, _split(args.variants), _split(args.balances))
    db = ResultsDatabase(args.results_db)
    logger.info(f"sweep با {len(cells)} خانه شروع شد")

    failures = 0
    for cell in cells:
        if not run_cell(db, cell, force=args.force):
            failures += 1

    rows = fetch_runs(db, [cell.hash for cell in cells])
    try:
        export_runs_csv(rows, args.results_csv)
    except OSError as e:
        logger.error(f"خطا در نوشتن {args.results_csv}: {e}")
        return EXIT_IO

    for line in benchmark_report(rows, threads):
        print(line)

    checksums = {row["checksum"] for row in rows if row["status"] == STATUS_OK}
    print(f"cells={len(cells)} ok={sum(1 for r in rows if r['status'] == STATUS_OK)} failed={failures}")
    if len(checksums) > 1:
        logger.error(f"checksum های متفاوت در sweep: {sorted(checksums)}")
        print(f"error: checksum mismatch across the sweep: {json.dumps(sorted(checksums))}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE if failures else EXIT_OK
