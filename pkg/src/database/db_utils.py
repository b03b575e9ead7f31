# -*- coding: utf-8 -*-
"""
توابع کمکی دفتر نتایج: ثبت اجرا، جستجوی اجراهای موفق و خروجی CSV
"""
import csv
import logging

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_FAILED = "failed"

RESULT_COLUMNS = [
    "config_hash", "solver", "strategy", "threads", "balance", "status",
    "time_per_step_per_patch", "wall_s", "checksum", "error", "created_at", "created_at_jalali",
]


def record_run(db, config_hash, config_json, cfg, status, time_per_step_per_patch=None,
               wall_s=None, checksum=None, error=None, stamps=None):
    """ثبت یا جایگزینی نتیجه یک خانه از ماتریس"""
    stamps = stamps or {}
    ok = db.execute_query(
        """
        INSERT OR REPLACE INTO runs (
            config_hash, config_json, solver, strategy, threads, balance, status, error,
            time_per_step_per_patch, wall_s, checksum, created_at, created_at_jalali
        ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """,
        (
            config_hash, config_json, cfg.solver, cfg.strategy, cfg.threads, cfg.balance, status, error,
            time_per_step_per_patch, wall_s, checksum,
            stamps.get("created_at"), stamps.get("created_at_jalali"),
        ),
        commit=True,
    )
    if not ok:
        logger.error(f"ثبت نتیجه {config_hash} ناموفق بود")
    return bool(ok)


def find_completed_run(db, config_hash):
    """سطر موفق قبلی با همین hash یا None"""
    return db.execute_query(
        "SELECT * FROM runs WHERE config_hash=? AND status=?", (config_hash, STATUS_OK), fetchone=True
    )


def fetch_runs(db, config_hashes):
    """سطرهای ثبت‌شده برای hash ها به همان ترتیب ورودی"""
    rows = []
    for config_hash in config_hashes:
        row = db.execute_query("SELECT * FROM runs WHERE config_hash=?", (config_hash,), fetchone=True)
        if row is not None:
            rows.append(row)
    return rows


def export_runs_csv(rows, path):
    """بازسازی کامل results.csv از سطرهای دفتر"""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([row[column] for column in RESULT_COLUMNS])
    logger.info(f"{len(rows)} سطر در {path} نوشته شد")
