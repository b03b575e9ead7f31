"""
ابزارهای ثبت منشأ خروجی‌ها: hash پیکربندی و زمان‌های میلادی/شمسی
"""
import hashlib
import json
import logging
from datetime import datetime

import jdatetime

logger = logging.getLogger(__name__)

# فیلدهایی که روی نتیجه عددی یا زمان‌بندی اثر ندارند
NON_IDENTITY_FIELDS = ("trace_path", "summary_path", "summary_csv_path", "debug")


def canonical_json(data):
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def config_hash(config_dict):
    """hash پایدار پیکربندی اجرا برای کلید دفتر نتایج"""
    identity = {k: v for k, v in config_dict.items() if k not in NON_IDENTITY_FIELDS}
    return hashlib.sha256(canonical_json(identity).encode("utf-8")).hexdigest()[:16]


def timestamps(now=None):
    """زمان فعلی به صورت ISO و تاریخ شمسی"""
    now = now or datetime.now()
    jalali = jdatetime.datetime.fromgregorian(datetime=now)
    return {
        "created_at": now.isoformat(timespec="seconds"),
        "created_at_jalali": jalali.strftime("%Y/%m/%d %H:%M:%S"),
    }
