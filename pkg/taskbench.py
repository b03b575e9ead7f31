#!/usr/bin/env python3
"""
taskbench - محک زمان‌بندی تسک‌های enclave روی حل‌گر حجم محدود اویلر

دستورها:
- run: یک اجرا و نوشتن summary.json / trace.csv
- sweep: ماتریس threads × strategy × balance و results.csv
- verify: بررسی‌های صحت
- partition: خروجی چیدمان قطعه‌ها
"""
import logging
import sys
from pathlib import Path

import config
from src.cli import main

BASE_DIR = Path(__file__).parent.absolute()
LOG_DIR = BASE_DIR / config.LOG_DIR


def setup_logging(debug=False):
    """لاگ در فایل UTF-8 و خروجی استاندارد"""
    LOG_DIR.mkdir(exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(LOG_DIR / config.LOG_FILE, encoding='utf-8'),
            logging.StreamHandler(sys.stdout)
        ]
    )


if __name__ == "__main__":
    setup_logging(debug="--debug" in sys.argv[1:])
    sys.exit(main())
