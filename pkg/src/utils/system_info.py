"""
اطلاعات سیستم با psutil: تعداد هسته‌ها و مصرف منابع پروسه
"""
import logging
import os

import psutil

logger = logging.getLogger(__name__)


def hardware_threads():
    """تعداد نخ‌های سخت‌افزاری (منطقی)"""
    count = psutil.cpu_count(logical=True)
    if not count:
        logger.warning("تعداد هسته‌ها قابل تشخیص نیست، از 1 استفاده می‌شود")
        return 1
    return count


def resource_usage():
    """زمان CPU و حافظه پروسه جاری"""
    try:
        proc = psutil.Process(os.getpid())
        cpu = proc.cpu_times()
        memory = proc.memory_info()
        return {
            "cpu_user_s": cpu.user,
            "cpu_system_s": cpu.system,
            "rss_bytes": memory.rss,
            "num_threads": proc.num_threads(),
            "hardware_threads": hardware_threads(),
        }
    except (psutil.NoSuchProcess, psutil.AccessDenied) as e:
        logger.error(f"خطا در خواندن مصرف منابع: {e}")
        return {}
