"""
تنظیمات مشترک تست‌ها
"""
import os
import sys

import pytest

# اضافه کردن مسیر پوشه اصلی برای دسترسی به config و src
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.runtime.scheduler import Runtime
from src.runtime.strategy import Strategy
from src.services.fv_core import MeshConfig
from src.services.trace import Tracer


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running equivalence and timing runs")


@pytest.fixture
def small_mesh_config():
    return MeshConfig(M=3, n=4)


@pytest.fixture
def make_runtime():
    """سازنده runtime که همه نمونه‌ها را در پایان تست متوقف می‌کند"""
    created = []

    def factory(kind="native", threads=2, trace=False, watchdog_polls=1_000_000, **options):
        runtime = Runtime(
            Strategy.from_name(kind, **options), threads, tracer=Tracer(enabled=trace), watchdog_polls=watchdog_polls
        )
        created.append(runtime)
        return runtime

    yield factory
    for runtime in created:
        runtime.shutdown()
