"""
استراتژی‌های زمان‌بندی تسک‌های enclave
native | hold-back | backfill | merge-and-backfill
"""
import logging
import os
import sys
from dataclasses import dataclass
from enum import Enum

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
import config

from .errors import StrategyError

logger = logging.getLogger(__name__)


class StrategyKind(Enum):
    NATIVE = "native"
    HOLD_BACK = "hold-back"
    BACKFILL = "backfill"
    MERGE_AND_BACKFILL = "merge-and-backfill"


class YieldMode(Enum):
    FAIR = "fair"
    STRICT_GROUP = "strict-group"


STRATEGY_NAMES = [kind.value for kind in StrategyKind]
YIELD_MODE_NAMES = [mode.value for mode in YieldMode]


def _parse_enum(enum_cls, value, what):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        legal = ", ".join(member.value for member in enum_cls)
        raise StrategyError(f"unknown {what} {value!r} (legal: {legal})") from None


@dataclass(frozen=True)
class Strategy:
    """تنظیمات تغییرناپذیر یک استراتژی زمان‌بندی

    Args:
        kind: نوع استراتژی
        ready_cap: سقف تسک‌های آماده در صف pool (فقط native)
        yield_mode: رفتار taskyield
        merge_fraction: کسری از تسک‌های معلق که در هر فراخوانی پردازش می‌شود
        max_merge_batches_per_sweep: سقف دسته‌های ادغام‌شده در هر بخش
        merge_min_batch: کمترین اندازه گروه برای ادغام
    """
    kind: StrategyKind = StrategyKind.NATIVE
    ready_cap: int = config.READY_CAP
    yield_mode: YieldMode = YieldMode.FAIR
    merge_fraction: float = config.MERGE_FRACTION
    max_merge_batches_per_sweep: int = config.MAX_MERGE_BATCHES_PER_SWEEP
    merge_min_batch: int = config.MERGE_MIN_BATCH

    def __post_init__(self):
        object.__setattr__(self, "kind", _parse_enum(StrategyKind, self.kind, "threading model"))
        object.__setattr__(self, "yield_mode", _parse_enum(YieldMode, self.yield_mode, "yield mode"))
        if self.ready_cap < 1:
            raise StrategyError(f"ready_cap must be >= 1, got {self.ready_cap}")
        if not 0.0 < self.merge_fraction <= 1.0:
            raise StrategyError(f"merge_fraction must lie in (0, 1], got {self.merge_fraction}")
        if self.max_merge_batches_per_sweep < 0:
            raise StrategyError("max_merge_batches_per_sweep must be >= 0")
        if self.merge_min_batch < 1:
            raise StrategyError("merge_min_batch must be >= 1")

    @classmethod
    def from_name(cls, name, **options):
        """ساخت استراتژی از نام خط فرمان (مثلا --threading-model hold-back)"""
        return cls(kind=_parse_enum(StrategyKind, name, "threading model"), **options)

    @property
    def name(self):
        return self.kind.value

    @property
    def holds_back(self):
        return self.kind is not StrategyKind.NATIVE

    @property
    def backfills(self):
        return self.kind in (StrategyKind.BACKFILL, StrategyKind.MERGE_AND_BACKFILL)

    @property
    def merges(self):
        return self.kind is StrategyKind.MERGE_AND_BACKFILL

    @property
    def strict_groups(self):
        return self.yield_mode is YieldMode.STRICT_GROUP
