"""
زمان‌بند تسک‌های enclave
پیاده‌سازی رفتار native (سقف تسک‌های آماده و drain در taskwait)،
hold-back، backfill دستی بخش‌های BSP و merge-and-backfill
"""
import logging
import math
import os
import sys
import threading
import time
from dataclasses import dataclass
from enum import Enum

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
import config

from ..services.trace import EventKind, Tracer
from .errors import DuplicateTaskError, SchedulingError, StarvationError
from .pool import ItemKind, Pool, current_group
from .strategy import Strategy
from .tasks import MISSING, AtomicCounter, OutcomeTable, PendingQueue
from .watchdog import StarvationWatchdog

logger = logging.getLogger(__name__)


class YieldResult(Enum):
    RAN_TASK = "ran_task"
    SPUN = "spun"


@dataclass
class RuntimeStats:
    spawned: int = 0
    executed: int = 0
    inline: int = 0
    fused_batches: int = 0
    fused_tasks: int = 0
    backfill_slots: int = 0
    backfill_decrements: int = 0
    spins: int = 0


class Runtime:
    """مخزن نخ‌ها به همراه استراتژی زمان‌بندی

    Args:
        strategy: استراتژی زمان‌بندی
        threads: تعداد نخ‌های کارگر
        tracer: ثبت‌کننده رویداد (پیش‌فرض غیرفعال)
        watchdog_polls: تعداد poll های بی‌ثمر پیاپی قبل از اعلام گرسنگی
    """

    def __init__(self, strategy=None, threads=1, tracer=None, watchdog_polls=config.WATCHDOG_POLLS):
        self.strategy = strategy or Strategy()
        self.threads = threads
        self.tracer = tracer or Tracer(enabled=False)
        self.pool = Pool(threads, strict_groups=self.strategy.strict_groups, on_error=self.abort)
        self.outcomes = OutcomeTable()
        self.pending = PendingQueue()
        self.watchdog = StarvationWatchdog(watchdog_polls)
        self.stats = RuntimeStats()
        self._stats_lock = threading.Lock()
        self._spawned_ids = set()
        self._fused_kernels = {}
        self._merge_batches = AtomicCounter(0)
        self._execution_counts = {}
        self._closed = False
        logger.info(f"runtime با استراتژی {self.strategy.name} و {threads} نخ ساخته شد")

    # ===== مدیریت چرخه حیات =====

    def abort(self, error):
        if self.pool.aborted is None:
            logger.error(f"توقف اجرا: {error}")
        self.pool.abort(error)

    @property
    def aborted(self):
        return self.pool.aborted

    def _check_abort(self):
        error = self.pool.aborted
        if error is None:
            return
        if isinstance(error, StarvationError):
            raise StarvationError(str(error))
        raise SchedulingError(f"runtime aborted: {error}") from error

    def shutdown(self):
        if self._closed:
            return
        self._closed = True
        self.pool.shutdown()
        logger.debug("runtime متوقف شد")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
        return False

    def register_fused_kernel(self, task_type, kernel):
        """kernel(tasks) فهرست نتایج را به همان ترتیب تسک‌ها برمی‌گرداند"""
        self._fused_kernels[task_type] = kernel

    def execution_count(self, task_id):
        with self._stats_lock:
            return self._execution_counts.get(task_id, 0)

    def end_step(self):
        """مرز گام: شناسه‌های تسک‌های گام تمام‌شده از دفترها پاک می‌شوند"""
        if len(self.pending):
            raise SchedulingError(f"step ended with {len(self.pending)} pending tasks")
        with self._stats_lock:
            self._spawned_ids.clear()
            self._execution_counts.clear()
        self.outcomes.forget_retired()

    @property
    def tracked_task_ids(self):
        """اندازه دفترها: (شناسه‌های spawn شده، شمارنده‌های اجرا، نتایج برداشته‌شده)"""
        with self._stats_lock:
            sizes = len(self._spawned_ids), len(self._execution_counts)
        return (*sizes, self.outcomes.retired_count)

    def begin_sweep(self):
        """شروع یک بخش جدید؛ سهمیه دسته‌های ادغام صفر می‌شود"""
        self._merge_batches.reset()

    def probe(self):
        return len(self.pending), self.pool.ready_enclaves, self.pool.active_traversals

    def record_samples(self):
        self.tracer.record_samples(*self.probe())

    # ===== اجرای تسک =====

    def _count(self, field_name, amount=1):
        with self._stats_lock:
            setattr(self.stats, field_name, getattr(self.stats, field_name) + amount)

    def _complete(self, task, result):
        with self._stats_lock:
            self._execution_counts[task.task_id] = self._execution_counts.get(task.task_id, 0) + 1
            self.stats.executed += 1
        if task.on_complete is not None:
            task.on_complete(result)
        self.outcomes.insert(task.task_id, result)
        self.tracer.record(EventKind.TASK_END, task.task_id)
        self.watchdog.progress()

    def _execute_task(self, task):
        try:
            self.tracer.record(EventKind.TASK_START, task.task_id)
            result = task.run()
            self._complete(task, result)
        except BaseException as e:
            self.abort(e)
            raise

    def _execute_fused(self, task_type, tasks):
        kernel = self._fused_kernels[task_type]
        try:
            for task in tasks:
                task.claim()
                self.tracer.record(EventKind.TASK_START, task.task_id)
            results = kernel(tasks)
            if len(results) != len(tasks):
                raise SchedulingError(f"fused kernel returned {len(results)} results for {len(tasks)} tasks")
            for task, result in zip(tasks, results):
                self._complete(task, result)
        except BaseException as e:
            self.abort(e)
            raise
        with self._stats_lock:
            self.stats.fused_batches += 1
            self.stats.fused_tasks += len(tasks)

    # ===== عملیات استراتژی =====

    def spawn_enclave(self, task):
        """ایجاد تسک enclave از داخل یک تسک پیمایش"""
        with self._stats_lock:
            if task.task_id in self._spawned_ids:
                raise DuplicateTaskError(f"task id {task.task_id} spawned twice")
            self._spawned_ids.add(task.task_id)
            self.stats.spawned += 1
        self.tracer.record(EventKind.SPAWN, task.task_id)
        if self.strategy.holds_back:
            self.pending.push(task)
            return
        enqueued = self.pool.try_enqueue_enclave(lambda: self._execute_task(task), self.strategy.ready_cap)
        if not enqueued:
            self._count("inline")
            self._execute_task(task)

    def _spin(self, task_id=None):
        started = time.perf_counter_ns()
        time.sleep(0)
        self.tracer.record(EventKind.POLL_SPIN, task_id or 0, time.perf_counter_ns() - started)
        self._count("spins")

    def yield_once(self):
        """یک نقطه taskyield: اجرای یک تسک آماده یا یک دور چرخش"""
        if self.strategy.strict_groups:
            group = current_group()
            ran = self.pool.run_one(lambda item: item.kind is ItemKind.TRAVERSAL and item.group is group)
        else:
            ran = self.pool.run_one()
        if ran:
            return YieldResult.RAN_TASK
        self._spin()
        return YieldResult.SPUN

    def wait_for_outcome(self, task_id):
        """انتظار فعال برای نتیجه یک تسک و برداشتن آن از جدول"""
        while True:
            result = self.outcomes.try_take(task_id)
            if result is not MISSING:
                return result
            self._check_abort()
            if not self.strategy.holds_back:
                productive = self.yield_once() is YieldResult.RAN_TASK
            elif self.strategy.merges:
                productive = self.process_pending_tasks() > 0
            else:
                productive = self.process_pending_tasks(batch_hint=1) > 0
            if productive:
                continue
            if self.strategy.holds_back:
                self._spin(task_id)
            try:
                self.watchdog.unproductive(task_id)
            except StarvationError as e:
                self.abort(e)
                raise

    def process_pending_tasks(self, batch_hint=None):
        """برداشتن و اجرای تسک‌های معلق

        بدون batch_hint تعداد ⌈pending·merge_fraction⌉ تسک برداشته می‌شود.

        Returns:
            int: تعداد تسک‌های اجرا شده
        """
        pending = len(self.pending)
        if pending == 0:
            return 0
        if batch_hint is None:
            batch_hint = math.ceil(pending * self.strategy.merge_fraction)
        tasks = self.pending.pop_many(batch_hint)
        if not tasks:
            return 0
        if self.strategy.merges:
            self._run_merged(tasks)
        else:
            for task in tasks:
                self._execute_task(task)
        return len(tasks)

    def _run_merged(self, tasks):
        groups = {}
        for task in tasks:
            groups.setdefault(task.task_type, []).append(task)
        cap = self.strategy.max_merge_batches_per_sweep
        for task_type, group in groups.items():
            fusable = task_type in self._fused_kernels and len(group) >= self.strategy.merge_min_batch
            if fusable and self._merge_batches.increment_below(cap):
                self._execute_fused(task_type, group)
            else:
                for task in group:
                    self._execute_task(task)

    def run_bsp_section(self, fns):
        """اجرای یک بخش BSP با یک تسک پیمایش برای هر قطعه

        native با yield منصفانه پس از پایان پیمایش‌ها صف آماده را هم خالی می‌کند.
        """
        self.begin_sweep()
        if self.strategy.backfills:
            return self.run_bsp_backfill(fns)
        drain = not self.strategy.holds_back and not self.strategy.strict_groups
        group = self.pool.submit_group(list(fns))
        try:
            self.pool.wait_group(group, drain=drain)
        except BaseException as e:
            self.abort(e)
            raise

    def run_bsp_backfill(self, fns):
        """backfill دستی: نخ‌هایی که زودتر تمام می‌کنند تسک‌های معلق را اجرا می‌کنند"""
        fns = list(fns)
        slot_count = max(self.threads, len(fns))
        busy = AtomicCounter(slot_count)

        def slot(i):
            try:
                if i < len(fns):
                    fns[i]()
            finally:
                busy.decrement()
                self._count("backfill_decrements")
            while 0 < busy.value < self.threads:
                self._check_abort()
                if self.process_pending_tasks() == 0:
                    self._spin()

        self._count("backfill_slots", slot_count)
        group = self.pool.submit_group([lambda i=i: slot(i) for i in range(slot_count)])
        try:
            self.pool.wait_group(group)
        except BaseException as e:
            self.abort(e)
            raise

    def taskwait_all(self):
        """taskwait نهایی: بستن گروه‌ها، انتظار برای صف pool و اجرای همه تسک‌های معلق باقیمانده"""
        self.pool.close_groups()
        self.pool.wait_idle()
        while len(self.pending):
            self.process_pending_tasks(batch_hint=len(self.pending))
        self._check_abort()
