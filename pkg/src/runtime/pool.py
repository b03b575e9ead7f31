"""
مخزن نخ‌های کارگر با یک صف آماده سراسری FIFO
مدلی از runtime تسک‌بندی: گروه‌های تسک پیمایش، تسک‌های enclave آماده
و حالت strict-group که در آن نقاط زمان‌بندی فقط تسک‌های گروه باز را انتخاب می‌کنند
"""
import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum

from ..services.trace import set_worker_id

logger = logging.getLogger(__name__)

_group_ids = itertools.count(1)
_local = threading.local()


class ItemKind(Enum):
    TRAVERSAL = "traversal"
    ENCLAVE = "enclave"


class TaskGroup:
    """گروهی از تسک‌های پیمایش که با هم منتظرشان می‌مانیم"""

    def __init__(self, size):
        self.group_id = next(_group_ids)
        self.size = size
        self.remaining = size
        self.error = None

    @property
    def done(self):
        return self.remaining == 0


@dataclass
class WorkItem:
    kind: ItemKind
    fn: object
    group: TaskGroup = None


def current_group():
    """گروه تسک پیمایشی که نخ جاری در حال اجرای آن است"""
    stack = getattr(_local, "groups", None)
    return stack[-1] if stack else None


class Pool:
    """T نخ کارگر با شناسه‌های 0..T-1

    Args:
        threads: تعداد نخ‌ها
        strict_groups: اگر True باشد تا وقتی گروهی باز است کارگرهای بیکار فقط
            تسک‌های پیمایش همان گروه را برمی‌دارند
        on_error: تابعی که برای خطای تسک‌های بدون گروه صدا زده می‌شود
    """

    def __init__(self, threads, strict_groups=False, on_error=None):
        if threads < 1:
            raise ValueError(f"thread count must be >= 1, got {threads}")
        self.threads = threads
        self.strict_groups = strict_groups
        self.on_error = on_error
        self._ready = deque()
        self._cond = threading.Condition()
        self._open_group = None
        self._ready_enclaves = 0
        self._active = 0
        self._active_traversals = 0
        self._aborted = None
        self._shutdown = False
        self._workers = []
        for worker_id in range(threads):
            worker = threading.Thread(
                target=self._worker_loop, args=(worker_id,), name=f"taskbench-worker-{worker_id}", daemon=True
            )
            self._workers.append(worker)
            worker.start()
        logger.debug(f"pool با {threads} نخ راه‌اندازی شد")

    # ===== شمارنده‌ها =====

    @property
    def ready_enclaves(self):
        return self._ready_enclaves

    @property
    def active_traversals(self):
        return self._active_traversals

    # ===== انتخاب و اجرای تسک =====

    def _selectable(self, item):
        # مدل strict-group: تا گروهی باز است هیچ کارگری enclave برنمی‌دارد و taskwait هم صف را
        # خالی نمی‌کند؛ پس هر اجرای دارای enclave در این حالت گرسنه می‌ماند، حتی با قطعه‌ها ≤ نخ‌ها
        if self.strict_groups and self._open_group is not None:
            return item.kind is ItemKind.TRAVERSAL and item.group is self._open_group
        return True

    def _pop_matching(self, predicate):
        for position, item in enumerate(self._ready):
            if predicate(item):
                del self._ready[position]
                if item.kind is ItemKind.ENCLAVE:
                    self._ready_enclaves -= 1
                self._active += 1
                if item.kind is ItemKind.TRAVERSAL:
                    self._active_traversals += 1
                return item
        return None

    def _execute(self, item):
        error = None
        if item.group is not None:
            _local.groups = getattr(_local, "groups", [])
            _local.groups.append(item.group)
        try:
            item.fn()
        except BaseException as e:
            error = e
        finally:
            if item.group is not None:
                _local.groups.pop()
        if error is not None and item.group is None and self.on_error is not None:
            self.on_error(error)
        with self._cond:
            self._active -= 1
            if item.kind is ItemKind.TRAVERSAL:
                self._active_traversals -= 1
            if item.group is not None:
                if error is not None and item.group.error is None:
                    item.group.error = error
                item.group.remaining -= 1
            self._cond.notify_all()

    def _worker_loop(self, worker_id):
        set_worker_id(worker_id)
        while True:
            with self._cond:
                item = None
                while not self._shutdown:
                    item = self._pop_matching(self._selectable)
                    if item is not None:
                        break
                    self._cond.wait()
                if item is None:
                    return
            self._execute(item)

    def run_one(self, predicate=None):
        """اجرای یک تسک آماده روی نخ فراخواننده (نقطه taskyield)"""
        with self._cond:
            item = self._pop_matching(predicate or (lambda item: True))
        if item is None:
            return False
        self._execute(item)
        return True

    # ===== ارسال کار =====

    def submit_group(self, fns):
        """ارسال یک گروه تسک پیمایش؛ در حالت strict این گروه، گروه باز می‌شود"""
        group = TaskGroup(len(fns))
        with self._cond:
            for fn in fns:
                self._ready.append(WorkItem(ItemKind.TRAVERSAL, fn, group))
            if self.strict_groups:
                self._open_group = group
            self._cond.notify_all()
        return group

    def try_enqueue_enclave(self, fn, cap):
        """صف کردن تسک enclave اگر تعداد آماده‌ها کمتر از cap باشد"""
        with self._cond:
            if self._ready_enclaves >= cap:
                return False
            self._ready.append(WorkItem(ItemKind.ENCLAVE, fn))
            self._ready_enclaves += 1
            self._cond.notify_all()
            return True

    def close_groups(self):
        with self._cond:
            self._open_group = None
            self._cond.notify_all()

    # ===== انتظار =====

    def _raise_if_aborted(self):
        if self._aborted is not None:
            raise self._aborted

    def wait_group(self, group, drain=False):
        """انتظار برای اتمام همه تسک‌های گروه؛ با drain صف آماده نیز خالی می‌شود"""
        with self._cond:
            while not group.done and group.error is None and self._aborted is None:
                self._cond.wait()
            self._raise_if_aborted()
            if group.error is not None:
                raise group.error
            if drain:
                while (self._ready or self._active) and self._aborted is None:
                    self._cond.wait()
                self._raise_if_aborted()

    def wait_idle(self):
        """انتظار تا وقتی هیچ تسک آماده یا در حال اجرایی نماند"""
        with self._cond:
            while (self._ready or self._active) and self._aborted is None:
                self._cond.wait()
            self._raise_if_aborted()

    def abort(self, error):
        with self._cond:
            if self._aborted is None:
                self._aborted = error
            self._cond.notify_all()

    @property
    def aborted(self):
        return self._aborted

    def shutdown(self, timeout=5.0):
        with self._cond:
            self._shutdown = True
            self._ready.clear()
            self._ready_enclaves = 0
            self._cond.notify_all()
        for worker in self._workers:
            worker.join(timeout)
        alive = [w.name for w in self._workers if w.is_alive()]
        if alive:
            logger.warning(f"نخ‌های {', '.join(alive)} پس از shutdown هنوز فعال هستند")
        return not alive
