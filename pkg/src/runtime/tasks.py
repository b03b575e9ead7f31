"""
تسک‌های enclave و ساختارهای مشترک بین نخ‌ها:
جدول نتایج، صف تسک‌های معلق و شمارنده اتمیک
"""
import itertools
import logging
import threading
from collections import deque

from .errors import DuplicateOutcomeError, SchedulingError, TaskExecutionError

logger = logging.getLogger(__name__)

_task_ids = itertools.count(1)

MISSING = object()


class EnclaveTask:
    """به‌روزرسانی تعویقی یک پچ enclave

    payload(*args) نتیجه را برمی‌گرداند؛ on_complete پس از اجرا با نتیجه صدا زده می‌شود.
    """

    def __init__(self, task_type, payload, args=(), on_complete=None, task_id=None):
        self.task_id = next(_task_ids) if task_id is None else task_id
        if self.task_id < 1:
            raise SchedulingError(f"task id must be positive, got {self.task_id}")
        self.task_type = task_type
        self.payload = payload
        self.args = tuple(args)
        self.on_complete = on_complete
        self._claimed = False
        self._lock = threading.Lock()

    def claim(self):
        """علامت‌گذاری تسک برای اجرا؛ اجرای دوم مجاز نیست"""
        with self._lock:
            if self._claimed:
                raise TaskExecutionError(f"enclave task {self.task_id} executed twice")
            self._claimed = True

    def run(self):
        self.claim()
        return self.payload(*self.args)

    def __repr__(self):
        return f"EnclaveTask(id={self.task_id}, type={self.task_type})"


class OutcomeTable:
    """جدول task_id → نتیجه با درج یک‌باره"""

    def __init__(self):
        self._data = {}
        self._retired = set()
        self._lock = threading.Lock()

    def insert(self, task_id, result):
        with self._lock:
            if task_id in self._data or task_id in self._retired:
                raise DuplicateOutcomeError(f"outcome for task {task_id} inserted twice")
            self._data[task_id] = result

    def try_take(self, task_id):
        """برداشتن نتیجه در صورت وجود؛ در غیر این صورت MISSING"""
        with self._lock:
            result = self._data.pop(task_id, MISSING)
            if result is not MISSING:
                self._retired.add(task_id)
            return result

    def take(self, task_id):
        result = self.try_take(task_id)
        if result is MISSING:
            raise SchedulingError(f"no outcome for task {task_id}")
        return result

    def forget_retired(self):
        """پاک کردن شناسه‌های برداشته‌شده در مرز گام"""
        with self._lock:
            self._retired.clear()

    @property
    def retired_count(self):
        with self._lock:
            return len(self._retired)

    def __len__(self):
        with self._lock:
            return len(self._data)


class PendingQueue:
    """صف FIFO متمرکز تسک‌های نگه‌داشته‌شده"""

    def __init__(self):
        self._items = deque()
        self._lock = threading.Lock()
        self._peak = 0

    def push(self, task):
        with self._lock:
            self._items.append(task)
            if len(self._items) > self._peak:
                self._peak = len(self._items)

    def pop_many(self, count):
        with self._lock:
            taken = []
            while self._items and len(taken) < count:
                taken.append(self._items.popleft())
            return taken

    @property
    def peak(self):
        with self._lock:
            return self._peak

    def __len__(self):
        return len(self._items)


class AtomicCounter:
    """شمارنده صحیح با عملیات خواندن-تغییر-نوشتن تجزیه‌ناپذیر"""

    def __init__(self, value=0):
        self._value = value
        self._lock = threading.Lock()

    @property
    def value(self):
        with self._lock:
            return self._value

    def increment(self, amount=1):
        with self._lock:
            self._value += amount
            return self._value

    def decrement(self, amount=1):
        with self._lock:
            self._value -= amount
            return self._value

    def increment_below(self, limit):
        """افزایش فقط اگر مقدار فعلی کمتر از limit باشد"""
        with self._lock:
            if self._value >= limit:
                return False
            self._value += 1
            return True

    def reset(self, value=0):
        with self._lock:
            self._value = value
