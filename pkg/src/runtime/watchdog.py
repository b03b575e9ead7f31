"""
watchdog گرسنگی: شمارش poll های بی‌ثمر پیاپی همه مصرف‌کننده‌ها
"""
import logging
import threading

from .errors import StarvationError

logger = logging.getLogger(__name__)


class StarvationWatchdog:
    """هر تکمیل تسک شمارنده را صفر می‌کند؛ عبور از limit یعنی گرسنگی"""

    def __init__(self, limit):
        if limit < 1:
            raise ValueError(f"watchdog limit must be >= 1, got {limit}")
        self.limit = limit
        self._polls = 0
        self._lock = threading.Lock()
        self.tripped = None

    def progress(self):
        with self._lock:
            self._polls = 0

    @property
    def polls(self):
        with self._lock:
            return self._polls

    def unproductive(self, task_id=None):
        """ثبت یک poll بی‌ثمر؛ در صورت عبور از سقف StarvationError"""
        with self._lock:
            if self.tripped is not None:
                raise StarvationError(str(self.tripped))
            self._polls += 1
            if self._polls <= self.limit:
                return
            self.tripped = StarvationError(
                f"starvation: {self._polls} consecutive unproductive polls across consumers "
                f"(limit {self.limit}) while waiting for enclave task {task_id}; "
                f"enclave tasks are never scheduled"
            )
            logger.error(f"watchdog فعال شد: {self.tripped}")
            raise self.tripped
