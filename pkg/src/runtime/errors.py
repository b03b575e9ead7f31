"""
خطاهای لایه زمان‌بندی
"""


class SchedulingError(Exception):
    """خطای پایه زمان‌بند"""


class StrategyError(SchedulingError):
    """پیکربندی نامعتبر استراتژی"""


class DuplicateTaskError(SchedulingError):
    """شناسه تسک تکراری"""


class DuplicateOutcomeError(SchedulingError):
    """درج دوباره نتیجه یک تسک"""


class TaskExecutionError(SchedulingError):
    """اجرای دوباره payload یک تسک"""


class StarvationError(SchedulingError):
    """توقف اجرا توسط watchdog به دلیل گرسنگی مصرف‌کننده‌ها"""
