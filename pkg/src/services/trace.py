"""
ثبت رویدادهای اجرا با بافرهای محلی هر نخ و محاسبه معیارهای هر گام
(سری زمانی تسک‌های معلق، تعداد تسک‌های BSP فعال، زمان چرخش، زمان هر گام و پچ)
"""
import bisect
import csv
import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from enum import Enum

logger = logging.getLogger(__name__)

MASTER_WORKER = -1
SAMPLER_WORKER = -2

_identity = threading.local()


def set_worker_id(worker_id):
    _identity.worker_id = worker_id


def current_worker_id():
    return getattr(_identity, "worker_id", MASTER_WORKER)


class TraceError(Exception):
    """رویدادهای نامتوازن یا فایل ردیابی نامعتبر"""


class EventKind(Enum):
    SPAWN = "spawn"
    TASK_START = "task_start"
    TASK_END = "task_end"
    SECTION_START = "section_start"
    SECTION_END = "section_end"
    POLL_SPIN = "poll_spin"
    SAMPLE = "sample"


class Phase:
    """کد فاز در فیلد aux رویدادهای بخش"""
    BSP = 0
    PRIMARY = 1
    SECONDARY = 2
    STEP = 3
    FINALISE = 4


class Channel:
    """کانال نمونه‌ها در فیلد id رویدادهای sample"""
    PENDING = 0
    READY = 1
    ACTIVE_BSP = 2


@dataclass(frozen=True)
class Event:
    t_ns: int
    worker: int
    kind: EventKind
    id: int = 0
    aux: int = 0


EVENT_COLUMNS = ["t_ns", "worker", "kind", "id", "aux"]
SUMMARY_COLUMNS = ["step", "primary_ns", "secondary_ns", "wall_ns", "peak_pending", "spin_fraction"]


class Tracer:
    """ثبت‌کننده رویداد با یک بافر append-only برای هر نخ

    در حالت غیرفعال record هیچ کاری انجام نمی‌دهد.
    """

    def __init__(self, enabled=True):
        self.enabled = enabled
        self._local = threading.local()
        self._buffers = []
        self._lock = threading.Lock()

    def _buffer(self):
        buffer = getattr(self._local, "buffer", None)
        if buffer is None:
            buffer = []
            self._local.buffer = buffer
            with self._lock:
                self._buffers.append(buffer)
        return buffer

    def record(self, kind, id=0, aux=0):
        if not self.enabled:
            return
        self._buffer().append((time.perf_counter_ns(), current_worker_id(), kind, id, aux))

    def record_samples(self, pending, ready, active_bsp):
        if not self.enabled:
            return
        t_ns = time.perf_counter_ns()
        worker = current_worker_id()
        buffer = self._buffer()
        buffer.append((t_ns, worker, EventKind.SAMPLE, Channel.PENDING, pending))
        buffer.append((t_ns, worker, EventKind.SAMPLE, Channel.READY, ready))
        buffer.append((t_ns, worker, EventKind.SAMPLE, Channel.ACTIVE_BSP, active_bsp))

    @contextmanager
    def section(self, step, phase):
        self.record(EventKind.SECTION_START, step, phase)
        try:
            yield
        finally:
            self.record(EventKind.SECTION_END, step, phase)

    def events(self):
        """ادغام بافرها به ترتیب زمانی؛ ترتیب هر نخ حفظ می‌شود"""
        with self._lock:
            raw = [entry for buffer in self._buffers for entry in list(buffer)]
        raw.sort(key=lambda entry: entry[0])
        return [Event(*entry) for entry in raw]


class Sampler:
    """نخ ناظر که به صورت دوره‌ای تعداد معلق/آماده/BSP فعال را نمونه‌برداری می‌کند

    probe باید سه‌تایی (pending, ready, active_bsp) برگرداند.
    """

    def __init__(self, tracer, probe, period_us):
        self.tracer = tracer
        self.probe = probe
        self.period_s = period_us / 1e6
        self._stop = threading.Event()
        self._thread = None

    def _loop(self):
        set_worker_id(SAMPLER_WORKER)
        while not self._stop.is_set():
            self.tracer.record_samples(*self.probe())
            self._stop.wait(self.period_s)

    def start(self):
        if self._thread is not None or not self.tracer.enabled:
            return self
        self._thread = threading.Thread(target=self._loop, name="taskbench-sampler", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._thread is None:
            return
        self._stop.set()
        self._thread.join()
        self._thread = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
        return False


# ===== خلاصه‌سازی =====

@dataclass
class StepSummary:
    step: int
    primary_ns: int
    secondary_ns: int
    wall_ns: int
    peak_pending: int
    spin_fraction: float


@dataclass
class Summary:
    steps: list
    total_wall_ns: int
    time_per_step_per_patch: float
    peak_pending: int
    peak_ready: int
    peak_active_bsp: int
    spin_fraction_per_worker: dict = field(default_factory=dict)
    task_count: int = 0

    @property
    def step_count(self):
        return len(self.steps)

    def to_dict(self):
        data = asdict(self)
        data["spin_fraction_per_worker"] = {str(k): v for k, v in self.spin_fraction_per_worker.items()}
        return data


def _section_intervals(events):
    """جفت کردن شروع و پایان بخش‌ها بر اساس (گام، فاز)"""
    open_sections = {}
    intervals = {}
    for event in events:
        key = (event.id, event.aux)
        if event.kind is EventKind.SECTION_START:
            if key in open_sections:
                raise TraceError(f"section step={event.id} phase={event.aux} started twice")
            open_sections[key] = event.t_ns
        elif event.kind is EventKind.SECTION_END:
            if key not in open_sections:
                raise TraceError(f"section step={event.id} phase={event.aux} ended without start")
            start = open_sections.pop(key)
            intervals.setdefault(key, []).append((start, event.t_ns))
    if open_sections:
        step, phase = next(iter(open_sections))
        raise TraceError(f"section step={step} phase={phase} never ended")
    return intervals


def _check_tasks(events):
    started = {}
    ended = {}
    for event in events:
        if event.kind is EventKind.TASK_START:
            started[event.id] = started.get(event.id, 0) + 1
        elif event.kind is EventKind.TASK_END:
            ended[event.id] = ended.get(event.id, 0) + 1
    for task_id in set(started) | set(ended):
        if started.get(task_id, 0) != 1 or ended.get(task_id, 0) != 1:
            raise TraceError(
                f"task {task_id}: {started.get(task_id, 0)} starts, {ended.get(task_id, 0)} ends"
            )
    return len(started)


def _duration(intervals, key):
    return sum(end - start for start, end in intervals.get(key, []))


class _StepWindows:
    """بازه‌های گام مرتب بر اساس زمان شروع؛ بازه‌ها هم‌پوشانی ندارند"""

    def __init__(self, windows):
        self._windows = sorted(windows)
        self._starts = [start for start, _, _ in self._windows]

    def row_of(self, t_ns):
        position = bisect.bisect_right(self._starts, t_ns) - 1
        if position < 0:
            return None
        _, end, row = self._windows[position]
        return row if t_ns <= end else None


def summarize(events, patch_count):
    """محاسبه خلاصه اجرا از رویدادها در یک پیمایش

    Args:
        events: فهرست Event
        patch_count: تعداد پچ‌ها (M²)
    """
    intervals = _section_intervals(events)
    task_count = _check_tasks(events)
    step_ids = sorted(step for step, phase in intervals if phase == Phase.STEP)
    bounds = [intervals[(step, Phase.STEP)][0] for step in step_ids]
    windows = _StepWindows((start, end, row) for row, (start, end) in enumerate(bounds))

    step_peaks = [0] * len(step_ids)
    step_spins = [0] * len(step_ids)
    channel_peaks = {Channel.PENDING: 0, Channel.READY: 0, Channel.ACTIVE_BSP: 0}
    worker_spins = {}
    workers = set()
    for event in events:
        if event.worker >= 0:
            workers.add(event.worker)
        if event.kind is EventKind.SAMPLE:
            channel_peaks[event.id] = max(channel_peaks.get(event.id, 0), event.aux)
            if event.id == Channel.PENDING:
                row = windows.row_of(event.t_ns)
                if row is not None:
                    step_peaks[row] = max(step_peaks[row], event.aux)
        elif event.kind is EventKind.POLL_SPIN:
            worker_spins[event.worker] = worker_spins.get(event.worker, 0) + event.aux
            row = windows.row_of(event.t_ns)
            if row is not None:
                step_spins[row] += event.aux

    steps = []
    total_wall = 0
    for row, step in enumerate(step_ids):
        start, end = bounds[row]
        wall = end - start
        total_wall += wall
        primary = _duration(intervals, (step, Phase.PRIMARY)) + _duration(intervals, (step, Phase.BSP))
        secondary = _duration(intervals, (step, Phase.SECONDARY))
        capacity = wall * max(len(workers), 1)
        spin_fraction = min(1.0, step_spins[row] / capacity) if capacity > 0 else 0.0
        steps.append(StepSummary(step, primary, secondary, wall, step_peaks[row], spin_fraction))

    per_worker = {}
    if total_wall > 0:
        for worker in sorted(workers):
            per_worker[worker] = min(1.0, worker_spins.get(worker, 0) / total_wall)

    denominator = len(steps) * patch_count
    time_per_step_per_patch = (total_wall / 1e9) / denominator if denominator else 0.0
    return Summary(
        steps=steps,
        total_wall_ns=total_wall,
        time_per_step_per_patch=time_per_step_per_patch,
        peak_pending=channel_peaks[Channel.PENDING],
        peak_ready=channel_peaks[Channel.READY],
        peak_active_bsp=channel_peaks[Channel.ACTIVE_BSP],
        spin_fraction_per_worker=per_worker,
        task_count=task_count,
    )


# ===== فایل‌های CSV =====

def write_events_csv(events, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(EVENT_COLUMNS)
        for event in events:
            writer.writerow([event.t_ns, event.worker, event.kind.value, event.id, event.aux])
    logger.info(f"{len(events)} رویداد در {path} ذخیره شد")


def read_events_csv(path):
    events = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != EVENT_COLUMNS:
            raise TraceError(f"{path}: unexpected header {header}")
        for row in reader:
            t_ns, worker, kind, event_id, aux = row
            events.append(Event(int(t_ns), int(worker), EventKind(kind), int(event_id), int(aux)))
    return events


def write_summary_csv(summary, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summary.steps:
            writer.writerow([s.step, s.primary_ns, s.secondary_ns, s.wall_ns, s.peak_pending, repr(s.spin_fraction)])
