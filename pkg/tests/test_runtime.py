import threading
import time

import pytest

from src.runtime.errors import (
    DuplicateOutcomeError,
    DuplicateTaskError,
    SchedulingError,
    StarvationError,
    StrategyError,
    TaskExecutionError,
)
from src.runtime.pool import Pool
from src.runtime.scheduler import YieldResult
from src.runtime.strategy import Strategy, StrategyKind, YieldMode
from src.runtime.tasks import MISSING, AtomicCounter, EnclaveTask, OutcomeTable, PendingQueue
from src.runtime.watchdog import StarvationWatchdog
from src.services.trace import EventKind


def square_task(value, task_type=0):
    return EnclaveTask(task_type, lambda v: v * v, (value,))


def wait_until_busy(runtime, timeout=5.0):
    """انتظار تا وقتی یک کارگر تسک پیمایش مسدودکننده را برداشته باشد"""
    deadline = time.monotonic() + timeout
    while runtime.pool.active_traversals == 0:
        assert time.monotonic() < deadline
        time.sleep(0.001)


# ===== استراتژی =====

def test_strategy_from_cli_name():
    assert Strategy.from_name("hold-back").kind is StrategyKind.HOLD_BACK
    assert Strategy.from_name("merge-and-backfill").merges


def test_strategy_rejects_unknown_name_with_vocabulary():
    with pytest.raises(StrategyError) as info:
        Strategy.from_name("holdback")
    for name in ("native", "hold-back", "backfill", "merge-and-backfill"):
        assert name in str(info.value)


def test_strategy_validation():
    with pytest.raises(StrategyError):
        Strategy(ready_cap=0)
    with pytest.raises(StrategyError):
        Strategy(merge_fraction=0.0)
    with pytest.raises(StrategyError):
        Strategy(merge_fraction=1.5)
    assert Strategy(yield_mode="strict-group").yield_mode is YieldMode.STRICT_GROUP


# ===== ساختارهای مشترک =====

def test_task_ids_are_unique_and_positive():
    ids = {EnclaveTask(0, int).task_id for _ in range(100)}
    assert len(ids) == 100
    assert min(ids) >= 1


def test_task_runs_only_once():
    task = square_task(3)
    assert task.run() == 9
    with pytest.raises(TaskExecutionError):
        task.run()


def test_outcome_insert_then_take():
    table = OutcomeTable()
    table.insert(5, ("data", 1.5))
    assert table.take(5) == ("data", 1.5)
    assert table.try_take(5) is MISSING


def test_outcome_double_insert_rejected():
    table = OutcomeTable()
    table.insert(1, "a")
    with pytest.raises(DuplicateOutcomeError):
        table.insert(1, "b")
    table.take(1)
    with pytest.raises(DuplicateOutcomeError):
        table.insert(1, "c")


def test_outcome_take_of_absent_id():
    with pytest.raises(SchedulingError):
        OutcomeTable().take(42)


def test_concurrent_outcome_inserts():
    table = OutcomeTable()

    def insert_range(start):
        for task_id in range(start, start + 250):
            table.insert(task_id, task_id * 2)

    threads = [threading.Thread(target=insert_range, args=(1 + 250 * k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(table) == 1000
    assert all(table.take(task_id) == task_id * 2 for task_id in range(1, 1001))


def test_pending_queue_fifo_and_peak():
    queue = PendingQueue()
    tasks = [square_task(k) for k in range(5)]
    for task in tasks:
        queue.push(task)
    assert queue.pop_many(1) == tasks[:1]
    assert queue.pop_many(10) == tasks[1:]
    assert queue.pop_many(3) == []
    assert queue.peak == 5
    assert len(queue) == 0


def test_outcome_table_forgets_retired_ids():
    table = OutcomeTable()
    table.insert(1, "a")
    table.insert(2, "b")
    assert table.take(1) == "a"
    assert table.retired_count == 1
    table.forget_retired()
    assert table.retired_count == 0
    with pytest.raises(DuplicateOutcomeError):
        table.insert(2, "again")
    assert table.take(2) == "b"


def test_atomic_counter():
    counter = AtomicCounter(3)
    assert counter.decrement() == 2
    assert counter.increment() == 3
    assert not counter.increment_below(3)
    counter.reset(2)
    assert counter.increment_below(3)
    assert not counter.increment_below(3)
    assert counter.value == 3


def test_watchdog_resets_on_progress():
    watchdog = StarvationWatchdog(3)
    for _ in range(3):
        watchdog.unproductive()
    watchdog.progress()
    for _ in range(3):
        watchdog.unproductive()
    with pytest.raises(StarvationError, match="starvation"):
        watchdog.unproductive()


# ===== pool =====

def test_pool_rejects_zero_threads():
    with pytest.raises(ValueError):
        Pool(0)


def test_pool_single_thread_runs_everything(make_runtime):
    runtime = make_runtime("native", threads=1)
    done = []
    runtime.run_bsp_section([lambda k=k: done.append(k) for k in range(5)])
    assert sorted(done) == [0, 1, 2, 3, 4]


def test_pool_uses_all_workers(make_runtime):
    runtime = make_runtime("native", threads=4, trace=True)
    barrier = threading.Barrier(4, timeout=10)
    runtime.run_bsp_section([barrier.wait for _ in range(4)])
    assert runtime.pool.shutdown()


def test_section_propagates_failure(make_runtime):
    runtime = make_runtime("native", threads=2)

    def boom():
        raise ValueError("traversal failed")

    with pytest.raises(ValueError, match="traversal failed"):
        runtime.run_bsp_section([boom, lambda: None])


# ===== spawn =====

def test_native_spawn_below_cap_enqueues(make_runtime):
    runtime = make_runtime("native", threads=1, ready_cap=100)
    gate = threading.Event()
    runtime.pool.submit_group([gate.wait])
    wait_until_busy(runtime)
    for k in range(99):
        runtime.spawn_enclave(square_task(k))
    assert runtime.pool.ready_enclaves == 99
    runtime.spawn_enclave(square_task(99))
    assert runtime.pool.ready_enclaves == 100
    assert runtime.stats.inline == 0
    gate.set()
    runtime.taskwait_all()


def test_native_spawn_at_cap_runs_inline(make_runtime):
    runtime = make_runtime("native", threads=1, ready_cap=100)
    gate = threading.Event()
    runtime.pool.submit_group([gate.wait])
    wait_until_busy(runtime)
    for k in range(100):
        runtime.spawn_enclave(square_task(k))
    extra = square_task(12)
    runtime.spawn_enclave(extra)
    assert runtime.execution_count(extra.task_id) == 1
    assert runtime.pool.ready_enclaves == 100
    assert runtime.stats.inline == 1
    gate.set()
    runtime.taskwait_all()


def test_hold_back_spawn_only_grows_pending(make_runtime):
    runtime = make_runtime("hold-back", threads=2)
    for k in range(7):
        runtime.spawn_enclave(square_task(k))
    assert len(runtime.pending) == 7
    assert runtime.pool.ready_enclaves == 0
    runtime.taskwait_all()
    assert len(runtime.pending) == 0
    assert runtime.stats.executed == 7


def test_duplicate_spawn_rejected(make_runtime):
    runtime = make_runtime("hold-back")
    task = square_task(2)
    runtime.spawn_enclave(task)
    with pytest.raises(DuplicateTaskError):
        runtime.spawn_enclave(task)


# ===== انتظار برای نتیجه =====

def test_wait_for_present_outcome_returns_immediately(make_runtime):
    runtime = make_runtime("hold-back")
    task = square_task(4)
    runtime.spawn_enclave(task)
    runtime.process_pending_tasks(batch_hint=1)
    spins = runtime.stats.spins
    assert runtime.wait_for_outcome(task.task_id) == 16
    assert runtime.stats.spins == spins


def test_hold_back_wait_executes_pending_work(make_runtime):
    runtime = make_runtime("hold-back")
    tasks = [square_task(k) for k in range(3)]
    for task in tasks:
        runtime.spawn_enclave(task)
    assert runtime.wait_for_outcome(tasks[2].task_id) == 4
    assert runtime.stats.executed == 3


def test_yield_once_fair_runs_ready_enclave(make_runtime):
    runtime = make_runtime("native", threads=1)
    gate = threading.Event()
    runtime.pool.submit_group([gate.wait])
    wait_until_busy(runtime)
    task = square_task(5)
    runtime.spawn_enclave(task)
    assert runtime.yield_once() is YieldResult.RAN_TASK
    assert runtime.execution_count(task.task_id) == 1
    assert runtime.yield_once() is YieldResult.SPUN
    gate.set()
    runtime.taskwait_all()


def test_yield_once_strict_group_skips_enclaves(make_runtime):
    runtime = make_runtime("native", threads=1, yield_mode="strict-group")
    gate = threading.Event()
    runtime.pool.submit_group([gate.wait])
    wait_until_busy(runtime)
    runtime.spawn_enclave(square_task(5))
    assert runtime.yield_once() is YieldResult.SPUN
    assert runtime.pool.ready_enclaves == 1
    gate.set()
    runtime.taskwait_all()
    assert runtime.stats.executed == 1


def test_yield_once_on_empty_queue_spins(make_runtime):
    for mode in ("fair", "strict-group"):
        runtime = make_runtime("native", threads=1, yield_mode=mode)
        assert runtime.yield_once() is YieldResult.SPUN


def test_strict_group_consumers_starve(make_runtime):
    runtime = make_runtime("native", threads=2, yield_mode="strict-group", watchdog_polls=2000)
    tasks = [square_task(k) for k in range(4)]

    def producer():
        for task in tasks:
            runtime.spawn_enclave(task)

    def consumer(task):
        return lambda: runtime.wait_for_outcome(task.task_id)

    runtime.run_bsp_section([producer])
    with pytest.raises(StarvationError, match="starvation"):
        runtime.run_bsp_section([consumer(task) for task in tasks])


def test_fair_consumers_complete(make_runtime):
    runtime = make_runtime("native", threads=2, watchdog_polls=2000)
    tasks = [square_task(k) for k in range(4)]
    results = {}

    def producer():
        for task in tasks:
            runtime.spawn_enclave(task)

    def consumer(task):
        def run():
            results[task.task_id] = runtime.wait_for_outcome(task.task_id)
        return run

    runtime.run_bsp_section([producer])
    runtime.run_bsp_section([consumer(task) for task in tasks])
    runtime.taskwait_all()
    assert sorted(results.values()) == [0, 1, 4, 9]


# ===== پردازش تسک‌های معلق =====

def test_process_pending_takes_half(make_runtime):
    runtime = make_runtime("backfill")
    for k in range(10):
        runtime.spawn_enclave(square_task(k))
    assert runtime.process_pending_tasks() == 5
    assert runtime.process_pending_tasks() == 3
    assert runtime.process_pending_tasks() == 1
    assert runtime.process_pending_tasks() == 1
    assert runtime.process_pending_tasks() == 0


def test_merge_cap_fuses_one_batch(make_runtime):
    runtime = make_runtime("merge-and-backfill", max_merge_batches_per_sweep=1)
    batches = []

    def fused(tasks):
        batches.append(len(tasks))
        return [task.payload(*task.args) for task in tasks]

    runtime.register_fused_kernel(0, fused)
    tasks = [square_task(k) for k in range(8)]
    for task in tasks:
        runtime.spawn_enclave(task)
    assert runtime.process_pending_tasks() == 4
    assert batches == [4]
    assert runtime.process_pending_tasks() == 2
    assert batches == [4]
    runtime.taskwait_all()
    assert [runtime.outcomes.take(t.task_id) for t in tasks] == [k * k for k in range(8)]
    assert runtime.stats.fused_batches == 1


def test_merge_groups_by_task_type(make_runtime):
    runtime = make_runtime("merge-and-backfill")
    seen = []

    def fused(tasks):
        seen.append({task.task_type for task in tasks})
        return [task.payload(*task.args) for task in tasks]

    runtime.register_fused_kernel(0, fused)
    runtime.register_fused_kernel(1, fused)
    for k in range(6):
        runtime.spawn_enclave(square_task(k, task_type=k % 2))
    assert runtime.process_pending_tasks(batch_hint=6) == 6
    assert sorted(map(sorted, seen)) == [[0], [1]]


def test_exactly_once_across_strategies(make_runtime):
    for kind in ("native", "hold-back", "backfill", "merge-and-backfill"):
        runtime = make_runtime(kind, threads=3, ready_cap=5)
        tasks = [square_task(k) for k in range(40)]

        def producer(chunk):
            def run():
                for task in chunk:
                    runtime.spawn_enclave(task)
            return run

        def consumer(chunk):
            def run():
                for task in chunk:
                    runtime.wait_for_outcome(task.task_id)
            return run

        chunks = [tasks[k::4] for k in range(4)]
        runtime.run_bsp_section([producer(chunk) for chunk in chunks])
        runtime.run_bsp_section([consumer(chunk) for chunk in chunks])
        runtime.taskwait_all()
        assert all(runtime.execution_count(task.task_id) == 1 for task in tasks), kind


def test_end_step_clears_task_bookkeeping(make_runtime):
    runtime = make_runtime("hold-back", threads=2)
    for _ in range(3):
        tasks = [square_task(k) for k in range(20)]
        for task in tasks:
            runtime.spawn_enclave(task)
        for task in tasks:
            runtime.wait_for_outcome(task.task_id)
        runtime.taskwait_all()
        assert runtime.tracked_task_ids == (20, 20, 20)
        runtime.end_step()
        assert runtime.tracked_task_ids == (0, 0, 0)
    assert runtime.stats.executed == 60


def test_end_step_rejects_pending_tasks(make_runtime):
    runtime = make_runtime("hold-back")
    runtime.spawn_enclave(square_task(1))
    with pytest.raises(SchedulingError, match="pending"):
        runtime.end_step()
    runtime.taskwait_all()
    runtime.end_step()


# ===== backfill =====

def run_with_timeout(fn, timeout=10.0):
    worker = threading.Thread(target=fn, daemon=True)
    worker.start()
    worker.join(timeout)
    return not worker.is_alive()


@pytest.mark.parametrize("threads", [1, 2, 4, 8])
@pytest.mark.parametrize("pending", [0, 100])
def test_backfill_terminates(make_runtime, threads, pending):
    for bsp_count in sorted({0, 1, threads - 1, threads, 3 * threads}):
        runtime = make_runtime("backfill", threads=threads)
        for k in range(pending):
            runtime.pending.push(square_task(k))
        fns = [lambda: time.sleep(0.001) for _ in range(bsp_count)]
        assert run_with_timeout(lambda: runtime.run_bsp_backfill(fns))
        assert runtime.stats.backfill_decrements == max(threads, bsp_count)
        runtime.taskwait_all()
        assert runtime.stats.executed == pending


def test_backfill_runs_pending_before_section_ends(make_runtime):
    runtime = make_runtime("backfill", threads=4, trace=True)
    for k in range(50):
        runtime.pending.push(square_task(k))
    runtime.tracer.record(EventKind.SECTION_START, 0, 0)
    runtime.run_bsp_backfill([lambda: time.sleep(0.2)])
    runtime.tracer.record(EventKind.SECTION_END, 0, 0)
    assert runtime.stats.executed > 0
    events = runtime.tracer.events()
    section_end = next(e.t_ns for e in events if e.kind is EventKind.SECTION_END)
    ends = [e.t_ns for e in events if e.kind is EventKind.TASK_END]
    assert ends and min(ends) < section_end
