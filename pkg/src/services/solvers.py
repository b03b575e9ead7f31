"""
حل‌گرهای گام زمانی
bsp: یک بخش BSP در هر گام با یک تسک پیمایش برای هر قطعه
enclave: پیمایش اول (skeleton درجا، enclave به صورت تسک)، تبادل مرزی، پیمایش دوم (بافتن نتایج)
"""
import logging
import os
import sys
import threading
from dataclasses import dataclass, field

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
import config

from ..runtime.tasks import EnclaveTask
from .fv_core import (
    Direction,
    FvCoreError,
    Mesh,
    StaleHaloError,
    admissible_dt,
    assemble_halo,
    initial_state,
    project_to_faces,
    relative_drift,
    update_patch,
    update_patches_batched,
)
from .partition import classify, make_partitions, sfc_order
from .trace import Phase, Sampler, summarize

logger = logging.getLogger(__name__)

SOLVER_NAMES = ["bsp", "enclave"]
PATCH_UPDATE_TASK = 0


class SolverError(FvCoreError):
    """خطای حل‌گر (پیکربندی یا ناسازگاری کاهش سراسری)"""


class MaxReduction:
    """کاهش بیشینه با مقایسه و به‌روزرسانی تجزیه‌ناپذیر"""

    def __init__(self):
        self._value = 0.0
        self._lock = threading.Lock()

    def fold(self, value):
        with self._lock:
            if value > self._value:
                self._value = value

    def reset(self):
        with self._lock:
            self._value = 0.0

    @property
    def value(self):
        with self._lock:
            return self._value


@dataclass
class StepCounts:
    in_place: int = 0
    spawned: int = 0
    woven: int = 0


@dataclass
class SolverState:
    """وضعیت کامل شبیه‌سازی بین گام‌ها"""
    mesh: Mesh
    order: object
    partitions: list
    cell_class: object
    runtime: object
    solver: str = config.SOLVER
    dt: float = 0.0
    step: int = 0
    time: float = 0.0
    debug: bool = False
    lambda_max: MaxReduction = field(default_factory=MaxReduction)
    partition_patches: list = field(default_factory=list)
    task_ids: dict = field(default_factory=dict)
    counts: list = field(default_factory=list)
    finalise_hooks: list = field(default_factory=list)
    halo_generation_offset: int = 0

    @property
    def config(self):
        return self.mesh.config

    @property
    def tracer(self):
        return self.runtime.tracer


def _fused_patch_update(tasks):
    """اجرای یک دسته ادغام‌شده از به‌روزرسانی پچ‌ها"""
    dt, h, gamma = tasks[0].args[1:]
    if any(task.args[1:] != (dt, h, gamma) for task in tasks):
        raise SolverError("fused batch mixes different time-step parameters")
    return update_patches_batched([task.args[0] for task in tasks], dt, h, gamma)


def _check_global_lambda(state):
    serial = state.mesh.global_lambda()
    parallel = state.lambda_max.value
    if serial != parallel:
        raise SolverError(f"global eigenvalue mismatch: parallel {parallel!r}, serial {serial!r}")
    logger.debug(f"گام {state.step}: کاهش سراسری lambda={parallel!r} تایید شد")


def build_state(mesh_config, runtime, partitions=None, balance=config.BALANCE, solver=config.SOLVER,
                debug=False, global_state=None):
    """ساخت شبکه، تقسیم‌بندی و دسته‌بندی پچ‌ها و محاسبه dt اولیه

    Args:
        mesh_config: پیکربندی شبکه
        runtime: Runtime اجرا کننده تسک‌ها
        partitions: تعداد قطعه‌ها (پیش‌فرض تعداد نخ‌ها)
        balance: well یا ill
        solver: bsp یا enclave
        debug: بررسی سریال کاهش سراسری در فاز پایانی هر گام
        global_state: حالت اولیه سراسری (پیش‌فرض قله گاوسی)
    """
    if solver not in SOLVER_NAMES:
        raise SolverError(f"unknown solver {solver!r} (legal: {', '.join(SOLVER_NAMES)})")
    if global_state is None:
        global_state = initial_state(mesh_config)
    mesh = Mesh(mesh_config, global_state)
    order = sfc_order(mesh_config.M)
    parts = make_partitions(order, partitions or runtime.threads, balance)
    cell_class = classify(parts, mesh_config.M, order)
    mesh.assign_owners({patch.index: cell_class.owners[patch.grid_pos] for patch in mesh.patches})
    by_pos = {patch.grid_pos: patch for patch in mesh.patches}
    partition_patches = [[by_pos[order[k]] for k in part.indices()] for part in parts]
    state = SolverState(
        mesh=mesh,
        order=order,
        partitions=parts,
        cell_class=cell_class,
        runtime=runtime,
        solver=solver,
        debug=debug,
        partition_patches=partition_patches,
    )
    state.dt = admissible_dt(mesh.global_lambda(), mesh_config.h, mesh_config.cfl)
    if debug:
        state.finalise_hooks.append(_check_global_lambda)
    runtime.register_fused_kernel(PATCH_UPDATE_TASK, _fused_patch_update)
    logger.info(
        f"حل‌گر {solver}: {len(parts)} قطعه ({balance})، {cell_class.skeleton_count} skeleton، "
        f"{cell_class.enclave_count} enclave، dt اولیه {state.dt:.3e}"
    )
    return state


def _commit(state, patch, new_interior):
    """نوشتن interior جدید و انتشار نوارهای مرزی نسل بعد"""
    patch.interior = new_interior
    patch.generation += 1
    project_to_faces(patch, state.mesh.faces[patch.index])


def _assemble(state, patch):
    assemble_halo(patch, state.mesh.faces, state.config.M, state.step + state.halo_generation_offset)


def _update_in_place(state, patch, counts):
    cfg = state.config
    new, lam = update_patch(patch, state.dt, cfg.h, cfg.gamma)
    state.lambda_max.fold(lam)
    _commit(state, patch, new)
    counts.in_place += 1


def _finish_step(state):
    """فاز سریال پایانی: hook ها، dt جدید و افزایش شمارنده گام"""
    tracer = state.tracer
    with tracer.section(state.step, Phase.FINALISE):
        for hook in state.finalise_hooks:
            hook(state)
    cfg = state.config
    state.time += state.dt
    state.dt = admissible_dt(state.lambda_max.value, cfg.h, cfg.cfl)
    state.step += 1
    state.runtime.end_step()


def bsp_time_step(state):
    """یک گام BSP: هر تسک پیمایش برای همه پچ‌های قطعه‌اش هاله می‌سازد، به‌روزرسانی و منتشر می‌کند"""
    runtime = state.runtime
    tracer = state.tracer
    counts = StepCounts()
    lock = threading.Lock()

    def traversal(patches):
        def run():
            local = StepCounts()
            for patch in patches:
                _assemble(state, patch)
                _update_in_place(state, patch, local)
            with lock:
                counts.in_place += local.in_place
        return run

    with tracer.section(state.step, Phase.STEP):
        state.lambda_max.reset()
        runtime.record_samples()
        with tracer.section(state.step, Phase.BSP):
            runtime.run_bsp_section([traversal(patches) for patches in state.partition_patches])
        runtime.record_samples()
        state.counts.append(counts)
        _finish_step(state)
    return state


def _exchange_boundaries(state):
    """تبادل مرزی پس از پیمایش اول: همه نوارهای skeleton باید در نسل گام بعد باشند"""
    expected = state.step + 1
    for patch in state.mesh.patches:
        if not state.cell_class.is_skeleton(patch.grid_pos):
            continue
        faces = state.mesh.faces[patch.index]
        for direction in Direction:
            if faces.generation(direction) != expected:
                raise StaleHaloError(
                    f"stale halo: skeleton patch {patch.index} {direction.name} strip at generation "
                    f"{faces.generation(direction)}, expected {expected}"
                )


def enclave_time_step(state):
    """یک گام با تسک‌بندی enclave"""
    runtime = state.runtime
    tracer = state.tracer
    cfg = state.config
    counts = StepCounts()
    lock = threading.Lock()
    task_ids = state.task_ids
    task_ids.clear()

    def primary(patches):
        def run():
            local = StepCounts()
            for patch in patches:
                _assemble(state, patch)
                if state.cell_class.is_skeleton(patch.grid_pos):
                    _update_in_place(state, patch, local)
                    continue
                task = EnclaveTask(
                    PATCH_UPDATE_TASK,
                    update_patch,
                    (patch.snapshot(), state.dt, cfg.h, cfg.gamma),
                    on_complete=lambda result: state.lambda_max.fold(result[1]),
                )
                with lock:
                    task_ids[patch.index] = task.task_id
                runtime.spawn_enclave(task)
                local.spawned += 1
            with lock:
                counts.in_place += local.in_place
                counts.spawned += local.spawned
        return run

    def secondary(patches):
        def run():
            woven = 0
            for patch in patches:
                if state.cell_class.is_skeleton(patch.grid_pos):
                    continue
                with lock:
                    task_id = task_ids[patch.index]
                new, _ = runtime.wait_for_outcome(task_id)
                _commit(state, patch, new)
                woven += 1
            with lock:
                counts.woven += woven
        return run

    with tracer.section(state.step, Phase.STEP):
        state.lambda_max.reset()
        runtime.record_samples()
        with tracer.section(state.step, Phase.PRIMARY):
            runtime.run_bsp_section([primary(patches) for patches in state.partition_patches])
        runtime.record_samples()
        _exchange_boundaries(state)
        with tracer.section(state.step, Phase.SECONDARY):
            runtime.run_bsp_section([secondary(patches) for patches in state.partition_patches])
            runtime.taskwait_all()
        runtime.record_samples()
        state.counts.append(counts)
        _finish_step(state)
    return state


STEP_FUNCTIONS = {"bsp": bsp_time_step, "enclave": enclave_time_step}


@dataclass
class SimulationResult:
    state: SolverState
    events: list
    summary: object
    checksum: str
    initial_sums: list
    final_sums: list

    @property
    def drift(self):
        return relative_drift(self.initial_sums, self.final_sums)

    @property
    def steps(self):
        return self.state.step


def run_simulation(state, steps, end_time=None, sampler_period_us=config.SAMPLER_PERIOD_US):
    """تکرار گام حل‌گر انتخاب شده و ساخت خلاصه اجرا

    Args:
        state: وضعیت ساخته شده با build_state
        steps: تعداد گام‌ها (حداقل 1)
        end_time: توقف زودتر وقتی زمان شبیه‌سازی به این مقدار برسد
        sampler_period_us: دوره نمونه‌برداری پس‌زمینه
    """
    if steps < 1:
        raise SolverError(f"steps must be >= 1, got {steps}")
    step_fn = STEP_FUNCTIONS[state.solver]
    runtime = state.runtime
    initial_sums = list(state.mesh.domain_sums())
    with Sampler(runtime.tracer, runtime.probe, sampler_period_us):
        for _ in range(steps):
            step_fn(state)
            if end_time is not None and state.time >= end_time:
                logger.info(f"زمان پایان {end_time} در گام {state.step} رسید")
                break
    events = runtime.tracer.events()
    summary = summarize(events, state.config.patch_count)
    result = SimulationResult(
        state=state,
        events=events,
        summary=summary,
        checksum=state.mesh.checksum(),
        initial_sums=initial_sums,
        final_sums=list(state.mesh.domain_sums()),
    )
    logger.info(f"{state.step} گام اجرا شد، checksum={result.checksum[:12]}")
    return result
