"""
هندلر دستور verify: مجموعه بررسی‌های صحت و چاپ جدول قبول/رد
"""
import logging
import threading

import numpy as np

from ..cli import RunConfig
from ..runtime.scheduler import Runtime
from ..runtime.strategy import STRATEGY_NAMES, Strategy
from ..runtime.tasks import EnclaveTask
from ..services.fv_core import Mesh, MeshConfig, StaleHaloError, admissible_dt, initial_state
from ..services.oracle import brute_force_step, first_difference
from ..services.partition import classify, make_partitions, sfc_order
from ..services.trace import Channel, EventKind, Phase
from .run_handler import EXIT_FAILURE, EXIT_OK, simulate

logger = logging.getLogger(__name__)

DEADLOCK_TIMEOUT_S = 10.0
DRIFT_TOLERANCE = 1e-10


def add_arguments(parser):
    parser.add_argument("--inject-stale-halo", action="store_true",
                        help="هوک تست: درخواست نسل اشتباه هاله برای اطمینان از تشخیص آن")
    parser.add_argument("--quick", action="store_true", help="اجرای کوتاه‌تر بررسی پایستاری")


def _small_config(**overrides):
    base = dict(solver="enclave", strategy="native", threads=2, grid_exp=1, patch_size=9, steps=1,
                summary_path=None)
    base.update(overrides)
    return RunConfig(**base)


def check_kernel_oracle():
    """یک گام روی M=3، n=9 برای هر حل‌گر و استراتژی در برابر حلقه ساده"""
    mesh_config = MeshConfig(M=3, n=9)
    state0 = initial_state(mesh_config)
    dt = admissible_dt(Mesh(mesh_config, state0).global_lambda(), mesh_config.h, mesh_config.cfl)
    expected, _ = brute_force_step(state0, dt, mesh_config.h, mesh_config.gamma)
    runs = [("bsp", "native")] + [("enclave", name) for name in STRATEGY_NAMES]
    for solver, strategy in runs:
        cfg = _small_config(solver=solver, strategy=strategy, partitions=2)
        result = simulate(cfg, trace=False)
        diff = first_difference(expected, result.state.mesh.global_state())
        if diff is not None:
            return False, (f"{solver}/{strategy}: first difference at var={diff['var']} "
                           f"i={diff['i']} j={diff['j']}: {diff['expected']!r} != {diff['actual']!r}")
    return True, f"{len(runs)} runs bitwise equal"


def check_conservation(steps=100):
    cfg = RunConfig(solver="bsp", strategy="native", threads=2, grid_exp=2, patch_size=15, steps=steps,
                    summary_path=None)
    result = simulate(cfg, trace=False)
    worst = max(result.drift)
    return worst <= DRIFT_TOLERANCE, f"{steps} steps, max relative drift {worst:.2e}"


def _brute_force_classes(order, partitions, M):
    owner = {}
    for part in partitions:
        for k in range(part.start, part.stop):
            owner[order[k]] = part.id
    classes = {}
    for x in range(M):
        for y in range(M):
            around = [((x - 1) % M, y), ((x + 1) % M, y), (x, (y - 1) % M), (x, (y + 1) % M)]
            classes[(x, y)] = any(owner[p] != owner[(x, y)] for p in around)
    return classes


def check_classify():
    checked = 0
    for M in (3, 9):
        order = sfc_order(M)
        for balance in ("well", "ill"):
            for P in (1, 2, 3, 4, 8):
                if balance == "ill" and P < 2:
                    continue
                partitions = make_partitions(order, P, balance)
                cell_class = classify(partitions, M, order)
                expected = _brute_force_classes(order, partitions, M)
                for pos, skeleton in expected.items():
                    if cell_class.is_skeleton(pos) != skeleton:
                        return False, f"M={M} P={P} {balance}: patch {pos} misclassified"
                checked += 1
    return True, f"{checked} layouts match brute force"


def _backfill_case(threads, bsp_count, pending):
    runtime = Runtime(Strategy.from_name("backfill"), threads)
    try:
        for _ in range(pending):
            runtime.pending.push(EnclaveTask(1, lambda: np.sum(np.ones(64))))
        fns = [lambda: np.sum(np.ones(256)) for _ in range(bsp_count)]
        worker = threading.Thread(target=runtime.run_bsp_backfill, args=(fns,), daemon=True)
        worker.start()
        worker.join(DEADLOCK_TIMEOUT_S)
        if worker.is_alive():
            return False
        runtime.taskwait_all()
        return runtime.stats.backfill_decrements == max(threads, bsp_count)
    finally:
        runtime.shutdown()


def check_backfill_deadlock():
    cases = 0
    for threads in (1, 2, 4, 8):
        for bsp_count in sorted({0, 1, threads - 1, threads, 3 * threads}):
            for pending in (0, 100):
                if not _backfill_case(threads, bsp_count, pending):
                    return False, f"T={threads} bsp={bsp_count} pending={pending} did not finish cleanly"
                cases += 1
    return True, f"{cases} combinations terminated"


def check_sfc_adjacency():
    for M in (3, 9, 27):
        order = sfc_order(M)
        if not order.is_bijection():
            return False, f"M={M}: order is not a bijection"
        bad = order.non_adjacent_pairs()
        if bad:
            return False, f"M={M}: positions {bad[0]} and {bad[0] + 1} are not adjacent"
    return True, "M=3,9,27 adjacent"


def check_native_cap_and_hold_back():
    """سقف تسک‌های آماده در native و اوج صف معلق در hold-back"""
    cap = 100
    base = dict(solver="enclave", threads=4, grid_exp=3, patch_size=2, steps=2, ready_cap=cap,
                balance="well", summary_path=None)
    native = simulate(RunConfig(strategy="native", **base))
    ready = max((e.aux for e in native.events if e.kind is EventKind.SAMPLE and e.id == Channel.READY), default=0)
    if ready > cap:
        return False, f"native ready count reached {ready} > {cap}"
    hold_back = simulate(RunConfig(strategy="hold-back", **base))
    enclaves = hold_back.state.cell_class.enclave_count
    for step in hold_back.summary.steps:
        if step.peak_pending != enclaves:
            return False, f"hold-back step {step.step}: peak pending {step.peak_pending} != {enclaves} enclaves"
    return True, f"native ready <= {cap}; hold-back peak = {enclaves}"


def check_halo_generations(inject=False):
    cfg = _small_config(strategy="hold-back", grid_exp=2, patch_size=4, steps=2, partitions=4)
    try:
        result = simulate(cfg, halo_generation_offset=1 if inject else 0)
    except StaleHaloError as e:
        return False, f"stale halo: {e}"
    sections = sum(1 for e in result.events if e.kind is EventKind.SECTION_END and e.aux == Phase.SECONDARY)
    return sections == cfg.steps, f"{sections} secondary traversals"


def run_checks(inject_stale_halo=False, quick=False):
    checks = [
        ("kernel oracle", check_kernel_oracle),
        ("conservation", lambda: check_conservation(10 if quick else 100)),
        ("classify brute force", check_classify),
        ("backfill deadlock matrix", check_backfill_deadlock),
        ("sfc adjacency", check_sfc_adjacency),
        ("native cap / hold-back peak", check_native_cap_and_hold_back),
        ("halo generations", lambda: check_halo_generations(inject_stale_halo)),
    ]
    results = []
    for name, check in checks:
        try:
            ok, detail = check()
        except Exception as e:
            ok, detail = False, f"{type(e).__name__}: {e}"
        if not ok:
            logger.error(f"بررسی {name} رد شد: {detail}")
        results.append((name, ok, detail))
    return results


def cmd_verify(args):
    results = run_checks(
        inject_stale_halo=getattr(args, "inject_stale_halo", False),
        quick=getattr(args, "quick", False),
    )
    width = max(len(name) for name, _, _ in results)
    print(f"{'check':<{width}}  result  detail")
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL':<6}  {detail}")
    failed = sum(1 for _, ok, _ in results if not ok)
    print(f"{len(results) - failed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE
