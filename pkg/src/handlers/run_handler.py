"""
هندلر دستور run: اجرای شبیه‌سازی و نوشتن summary.json، summary.csv و trace.csv
"""
import json
import logging
import sys
import time
from dataclasses import asdict

from ..runtime.errors import SchedulingError, StarvationError
from ..runtime.scheduler import Runtime
from ..runtime.strategy import Strategy
from ..services.fv_core import FvCoreError, MeshConfig
from ..services.partition import PartitionError
from ..services.solvers import build_state, run_simulation
from ..services.trace import Tracer, write_events_csv, write_summary_csv
from ..utils.provenance import timestamps
from ..utils.system_info import resource_usage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_STARVATION = 3
EXIT_KERNEL = 4
EXIT_IO = 5


def build_runtime(cfg, tracer=None):
    strategy = Strategy.from_name(
        cfg.strategy,
        ready_cap=cfg.ready_cap,
        yield_mode=cfg.yield_mode,
        merge_fraction=cfg.merge_fraction,
        max_merge_batches_per_sweep=cfg.max_merge_batches,
        merge_min_batch=cfg.merge_min_batch,
    )
    return Runtime(strategy, cfg.threads, tracer=tracer, watchdog_polls=cfg.watchdog_polls)


def simulate(cfg, trace=True, global_state=None, halo_generation_offset=0):
    """اجرای کامل یک پیکربندی؛ runtime در پایان همیشه متوقف می‌شود

    Returns:
        SimulationResult
    """
    mesh_config = MeshConfig.from_grid_exp(cfg.grid_exp, cfg.patch_size, cfg.gamma, cfg.cfl)
    runtime = build_runtime(cfg, Tracer(enabled=trace))
    try:
        state = build_state(
            mesh_config, runtime,
            partitions=cfg.partition_count,
            balance=cfg.balance,
            solver=cfg.solver,
            debug=cfg.debug,
            global_state=global_state,
        )
        state.halo_generation_offset = halo_generation_offset
        return run_simulation(state, cfg.steps, end_time=cfg.end_time, sampler_period_us=cfg.sampler_period_us)
    finally:
        runtime.shutdown()


def build_summary(cfg, result, wall_s):
    """محتوای summary.json شامل پیکربندی کامل برای بازتولید"""
    state = result.state
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "checksum": result.checksum,
        "steps": result.steps,
        "simulated_time": state.time,
        "dt": state.dt,
        "wall_s": wall_s,
        "time_per_step_per_patch": result.summary.time_per_step_per_patch,
        "metrics": result.summary.to_dict(),
        "cells": {
            "partitions": len(state.partitions),
            "skeleton": state.cell_class.skeleton_count,
            "enclave": state.cell_class.enclave_count,
        },
        "conservation": {
            "initial_sums": [float(v) for v in result.initial_sums],
            "final_sums": [float(v) for v in result.final_sums],
            "relative_drift": [float(v) for v in result.drift],
        },
        "runtime_stats": asdict(state.runtime.stats),
        "resources": resource_usage(),
        **timestamps(),
    }


def write_summary(summary, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, ensure_ascii=False, indent=2)
    logger.info(f"خلاصه اجرا در {path} ذخیره شد")


def exit_code_for(error):
    if isinstance(error, StarvationError):
        return EXIT_STARVATION
    if isinstance(error, FvCoreError):
        return EXIT_KERNEL
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_FAILURE


def cmd_run(cfg, args=None):
    """اجرای یک پیکربندی و نوشتن خروجی‌ها"""
    logger.info(f"شروع اجرا: {cfg.solver}/{cfg.strategy}، {cfg.threads} نخ، M={cfg.M}، n={cfg.patch_size}")
    started = time.perf_counter()
    try:
        result = simulate(cfg)
    except (StarvationError, FvCoreError, SchedulingError, PartitionError) as e:
        logger.error(f"اجرا ناموفق بود: {e}")
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    wall_s = time.perf_counter() - started

    try:
        if cfg.trace_path:
            write_events_csv(result.events, cfg.trace_path)
        if cfg.summary_path:
            write_summary(build_summary(cfg, result, wall_s), cfg.summary_path)
        if cfg.summary_csv_path:
            write_summary_csv(result.summary, cfg.summary_csv_path)
    except OSError as e:
        logger.error(f"خطا در نوشتن خروجی‌ها: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    print(f"steps={result.steps} checksum={result.checksum}")
    print(f"time_per_step_per_patch={result.summary.time_per_step_per_patch:.3e}s wall={wall_s:.3f}s")
    return EXIT_OK
