"""
رابط خط فرمان taskbench
پیکربندی اجرا (RunConfig)، تجزیه فلگ‌ها و انتخاب دستور
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields, replace

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
import config

from .runtime.strategy import STRATEGY_NAMES, YIELD_MODE_NAMES
from .services.solvers import SOLVER_NAMES
from .utils.provenance import config_hash
from .utils.system_info import hardware_threads

logger = logging.getLogger(__name__)

BALANCE_NAMES = ["well", "ill"]


class ConfigError(Exception):
    """پیکربندی نامعتبر اجرا"""


@dataclass(frozen=True)
class RunConfig:
    """پیکربندی کامل یک اجرا؛ بدون تغییر در همه فایل‌های خروجی ذخیره می‌شود"""
    solver: str = config.SOLVER
    strategy: str = config.STRATEGY
    threads: int = 1
    grid_exp: int = config.GRID_EXP
    patch_size: int = config.PATCH_SIZE
    balance: str = config.BALANCE
    steps: int = config.STEPS
    cfl: float = config.CFL
    gamma: float = config.GAMMA
    ready_cap: int = config.READY_CAP
    merge_fraction: float = config.MERGE_FRACTION
    max_merge_batches: int = config.MAX_MERGE_BATCHES_PER_SWEEP
    merge_min_batch: int = config.MERGE_MIN_BATCH
    yield_mode: str = config.YIELD_MODE
    partitions: int = None
    watchdog_polls: int = config.WATCHDOG_POLLS
    sampler_period_us: int = config.SAMPLER_PERIOD_US
    end_time: float = None
    debug: bool = False
    trace_path: str = config.TRACE_PATH
    summary_path: str = config.SUMMARY_PATH
    summary_csv_path: str = config.SUMMARY_CSV_PATH

    def __post_init__(self):
        self._check_choice("solver", SOLVER_NAMES)
        self._check_choice("strategy", STRATEGY_NAMES)
        self._check_choice("balance", BALANCE_NAMES)
        self._check_choice("yield_mode", YIELD_MODE_NAMES)
        for name in ("threads", "patch_size", "steps", "ready_cap", "merge_min_batch",
                     "watchdog_polls", "sampler_period_us"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.grid_exp < 0:
            raise ConfigError(f"grid_exp must be >= 0, got {self.grid_exp}")
        if self.max_merge_batches < 0:
            raise ConfigError(f"max_merge_batches must be >= 0, got {self.max_merge_batches}")
        if not 0.0 < self.cfl < 1.0:
            raise ConfigError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.gamma > 1.0:
            raise ConfigError(f"gamma must be > 1, got {self.gamma}")
        if not 0.0 < self.merge_fraction <= 1.0:
            raise ConfigError(f"merge_fraction must lie in (0, 1], got {self.merge_fraction}")
        if self.partitions is not None and not 1 <= self.partitions <= self.patch_count:
            raise ConfigError(f"partitions must lie in 1..{self.patch_count}, got {self.partitions}")
        if self.end_time is not None and not self.end_time > 0.0:
            raise ConfigError(f"end_time must be positive, got {self.end_time}")

    def _check_choice(self, name, legal):
        value = getattr(self, name)
        if value not in legal:
            raise ConfigError(f"invalid {name} {value!r} (legal: {', '.join(legal)})")

    @property
    def M(self):
        return 3 ** self.grid_exp

    @property
    def patch_count(self):
        return self.M * self.M

    @property
    def partition_count(self):
        return self.partitions or self.threads

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @property
    def hash(self):
        return config_hash(self.to_dict())

    def with_overrides(self, **changes):
        return replace(self, **changes)


# ===== فلگ‌ها =====

# نام فلگ → نام فیلد RunConfig
_FLAG_FIELDS = {
    "solver": "solver",
    "threading_model": "strategy",
    "threads": "threads",
    "grid_exp": "grid_exp",
    "patch_size": "patch_size",
    "balance": "balance",
    "steps": "steps",
    "cfl": "cfl",
    "gamma": "gamma",
    "ready_cap": "ready_cap",
    "merge_fraction": "merge_fraction",
    "max_merge_batches": "max_merge_batches",
    "merge_min_batch": "merge_min_batch",
    "yield_mode": "yield_mode",
    "partitions": "partitions",
    "watchdog_polls": "watchdog_polls",
    "sampler_period_us": "sampler_period_us",
    "end_time": "end_time",
    "trace": "trace_path",
    "summary": "summary_path",
    "summary_csv": "summary_csv_path",
}


def add_run_arguments(parser):
    """فلگ‌های مشترک پیکربندی اجرا؛ پیش‌فرض None یعنی از فایل/محیط/config.py"""
    parser.add_argument("--config", dest="config_file", help="فایل JSON پیکربندی")
    parser.add_argument("--solver", choices=SOLVER_NAMES)
    parser.add_argument("--threading-model", choices=STRATEGY_NAMES)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--grid-exp", type=int, help="M = 3^k")
    parser.add_argument("--patch-size", type=int)
    parser.add_argument("--balance", choices=BALANCE_NAMES)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--cfl", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--ready-cap", type=int)
    parser.add_argument("--merge-fraction", type=float)
    parser.add_argument("--max-merge-batches", type=int)
    parser.add_argument("--merge-min-batch", type=int)
    parser.add_argument("--yield-mode", choices=YIELD_MODE_NAMES)
    parser.add_argument("--partitions", type=int)
    parser.add_argument("--watchdog-polls", type=int)
    parser.add_argument("--sampler-period-us", type=int)
    parser.add_argument("--end-time", type=float)
    parser.add_argument("--trace", help="مسیر CSV رویدادها (پیش‌فرض trace.csv؛ رشته خالی یعنی بدون فایل)")
    parser.add_argument("--summary", help="مسیر summary.json")
    parser.add_argument("--summary-csv", help="مسیر CSV خلاصه هر گام (پیش‌فرض summary.csv)")
    parser.add_argument("--debug", action="store_true", default=None)
    return parser


def _load_config_file(path):
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    # فایل‌های summary.json پیکربندی را زیر کلید config نگه می‌دارند
    return data.get("config", data)


def _default_threads(environ):
    raw = environ.get(config.THREADS_ENV_VAR)
    if raw:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{config.THREADS_ENV_VAR}={raw!r} is not an integer") from None
    return hardware_threads()


def config_from_args(args, environ=None):
    """ترتیب اولویت: فلگ > فایل JSON > متغیر محیطی (فقط threads) > config.py"""
    environ = os.environ if environ is None else environ
    values = {}
    config_file = getattr(args, "config_file", None)
    if config_file:
        values.update(_load_config_file(config_file))
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = value
    if getattr(args, "debug", None):
        values["debug"] = True
    if "threads" not in values:
        values["threads"] = _default_threads(environ)
    return RunConfig.from_dict(values)


def parse_config(argv=None, environ=None):
    """تجزیه فلگ‌های اجرا به RunConfig؛ فلگ ناشناخته یا مقدار نامعتبر با کد 2 خارج می‌شود"""
    parser = add_run_arguments(argparse.ArgumentParser(prog="taskbench"))
    args = parser.parse_args([] if argv is None else argv)
    try:
        return config_from_args(args, environ)
    except ConfigError as e:
        parser.error(str(e))


# ===== دستورها =====

def build_parser():
    from .handlers import partition_handler, run_handler, sweep_handler, verify_handler

    parser = argparse.ArgumentParser(
        prog="taskbench",
        description="محک زمان‌بندی تسک‌های enclave روی حل‌گر حجم محدود اویلر",
    )
    subparsers = parser.add_subparsers(dest="command")

    run = add_run_arguments(subparsers.add_parser("run", help="یک اجرای کامل"))
    run.set_defaults(handler=run_handler.cmd_run)

    sweep = add_run_arguments(subparsers.add_parser("sweep", help="ماتریس threads × strategy × balance"))
    sweep_handler.add_arguments(sweep)
    sweep.set_defaults(handler=sweep_handler.cmd_sweep)

    verify = subparsers.add_parser("verify", help="مجموعه بررسی‌های صحت")
    verify_handler.add_arguments(verify)
    verify.set_defaults(handler=verify_handler.cmd_verify)

    partition = add_run_arguments(subparsers.add_parser("partition", help="خروجی چیدمان قطعه‌ها"))
    partition_handler.add_arguments(partition)
    partition.set_defaults(handler=partition_handler.cmd_partition)
    return parser


COMMANDS = ("run", "sweep", "verify", "partition")


def main(argv=None, environ=None):
    """نقطه ورود؛ کد خروج را برمی‌گرداند"""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS + ("-h", "--help"):
        argv.insert(0, "run")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        return args.handler(args)
    try:
        run_config = config_from_args(args, environ)
    except ConfigError as e:
        parser.error(str(e))
    return args.handler(run_config, args)
