# تنظیمات پیش‌فرض taskbench
# همه مقادیر از طریق فلگ‌های خط فرمان یا فایل JSON قابل بازنویسی هستند

# معادلات اویلر
GAMMA = 1.4  # نسبت گرمای ویژه
CFL = 0.4  # ثابت CFL

# شبکه
GRID_EXP = 2  # M = 3^k
PATCH_SIZE = 15  # تعداد حجم‌ها در هر محور پچ
STEPS = 5

# شرط اولیه (قله چگالی در مرکز دامنه)
PEAK_AMPLITUDE = 0.5
PEAK_WIDTH = 0.01
BACKGROUND_PRESSURE = 1.0
BACKGROUND_VELOCITY = (0.0, 0.0)

# حل‌گر و زمان‌بندی
SOLVER = "enclave"
STRATEGY = "native"
BALANCE = "well"
YIELD_MODE = "fair"
READY_CAP = 1000  # سقف تسک‌های آماده در شبیه‌سازی native
MERGE_FRACTION = 0.5
MAX_MERGE_BATCHES_PER_SWEEP = 16
MERGE_MIN_BATCH = 1
WATCHDOG_POLLS = 1_000_000  # تعداد poll های بی‌ثمر پیاپی قبل از اعلام starvation

# ردیابی
SAMPLER_PERIOD_US = 100

# متغیر محیطی برای تعداد نخ‌ها
THREADS_ENV_VAR = "TASKBENCH_THREADS"

# مسیرها
LOG_DIR = "logs"
LOG_FILE = "taskbench.log"
RESULTS_DB_PATH = "taskbench_results.db"
SUMMARY_PATH = "summary.json"
TRACE_PATH = "trace.csv"
SUMMARY_CSV_PATH = "summary.csv"
RESULTS_CSV_PATH = "results.csv"
LAYOUT_CSV_PATH = "layout.csv"
