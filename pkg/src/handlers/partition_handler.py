"""
هندلر دستور partition: خروجی چیدمان قطعه‌ها و تعداد skeleton/enclave هر قطعه
"""
import logging
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
import config

from ..services.partition import PartitionError, classify, make_partitions, sfc_order, write_layout_csv
from .run_handler import EXIT_FAILURE, EXIT_IO, EXIT_OK

logger = logging.getLogger(__name__)


def add_arguments(parser):
    parser.add_argument("--layout", default=config.LAYOUT_CSV_PATH, help="مسیر CSV چیدمان")


def cmd_partition(cfg, args):
    try:
        order = sfc_order(cfg.M)
        partitions = make_partitions(order, cfg.partition_count, cfg.balance)
        cell_class = classify(partitions, cfg.M, order)
    except PartitionError as e:
        logger.error(f"تقسیم‌بندی ناموفق بود: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE

    try:
        write_layout_csv(args.layout, order, cell_class)
    except OSError as e:
        logger.error(f"خطا در نوشتن چیدمان: {e}")
        return EXIT_IO

    counts = cell_class.counts_per_partition()
    print(f"M={cfg.M} partitions={len(partitions)} balance={cfg.balance}")
    print(f"{'id':>4} {'patches':>8} {'skeleton':>9} {'enclave':>8}")
    for part in partitions:
        skeleton, enclave = counts.get(part.id, (0, 0))
        print(f"{part.id:>4} {part.count:>8} {skeleton:>9} {enclave:>8}")
    print(f"total skeleton={cell_class.skeleton_count} enclave={cell_class.enclave_count}")
    return EXIT_OK
