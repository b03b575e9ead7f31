"""
تقسیم‌بندی شبکه پچ‌ها در امتداد منحنی پر کننده فضای پئانو
شامل تقسیم متوازن، تقسیم نامتوازن (نصف کردن پیاپی) و دسته‌بندی skeleton/enclave
"""
import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum

from .fv_core import Direction, is_power_of_three, neighbor

logger = logging.getLogger(__name__)

MAX_ILL_BALANCED_PARTITIONS = 20


class PartitionError(Exception):
    """خطای تقسیم‌بندی"""


class CellKind(Enum):
    SKELETON = "skeleton"
    ENCLAVE = "enclave"


class SfcOrder:
    """جایگشت همه موقعیت‌های شبکه در امتداد منحنی پئانو"""

    def __init__(self, M, positions):
        self.M = M
        self.positions = list(positions)
        self._index = {pos: k for k, pos in enumerate(self.positions)}

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, k):
        return self.positions[k]

    def __iter__(self):
        return iter(self.positions)

    def index_of(self, grid_pos):
        return self._index[grid_pos]

    def is_bijection(self):
        expected = {(x, y) for x in range(self.M) for y in range(self.M)}
        return len(self.positions) == len(expected) and set(self.positions) == expected

    def non_adjacent_pairs(self):
        """جفت‌های متوالی که روی شبکه غیرتناوبی مجاور نیستند"""
        bad = []
        for k in range(len(self.positions) - 1):
            (x0, y0), (x1, y1) = self.positions[k], self.positions[k + 1]
            if abs(x0 - x1) + abs(y0 - y1) != 1:
                bad.append(k)
        return bad


def _peano(M):
    if M == 1:
        return [(0, 0)]
    s = M // 3
    sub = _peano(s)
    order = []
    for bx in range(3):
        rows = range(3) if bx % 2 == 0 else range(2, -1, -1)
        for by in rows:
            # بازتاب‌ها خروجی هر بلوک را مجاور ورودی بلوک بعدی نگه می‌دارند
            flip_x = by % 2 == 1
            flip_y = bx % 2 == 1
            for x, y in sub:
                lx = s - 1 - x if flip_x else x
                ly = s - 1 - y if flip_y else y
                order.append((bx * s + lx, by * s + ly))
    return order


def sfc_order(M):
    """ترتیب پئانو روی شبکه M×M ((x, y) = (ستون، سطر))"""
    if not is_power_of_three(M):
        raise PartitionError(f"M={M} is not a power of 3")
    return SfcOrder(M, _peano(M))


@dataclass(frozen=True)
class Partition:
    """قطعه پیوسته‌ای از اندیس‌های SFC"""
    id: int
    start: int
    stop: int

    @property
    def count(self):
        return self.stop - self.start

    def indices(self):
        return range(self.start, self.stop)


def _partitions_from_sizes(sizes):
    parts = []
    start = 0
    for pid, size in enumerate(sizes):
        parts.append(Partition(id=pid, start=start, stop=start + size))
        start += size
    return parts


def split_balanced(order, P):
    """تقسیم به P قطعه پیوسته با اندازه‌های ⌊M²/P⌋ یا ⌈M²/P⌉"""
    total = len(order)
    if not 1 <= P <= total:
        raise PartitionError(f"partition count {P} outside 1..{total}")
    base, extra = divmod(total, P)
    sizes = [base + 1 if k < extra else base for k in range(P)]
    return _partitions_from_sizes(sizes)


def split_ill_balanced(order, P):
    """تقسیم نامتوازن: نیمی از باقی‌مانده به هر قطعه، حداکثر 20 قطعه

    قطعه آخر (وقتی سقف تعداد پر شود) باقی‌مانده را می‌گیرد.
    """
    if P < 2:
        raise PartitionError(f"ill-balanced split needs P >= 2, got {P}")
    cap = min(P, MAX_ILL_BALANCED_PARTITIONS)
    remaining = len(order)
    sizes = []
    while remaining > 0 and len(sizes) < cap:
        size = remaining if len(sizes) == cap - 1 else math.ceil(remaining / 2)
        sizes.append(size)
        remaining -= size
    return _partitions_from_sizes(sizes)


def validate_tiling(partitions, total):
    position = 0
    for part in partitions:
        if part.start != position or part.count < 1:
            raise PartitionError(f"partition {part.id} breaks the tiling at index {position}")
        position = part.stop
    if position != total:
        raise PartitionError(f"partitions cover {position} of {total} patches")


class CellClass:
    """دسته‌بندی هر پچ به skeleton یا enclave به همراه مالک آن"""

    def __init__(self, owners, kinds):
        self.owners = owners
        self.kinds = kinds

    @property
    def skeleton_count(self):
        return sum(1 for kind in self.kinds.values() if kind is CellKind.SKELETON)

    @property
    def enclave_count(self):
        return sum(1 for kind in self.kinds.values() if kind is CellKind.ENCLAVE)

    def is_skeleton(self, grid_pos):
        return self.kinds[grid_pos] is CellKind.SKELETON

    def counts_per_partition(self):
        counts = {}
        for pos, owner in self.owners.items():
            skel, encl = counts.get(owner, (0, 0))
            if self.kinds[pos] is CellKind.SKELETON:
                skel += 1
            else:
                encl += 1
            counts[owner] = (skel, encl)
        return counts


def classify(partitions, M, order=None):
    """پچی skeleton است اگر حداقل یکی از چهار همسایه تناوبی‌اش در قطعه دیگری باشد"""
    if order is None:
        order = sfc_order(M)
    validate_tiling(partitions, len(order))
    owners = {}
    for part in partitions:
        for k in part.indices():
            owners[order[k]] = part.id
    kinds = {}
    for pos, owner in owners.items():
        boundary = any(owners[neighbor(pos, d, M)] != owner for d in Direction)
        kinds[pos] = CellKind.SKELETON if boundary else CellKind.ENCLAVE
    cell_class = CellClass(owners, kinds)
    logger.debug(
        f"دسته‌بندی {len(partitions)} قطعه: {cell_class.skeleton_count} skeleton، "
        f"{cell_class.enclave_count} enclave"
    )
    return cell_class


def make_partitions(order, P, balance):
    """انتخاب روش تقسیم بر اساس حالت توازن (well یا ill)"""
    if balance == "well":
        return split_balanced(order, min(P, len(order)))
    if balance == "ill":
        return split_ill_balanced(order, max(P, 2))
    raise PartitionError(f"unknown balance mode {balance!r} (legal: well, ill)")


LAYOUT_COLUMNS = ["ix", "iy", "sfc_index", "partition_id", "class"]


def write_layout_csv(path, order, cell_class):
    """خروجی CSV چیدمان قطعه‌ها برای بررسی"""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(LAYOUT_COLUMNS)
        for k, pos in enumerate(order):
            writer.writerow([pos[0], pos[1], k, cell_class.owners[pos], cell_class.kinds[pos].value])
    logger.info(f"چیدمان قطعه‌ها در {path} ذخیره شد")
