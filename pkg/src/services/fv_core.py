"""
کرنل حجم محدود برای معادلات اویلر دوبعدی
این ماژول شامل بستار گاز ایده‌آل، شار روسانوف، مدل پچ/هاله/بافر وجه
و تبادل مرزی روی یک شبکه تناوبی M×M از پچ‌ها است
"""
import hashlib
import logging
import math
import os
import sys
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

# اضافه کردن مسیر پوشه اصلی برای دسترسی به config
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
import config

logger = logging.getLogger(__name__)

NUM_VARS = 4  # rho, mx, my, E
DIMENSION = 2


class FvCoreError(Exception):
    """خطای پایه ماژول حجم محدود"""


class InadmissibleStateError(FvCoreError):
    """حالت غیرمجاز (چگالی یا فشار نامثبت)"""

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"{message} (volume index {index})"
        super().__init__(message)


class StaleHaloError(FvCoreError):
    """نسل هاله با نسل مورد انتظار همخوانی ندارد؛ نشانه خطای زمان‌بندی"""


class MeshConfigError(FvCoreError):
    """پیکربندی نامعتبر شبکه"""


class ConservedState(NamedTuple):
    """متغیرهای پایستار یک حجم"""
    rho: float
    mx: float
    my: float
    E: float

    def as_array(self):
        return np.array(self, dtype=np.float64)


class Axis(Enum):
    X = 0
    Y = 1


class Direction(Enum):
    LEFT = (-1, 0)
    RIGHT = (1, 0)
    BOTTOM = (0, -1)
    TOP = (0, 1)

    @property
    def opposite(self):
        return _OPPOSITE[self]


_DIRECTION_SLOT = {d: k for k, d in enumerate(Direction)}

_OPPOSITE = {
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
    Direction.BOTTOM: Direction.TOP,
    Direction.TOP: Direction.BOTTOM,
}


def is_power_of_three(value):
    """بررسی اینکه مقدار به شکل 3^k باشد"""
    if value < 1:
        return False
    while value % 3 == 0:
        value //= 3
    return value == 1


@dataclass(frozen=True)
class MeshConfig:
    """پیکربندی شبکه پچ‌ها

    Args:
        M: تعداد پچ در هر محور (توانی از 3)
        n: تعداد حجم در هر محور پچ
        gamma: نسبت گرمای ویژه
        cfl: ثابت CFL
    """
    M: int
    n: int
    gamma: float = config.GAMMA
    cfl: float = config.CFL
    d: int = DIMENSION

    def __post_init__(self):
        if not is_power_of_three(self.M):
            raise MeshConfigError(f"M={self.M} is not a power of 3")
        if self.n < 1:
            raise MeshConfigError(f"patch size n={self.n} must be >= 1")
        if not 0.0 < self.cfl < 1.0:
            raise MeshConfigError(f"cfl={self.cfl} must lie in (0, 1)")
        if self.d != DIMENSION:
            raise MeshConfigError("only d=2 is supported")

    @classmethod
    def from_grid_exp(cls, grid_exp, n, gamma=config.GAMMA, cfl=config.CFL):
        if grid_exp < 0:
            raise MeshConfigError(f"grid exponent {grid_exp} must be >= 0")
        return cls(M=3 ** grid_exp, n=n, gamma=gamma, cfl=cfl)

    @property
    def H(self):
        return 1.0 / self.M

    @property
    def h(self):
        return self.H / self.n

    @property
    def patch_count(self):
        return self.M * self.M

    @property
    def volumes_per_axis(self):
        return self.M * self.n


# ===== معادلات اویلر =====

def _axis_index(axis):
    if isinstance(axis, Axis):
        return axis.value
    if axis in ("x", 0):
        return 0
    if axis in ("y", 1):
        return 1
    raise ValueError(f"unknown axis {axis!r}")


def _as_state_array(U):
    return np.asarray(U, dtype=np.float64)


def _first_bad_index(mask):
    if mask.ndim == 0:
        return None
    return tuple(int(i) for i in np.argwhere(mask)[0])


def _pressure_unchecked(U, gamma):
    rho, mx, my, E = U[0], U[1], U[2], U[3]
    return (gamma - 1.0) * (E - (mx * mx + my * my) / (2.0 * rho))


def _checked_pressure(U, gamma):
    """فشار با بررسی مجاز بودن حالت"""
    rho = U[0]
    bad = ~(rho > 0.0)
    if np.any(bad):
        raise InadmissibleStateError("inadmissible state: non-positive density", _first_bad_index(bad))
    p = _pressure_unchecked(U, gamma)
    bad = ~(p > 0.0)
    if np.any(bad):
        raise InadmissibleStateError("inadmissible state: non-positive pressure", _first_bad_index(bad))
    return p


def _flux_unchecked(U, p, axis):
    rho, mx, my, E = U[0], U[1], U[2], U[3]
    if axis == 0:
        return np.stack((mx, mx * mx / rho + p, mx * my / rho, (E + p) * mx / rho))
    return np.stack((my, mx * my / rho, my * my / rho + p, (E + p) * my / rho))


def _eigen_unchecked(U, p, axis, gamma):
    return np.abs(U[1 + axis] / U[0]) + np.sqrt(gamma * p / U[0])


def _rusanov_unchecked(UL, pL, UR, pR, axis, gamma):
    FL = _flux_unchecked(UL, pL, axis)
    FR = _flux_unchecked(UR, pR, axis)
    lam = np.maximum(_eigen_unchecked(UL, pL, axis, gamma), _eigen_unchecked(UR, pR, axis, gamma))
    return 0.5 * (FL + FR) - 0.5 * lam * (UR - UL)


def _scalar_or_array(value):
    if np.ndim(value) == 0:
        return float(value)
    return value


def pressure(U, gamma=config.GAMMA):
    """فشار از بستار گاز ایده‌آل: (gamma-1)(E - (mx²+my²)/(2 rho))"""
    return _scalar_or_array(_checked_pressure(_as_state_array(U), gamma))


def physical_flux(U, axis, gamma=config.GAMMA):
    """شار فیزیکی اویلر در راستای محور داده شده"""
    U = _as_state_array(U)
    p = _checked_pressure(U, gamma)
    return _flux_unchecked(U, p, _axis_index(axis))


def max_eigenvalue(U, axis, gamma=config.GAMMA):
    """بزرگ‌ترین مقدار ویژه |u_axis| + c"""
    U = _as_state_array(U)
    p = _checked_pressure(U, gamma)
    return _scalar_or_array(_eigen_unchecked(U, p, _axis_index(axis), gamma))


def rusanov_flux(UL, UR, axis, gamma=config.GAMMA):
    """شار عددی روسانوف (Lax-Friedrichs محلی) بین دو حالت"""
    UL = _as_state_array(UL)
    UR = _as_state_array(UR)
    pL = _checked_pressure(UL, gamma)
    pR = _checked_pressure(UR, gamma)
    return _rusanov_unchecked(UL, pL, UR, pR, _axis_index(axis), gamma)


def admissible_dt(lambda_global, h, cfl=config.CFL):
    """بزرگ‌ترین گام زمانی مجاز طبق شرط CFL"""
    if not lambda_global > 0.0:
        raise FvCoreError(f"global eigenvalue must be positive, got {lambda_global}")
    return cfl * h / lambda_global


# ===== توپولوژی تناوبی =====

def neighbor(grid_pos, direction, M):
    """همسایه تناوبی (چنبره) یک پچ"""
    ix, iy = grid_pos
    dx, dy = direction.value
    return ((ix + dx) % M, (iy + dy) % M)


def patch_index(grid_pos, M):
    ix, iy = grid_pos
    return iy * M + ix


def grid_position(index, M):
    return (index % M, index // M)


# ===== پچ و بافر وجه =====

@dataclass
class Patch:
    """یک پچ n×n از حجم‌ها با هاله یک‌خانه‌ای

    interior با اندیس [var, i, j] ذخیره می‌شود که i محور x و j محور y است.
    """
    index: int
    grid_pos: tuple
    interior: np.ndarray
    owner: int = 0
    halo: dict = field(default_factory=dict)
    generation: int = 0
    halo_generation: int = -1

    def __post_init__(self):
        shape = self.interior.shape
        if len(shape) != 3 or shape[0] != NUM_VARS or shape[1] != shape[2]:
            raise MeshConfigError(f"patch {self.index}: interior shape {shape} is not (4, n, n)")

    @property
    def n(self):
        return self.interior.shape[1]

    def snapshot(self):
        """کپی هاله برای تسک‌های تعویقی؛ interior تا زمان بافتن نتیجه تغییر نمی‌کند"""
        return Patch(
            index=self.index,
            grid_pos=self.grid_pos,
            interior=self.interior,
            owner=self.owner,
            halo={d: strip.copy() for d, strip in self.halo.items()},
            generation=self.generation,
            halo_generation=self.halo_generation,
        )


def boundary_strips(interior):
    """سطرها/ستون‌های مرزی یک پچ به ترتیب اندیس در امتداد لبه"""
    return {
        Direction.LEFT: interior[:, 0, :],
        Direction.RIGHT: interior[:, -1, :],
        Direction.BOTTOM: interior[:, :, 0],
        Direction.TOP: interior[:, :, -1],
    }


class FaceBuffer:
    """نوارهای خروجی یک پچ (4n حجم) با شمارنده نسل برای هر نوار

    دو اسلات به صورت نوبتی (نسل زوج/فرد) نگه داشته می‌شود تا خواندن نسل s
    و نوشتن نسل s+1 در یک گام با هم تداخل نکنند.
    """

    def __init__(self, n):
        self.n = n
        self._slots = np.zeros((2, len(Direction), NUM_VARS, n), dtype=np.float64)
        self._stamps = np.full((2, len(Direction)), -1, dtype=np.int64)
        self._generation = {d: -1 for d in Direction}
        self._lock = threading.Lock()

    @property
    def volume_count(self):
        return len(Direction) * self.n

    def generation(self, direction):
        with self._lock:
            return self._generation[direction]

    def _write(self, strips, generation):
        slot = generation % 2
        for k, direction in enumerate(Direction):
            self._slots[slot, k] = strips[direction]
            self._stamps[slot, k] = generation
            self._generation[direction] = generation

    def reset(self, interior, generation=0):
        """انتشار اولیه نوارها بدون افزایش شمارنده"""
        with self._lock:
            self._write(boundary_strips(interior), generation)

    def publish(self, strips):
        """نوشتن نوارهای جدید و افزایش شمارنده نسل هر نوار به اندازه یک"""
        with self._lock:
            generation = max(self._generation.values()) + 1
            self._write(strips, generation)
            return generation

    def strip(self, direction, generation):
        """خواندن نوار یک جهت در نسل مشخص"""
        with self._lock:
            k = _DIRECTION_SLOT[direction]
            slot = generation % 2
            stamp = int(self._stamps[slot, k])
            if stamp != generation:
                raise StaleHaloError(
                    f"stale halo: {direction.name} strip holds generation {stamp}, expected {generation}"
                )
            return self._slots[slot, k].copy()


def project_to_faces(patch, face_buffer):
    """اپیلوگ حل پچ: نوشتن نوارهای مرزی در بافر وجه"""
    return face_buffer.publish(boundary_strips(patch.interior))


def assemble_halo(patch, faces, M, generation):
    """پیش‌درآمد به‌روزرسانی پچ: پر کردن هاله از نوارهای همسایه‌ها

    Args:
        patch: پچ هدف
        faces: بافرهای وجه همه پچ‌ها به ترتیب اندیس پچ
        M: تعداد پچ در هر محور
        generation: نسل مورد انتظار نوارهای همسایه
    """
    for direction in Direction:
        nb = patch_index(neighbor(patch.grid_pos, direction, M), M)
        try:
            patch.halo[direction] = faces[nb].strip(direction.opposite, generation)
        except StaleHaloError as e:
            raise StaleHaloError(f"patch {patch.index} {direction.name} halo from patch {nb}: {e}") from e
    patch.halo_generation = generation
    return patch


# ===== به‌روزرسانی پچ =====

def padded_state(patch):
    """ساخت آرایه (4, n+2, n+2) شامل interior و هاله؛ گوشه‌ها خوانده نمی‌شوند"""
    missing = [d.name for d in Direction if d not in patch.halo]
    if missing:
        raise StaleHaloError(f"patch {patch.index}: halo strips missing: {', '.join(missing)}")
    if patch.halo_generation != patch.generation:
        raise StaleHaloError(
            f"patch {patch.index}: halo generation {patch.halo_generation} "
            f"does not precede update to generation {patch.generation + 1}"
        )
    n = patch.n
    padded = np.zeros((NUM_VARS, n + 2, n + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = patch.interior
    padded[:, 0, 1:-1] = patch.halo[Direction.LEFT]
    padded[:, -1, 1:-1] = patch.halo[Direction.RIGHT]
    padded[:, 1:-1, 0] = patch.halo[Direction.BOTTOM]
    padded[:, 1:-1, -1] = patch.halo[Direction.TOP]
    return padded


def _advance(padded, dt, h, gamma):
    """یک گام روسانوف روی آرایه padded با محورهای مکانی در دو بعد آخر"""
    xl = padded[..., 0:-1, 1:-1]
    xr = padded[..., 1:, 1:-1]
    yl = padded[..., 1:-1, 0:-1]
    yr = padded[..., 1:-1, 1:]
    fx = _rusanov_unchecked(xl, _checked_pressure(xl, gamma), xr, _checked_pressure(xr, gamma), 0, gamma)
    fy = _rusanov_unchecked(yl, _checked_pressure(yl, gamma), yr, _checked_pressure(yr, gamma), 1, gamma)
    interior = padded[..., 1:-1, 1:-1]
    coef = dt / h
    # S = 0 برای اویلر
    return interior - coef * (((fx[..., 1:, :] - fx[..., :-1, :]) + fy[..., 1:]) - fy[..., :-1])


def _new_state_eigen(new, gamma):
    p = _checked_pressure(new, gamma)
    return np.maximum(_eigen_unchecked(new, p, 0, gamma), _eigen_unchecked(new, p, 1, gamma))


def update_patch(patch, dt, h, gamma=config.GAMMA, source=None):
    """به‌روزرسانی interior یک پچ با هاله پر شده

    تابع خالص است؛ patch تغییر نمی‌کند.

    Returns:
        tuple: (interior جدید n×n، lambda_max حالت جدید)
    """
    if not dt > 0.0:
        raise FvCoreError(f"time step must be positive, got {dt}")
    new = _advance(padded_state(patch), dt, h, gamma)
    if source is not None:
        new = new + dt * source
    eig = _new_state_eigen(new, gamma)
    return new, float(np.max(eig))


def update_patches_batched(patches, dt, h, gamma=config.GAMMA):
    """اجرای ادغام‌شده چند به‌روزرسانی پچ در یک حلقه برداری

    نتیجه بیت به بیت با اجرای جداگانه update_patch برابر است.
    """
    if not patches:
        return []
    if not dt > 0.0:
        raise FvCoreError(f"time step must be positive, got {dt}")
    stacked = np.stack([padded_state(p) for p in patches], axis=1)
    new = _advance(stacked, dt, h, gamma)
    eig = _new_state_eigen(new, gamma)
    lambdas = np.max(eig, axis=(-2, -1))
    return [(np.ascontiguousarray(new[:, b]), float(lambdas[b])) for b in range(len(patches))]


# ===== شبکه =====

def initial_state(mesh_config, amplitude=config.PEAK_AMPLITUDE, width=config.PEAK_WIDTH,
                  background_pressure=config.BACKGROUND_PRESSURE, velocity=config.BACKGROUND_VELOCITY):
    """شرط اولیه: قله چگالی گاوسی در مرکز دامنه با فشار و سرعت ثابت

    Returns:
        np.ndarray: آرایه سراسری (4, M·n, M·n)
    """
    g = mesh_config.volumes_per_axis
    centers = (np.arange(g, dtype=np.float64) + 0.5) * mesh_config.h
    x, y = np.meshgrid(centers, centers, indexing="ij")
    if amplitude == 0.0:
        rho = np.ones((g, g))
    else:
        rho = 1.0 + amplitude * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / width)
    u, v = velocity
    state = np.empty((NUM_VARS, g, g), dtype=np.float64)
    state[0] = rho
    state[1] = rho * u
    state[2] = rho * v
    state[3] = background_pressure / (mesh_config.gamma - 1.0) + 0.5 * rho * (u * u + v * v)
    return state


class Mesh:
    """شبکه M×M پچ‌ها به همراه بافرهای وجه"""

    def __init__(self, mesh_config, global_state):
        self.config = mesh_config
        M, n = mesh_config.M, mesh_config.n
        expected = (NUM_VARS, M * n, M * n)
        if global_state.shape != expected:
            raise MeshConfigError(f"global state shape {global_state.shape} != {expected}")
        self.patches = []
        self.faces = []
        for index in range(M * M):
            ix, iy = grid_position(index, M)
            interior = np.array(global_state[:, ix * n:(ix + 1) * n, iy * n:(iy + 1) * n], dtype=np.float64)
            patch = Patch(index=index, grid_pos=(ix, iy), interior=interior)
            faces = FaceBuffer(n)
            faces.reset(interior)
            self.patches.append(patch)
            self.faces.append(faces)
        logger.debug(f"شبکه با {M * M} پچ {n}×{n} ساخته شد")

    def global_state(self):
        M, n = self.config.M, self.config.n
        state = np.empty((NUM_VARS, M * n, M * n), dtype=np.float64)
        for patch in self.patches:
            ix, iy = patch.grid_pos
            state[:, ix * n:(ix + 1) * n, iy * n:(iy + 1) * n] = patch.interior
        return state

    def domain_sums(self):
        """مجموع دامنه‌ای متغیرهای پایستار با جمع دقیق"""
        return np.array([
            math.fsum(float(s) for patch in self.patches for s in patch.interior[k].ravel())
            for k in range(NUM_VARS)
        ])

    def global_lambda(self):
        """کاهش سریال بیشینه مقدار ویژه روی همه حجم‌ها"""
        gamma = self.config.gamma
        return max(float(np.max(_new_state_eigen(p.interior, gamma))) for p in self.patches)

    def checksum(self):
        digest = hashlib.sha256()
        for patch in self.patches:
            digest.update(np.ascontiguousarray(patch.interior).tobytes())
        return digest.hexdigest()

    def assign_owners(self, owners):
        for patch in self.patches:
            patch.owner = owners[patch.index]


def relative_drift(initial_sums, sums):
    """انحراف نسبی مجموع‌های پایستار؛ برای مؤلفه‌های صفر نسبت به جرم کل سنجیده می‌شود"""
    drift = []
    for k in range(NUM_VARS):
        scale = max(abs(initial_sums[k]), abs(initial_sums[0]))
        drift.append(abs(sums[k] - initial_sums[k]) / scale)
    return drift
