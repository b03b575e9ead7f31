"""
پیاده‌سازی مستقل و تک‌نخی یک گام زمانی با حلقه ساده روی تک‌تک حجم‌ها
برای مقایسه بیت به بیت با کرنل برداری پچ‌ها
"""
import logging
import math

import numpy as np

logger = logging.getLogger(__name__)


def _pressure(u, gamma):
    rho, mx, my, E = u
    return (gamma - 1.0) * (E - (mx * mx + my * my) / (2.0 * rho))


def _flux(u, p, axis):
    rho, mx, my, E = u
    if axis == 0:
        return (mx, mx * mx / rho + p, mx * my / rho, (E + p) * mx / rho)
    return (my, mx * my / rho, my * my / rho + p, (E + p) * my / rho)


def _eigen(u, p, axis, gamma):
    return abs(u[1 + axis] / u[0]) + math.sqrt(gamma * p / u[0])


def _rusanov(ul, ur, axis, gamma):
    pl = _pressure(ul, gamma)
    pr = _pressure(ur, gamma)
    fl = _flux(ul, pl, axis)
    fr = _flux(ur, pr, axis)
    lam = max(_eigen(ul, pl, axis, gamma), _eigen(ur, pr, axis, gamma))
    return tuple(0.5 * (fl[k] + fr[k]) - 0.5 * lam * (ur[k] - ul[k]) for k in range(4))


def brute_force_step(state, dt, h, gamma):
    """یک گام روسانوف روی آرایه سراسری (4, G, G) با مرز تناوبی

    Returns:
        tuple: (آرایه جدید، بیشینه مقدار ویژه حالت جدید)
    """
    g = state.shape[1]
    cells = [[tuple(float(state[k, i, j]) for k in range(4)) for j in range(g)] for i in range(g)]
    coef = dt / h
    new = np.empty_like(state)
    lam_max = 0.0
    for i in range(g):
        for j in range(g):
            u = cells[i][j]
            fxl = _rusanov(cells[(i - 1) % g][j], u, 0, gamma)
            fxr = _rusanov(u, cells[(i + 1) % g][j], 0, gamma)
            fyb = _rusanov(cells[i][(j - 1) % g], u, 1, gamma)
            fyt = _rusanov(u, cells[i][(j + 1) % g], 1, gamma)
            updated = tuple(
                u[k] - coef * (((fxr[k] - fxl[k]) + fyt[k]) - fyb[k]) for k in range(4)
            )
            for k in range(4):
                new[k, i, j] = updated[k]
            p = _pressure(updated, gamma)
            lam_max = max(lam_max, _eigen(updated, p, 0, gamma), _eigen(updated, p, 1, gamma))
    return new, lam_max


def first_difference(expected, actual):
    """اولین اندیس حجمی که دو آرایه در آن بیت به بیت متفاوت‌اند، یا None"""
    same = expected.view(np.uint64) == actual.view(np.uint64)
    if np.all(same):
        return None
    var, i, j = (int(v) for v in np.argwhere(~same)[0])
    return {"var": var, "i": i, "j": j, "expected": float(expected[var, i, j]), "actual": float(actual[var, i, j])}
