"""Classical fixed-step Runge-Kutta integration."""

from __future__ import annotations

from typing import Callable

import numpy as np


def rk4_step(rhs: Callable, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(
    rhs: Callable,
    y0: np.ndarray,
    step: float,
    n_steps: int,
    valid: Callable | None = None,
) -> tuple[np.ndarray, bool]:
    """Integrate an autonomous system ``y' = rhs(y)`` with RK4.

    ``valid(y)`` is checked after every step; the first state that fails it
    is dropped and integration stops.  Any exception raised by ``rhs`` also
    stops integration.  Returns the array of accepted states (including
    ``y0``) and a truncation flag.
    """
    ys = [np.asarray(y0, dtype=float)]
    for _ in range(n_steps):
        try:
            y = rk4_step(rhs, ys[-1], step)
        except (ValueError, FloatingPointError, ArithmeticError):
            return np.array(ys), True
        if not np.all(np.isfinite(y)) or (valid is not None and not valid(y)):
            return np.array(ys), True
        ys.append(y)
    return np.array(ys), False


def observed_order(coarse: float, medium: float, fine: float) -> float:
    """Convergence order from three solutions at steps h, h/2, h/4."""
    e1 = np.linalg.norm(np.subtract(coarse, medium))
    e2 = np.linalg.norm(np.subtract(medium, fine))
    return float(np.log2(e1 / e2))
