"""Newton correction and predictor-corrector tracing of planar implicit curves."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class ContinuationStall(RuntimeError):
    pass


def fd_gradient(fun: Callable, x: np.ndarray, h: float, batch: Callable | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function of two variables.

    ``batch`` optionally evaluates the function on an (n, 2) array at once.
    """
    e = np.eye(2) * h
    if batch is not None:
        vals = batch(np.stack([x + e[0], x - e[0], x + e[1], x - e[1]]))
        return np.array([vals[0] - vals[1], vals[2] - vals[3]]) / (2 * h)
    return np.array([(fun(x + e[i]) - fun(x - e[i])) / (2 * h) for i in range(2)])


def newton_scalar(
    fun: Callable, x: np.ndarray, h: float, tol: float, max_iter: int = 30, batch: Callable | None = None
) -> np.ndarray:
    """Minimum-norm Newton iteration for one equation in two unknowns."""
    x = np.asarray(x, dtype=float)
    for _ in range(max_iter):
        f = fun(x)
        if abs(f) < tol:
            return x
        grad = fd_gradient(fun, x, h, batch)
        gg = grad @ grad
        if gg == 0 or not np.isfinite(gg):
            break
        x = x - f * grad / gg
    if abs(fun(x)) < tol:
        return x
    raise ContinuationStall("Newton corrector did not converge")


def newton_system(fun: Callable, jac: Callable, x: np.ndarray, tol: float, max_iter: int = 50) -> np.ndarray:
    """Plain Newton iteration for two equations in two unknowns."""
    x = np.asarray(x, dtype=float)
    for _ in range(max_iter):
        f = fun(x)
        if np.linalg.norm(f) < tol:
            return x
        x = x - np.linalg.solve(jac(x), f)
        if not np.all(np.isfinite(x)):
            break
    if np.all(np.isfinite(x)) and np.linalg.norm(fun(x)) < tol:
        return x
    raise ContinuationStall("Newton iteration diverged")


@dataclass
class TracedCurve:
    nodes: np.ndarray
    closed: bool
    stalled: bool


def trace_curve(
    fun: Callable,
    start: np.ndarray,
    step: float,
    max_steps: int,
    *,
    tol: float = 1e-12,
    fd_h: float = 1e-6,
    period: tuple[float | None, float | None] = (None, None),
    inside: Callable | None = None,
    min_step: float | None = None,
    batch: Callable | None = None,
) -> TracedCurve:
    """Trace the zero set of a scalar function of (u, v) from ``start``.

    Euler predictor along the tangent, minimum-norm Newton corrector.  The
    step is halved on corrector failure; a step below ``min_step`` raises
    :class:`ContinuationStall`.  Tracing stops when the curve closes up
    (modulo the given parameter periods) or leaves ``inside``.
    """
    min_step = step * 1e-3 if min_step is None else min_step
    x = newton_scalar(fun, start, fd_h, tol, batch=batch)
    nodes = [x]
    tangent = None
    h = step

    def wrapped_distance(a, b):
        d = a - b
        for i, p in enumerate(period):
            if p:
                d[i] = (d[i] + p / 2) % p - p / 2
        return np.linalg.norm(d)

    for i in range(max_steps):
        grad = fd_gradient(fun, x, fd_h, batch)
        t = np.array([-grad[1], grad[0]]) / np.linalg.norm(grad)
        if tangent is not None and t @ tangent < 0:
            t = -t
        while True:
            try:
                y = newton_scalar(fun, x + h * t, fd_h, tol, batch=batch)
                if np.linalg.norm(y - x) > 2 * h:
                    raise ContinuationStall("corrector jumped branches")
                break
            except ContinuationStall:
                h *= 0.5
                if h < min_step:
                    raise ContinuationStall(f"step underflow after {i} steps")
        tangent = t
        x = y
        h = min(step, 1.5 * h)
        if inside is not None and not inside(x):
            return TracedCurve(np.array(nodes), False, True)
        nodes.append(x)
        if i > 4 and wrapped_distance(x, nodes[0]) < 0.75 * step:
            return TracedCurve(np.array(nodes), True, False)
    return TracedCurve(np.array(nodes), False, False)
