"""Second-order jets in two variables.

A ``Jet`` carries a value together with its exact first and second partial
derivatives with respect to the surface parameters (u, v).  Arithmetic is
forward-mode and elementwise over numpy arrays, so one jet can represent a
whole batch of sample points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _arr(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Jet:
    val: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    duu: np.ndarray
    duv: np.ndarray
    dvv: np.ndarray

    @classmethod
    def const(cls, c) -> "Jet":
        c = _arr(c)
        z = np.zeros_like(c)
        return cls(c, z, z, z, z, z)

    @classmethod
    def variables(cls, u, v) -> tuple["Jet", "Jet"]:
        u, v = np.broadcast_arrays(_arr(u), _arr(v))
        z = np.zeros_like(u)
        one = np.ones_like(u)
        return cls(u, one, z, z, z, z), cls(v, z, one, z, z, z)

    # chain rule for a scalar function with derivatives f0, f1, f2 at self.val
    def _compose(self, f0, f1, f2) -> "Jet":
        return Jet(
            f0,
            f1 * self.du,
            f1 * self.dv,
            f1 * self.duu + f2 * self.du * self.du,
            f1 * self.duv + f2 * self.du * self.dv,
            f1 * self.dvv + f2 * self.dv * self.dv,
        )

    def __add__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.du, self.dv, self.duu, self.duv, self.dvv)
        return Jet(
            self.val + other.val,
            self.du + other.du,
            self.dv + other.dv,
            self.duu + other.duu,
            self.duv + other.duv,
            self.dvv + other.dvv,
        )

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.val, -self.du, -self.dv, -self.duu, -self.duv, -self.dvv)

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(
                self.val * other,
                self.du * other,
                self.dv * other,
                self.duu * other,
                self.duv * other,
                self.dvv * other,
            )
        a, b = self, other
        return Jet(
            a.val * b.val,
            a.du * b.val + a.val * b.du,
            a.dv * b.val + a.val * b.dv,
            a.duu * b.val + 2 * a.du * b.du + a.val * b.duu,
            a.duv * b.val + a.du * b.dv + a.dv * b.du + a.val * b.duv,
            a.dvv * b.val + 2 * a.dv * b.dv + a.val * b.dvv,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        x = self.val
        return self._compose(1.0 / x, -1.0 / x**2, 2.0 / x**3)

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return self * (1.0 / _arr(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def __pow__(self, n: int) -> "Jet":
        x = self.val
        return self._compose(x**n, n * x ** (n - 1), n * (n - 1) * x ** (n - 2))

    def sin(self) -> "Jet":
        s, c = np.sin(self.val), np.cos(self.val)
        return self._compose(s, c, -s)

    def cos(self) -> "Jet":
        s, c = np.sin(self.val), np.cos(self.val)
        return self._compose(c, -s, -c)

    def exp(self) -> "Jet":
        e = np.exp(self.val)
        return self._compose(e, e, e)

    def sqrt(self) -> "Jet":
        r = np.sqrt(self.val)
        return self._compose(r, 0.5 / r, -0.25 / (r * self.val))


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def stack(components) -> tuple[np.ndarray, ...]:
    """Stack three scalar jets into (value, d_u, d_v, d_uu, d_uv, d_vv) arrays of shape (..., 3)."""
    comps = [c if isinstance(c, Jet) else Jet.const(c) for c in components]
    shape = np.broadcast_shapes(*(c.val.shape for c in comps))
    out = []
    for name in ("val", "du", "dv", "duu", "duv", "dvv"):
        out.append(np.stack([np.broadcast_to(getattr(c, name), shape) for c in comps], axis=-1))
    return tuple(out)
