"""Forward-mode dual numbers.

A Dual carries a value together with a seed vector of partial derivatives,
so one evaluation of a field written in terms of the functions below yields
the exact gradient with respect to every seeded coordinate at once.  This is
the default derivative engine for fields constructed from plain callables;
hand-coded analytic derivatives and central finite differences remain
available where speed or independence matters.
"""
from __future__ import annotations

import math

import numpy as np


class Dual:
    """Value plus derivative seed.  Arithmetic propagates first derivatives."""

    __slots__ = ("val", "eps")

    def __init__(self, val: float, eps) -> None:
        self.val = float(val)
        self.eps = np.asarray(eps, dtype=float)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        return Dual(self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.eps - other.eps)
        return Dual(self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.val * other.eps + other.val * self.eps)
        return Dual(self.val * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv,
                        (self.eps - self.val * inv * other.eps) * inv)
        return Dual(self.val / other, self.eps / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        return Dual(other * inv, -other * inv * inv * self.eps)

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        return Dual(self.val ** p, p * self.val ** (p - 1) * self.eps)

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __abs__(self):
        # derivative of |x| away from 0; the kink itself is out of scope
        s = 1.0 if self.val >= 0.0 else -1.0
        return Dual(abs(self.val), s * self.eps)

    # comparisons act on the value part, so branch conditions keep working
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    def __float__(self):
        raise TypeError("implicit Dual -> float truncation; use .val")

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"


def _value(z):
    return z.val if isinstance(z, Dual) else float(z)


def _chain(z, f, df):
    if isinstance(z, Dual):
        return Dual(f(z.val), df(z.val) * z.eps)
    return f(z)


def sin(z):
    return _chain(z, math.sin, math.cos)


def cos(z):
    return _chain(z, math.cos, lambda v: -math.sin(v))


def tan(z):
    return _chain(z, math.tan, lambda v: 1.0 + math.tan(v) ** 2)


def exp(z):
    return _chain(z, math.exp, math.exp)


def log(z):
    return _chain(z, math.log, lambda v: 1.0 / v)


def sqrt(z):
    return _chain(z, math.sqrt, lambda v: 0.5 / math.sqrt(v))


def arctan(z):
    return _chain(z, math.atan, lambda v: 1.0 / (1.0 + v * v))


def value(z) -> float:
    """Value part of a Dual, or the float itself."""
    return _value(z)


def grad(z, n: int) -> np.ndarray:
    """Seed part of a Dual as a length-n vector; zeros for a plain float."""
    if isinstance(z, Dual):
        return np.array(z.eps, dtype=float)
    return np.zeros(n)


def seed(x) -> list[Dual]:
    """Lift a point to Duals seeded with the coordinate directions."""
    x = np.asarray(x, dtype=float)
    n = x.size
    return [Dual(x[k], np.eye(n)[k]) for k in range(n)]
