"""Forward-mode automatic differentiation with nestable dual numbers.

A ``Dual`` carries a value and a tuple of partial-derivative components.
Every dual belongs to a differentiation *level*; values of a lower level
(floats, numpy arrays, or duals created earlier) behave as constants with
respect to a higher level.  Nesting levels is what gives exact second and
higher derivatives: evaluating f'(s) with an argument that is itself a
dual propagates f'' through the chain rule automatically.

Components may be numpy arrays, so a single evaluation can sweep many
sample points at once.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual",
    "seed",
    "level_of",
    "lift_level",
    "primal",
    "value_grad",
    "sin",
    "cos",
    "tan",
    "exp",
    "sqrt",
    "arctan",
]


def level_of(x):
    return x.level if isinstance(x, Dual) else 0


def lift_level(*values):
    """Smallest level strictly above every value's level."""
    return 1 + max((level_of(v) for v in values), default=0)


def primal(x):
    """Strip all dual structure, returning the underlying float/array."""
    while isinstance(x, Dual):
        x = x.val
    return x


class Dual:
    __slots__ = ("level", "val", "grad")

    # keep numpy from broadcasting over us; defer to __radd__ etc.
    __array_ufunc__ = None

    def __init__(self, level, val, grad):
        self.level = level
        self.val = val
        self.grad = grad

    def __repr__(self):
        return f"Dual(L{self.level}, {self.val!r}, {self.grad!r})"

    # -- helpers -------------------------------------------------------
    def _split(self, other):
        """Return (value-part, grad-part or None) of `other` at self.level."""
        if isinstance(other, Dual) and other.level == self.level:
            return other.val, other.grad
        return other, None

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual) and other.level > self.level:
            return Dual(other.level, self + other.val, other.grad)
        ov, og = self._split(other)
        if og is None:
            return Dual(self.level, self.val + ov, self.grad)
        return Dual(self.level, self.val + ov, tuple(a + b for a, b in zip(self.grad, og)))

    __radd__ = __add__

    def __neg__(self):
        return Dual(self.level, -self.val, tuple(-g for g in self.grad))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual) and other.level > self.level:
            return Dual(other.level, self * other.val, tuple(self * g for g in other.grad))
        ov, og = self._split(other)
        if og is None:
            return Dual(self.level, self.val * ov, tuple(g * ov for g in self.grad))
        return Dual(
            self.level,
            self.val * ov,
            tuple(a * ov + self.val * b for a, b in zip(self.grad, og)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual) and other.level > self.level:
            return other.__rtruediv__(self)
        ov, og = self._split(other)
        if og is None:
            return Dual(self.level, self.val / ov, tuple(g / ov for g in self.grad))
        inv = self.val / ov
        return Dual(
            self.level,
            inv,
            tuple((a - inv * b) / ov for a, b in zip(self.grad, og)),
        )

    def __rtruediv__(self, other):
        # other / self with other constant at this level
        v = other / self.val
        return Dual(self.level, v, tuple(-v * g / self.val for g in self.grad))

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("dual powers are integer only")
        if k == 0:
            return Dual(self.level, self.val * 0 + 1.0, tuple(g * 0 for g in self.grad))
        d = k * self.val ** (k - 1)
        return Dual(self.level, self.val**k, tuple(d * g for g in self.grad))

    # -- elementary functions (chain rule) -----------------------------
    def _chain(self, fval, dval):
        return Dual(self.level, fval, tuple(dval * g for g in self.grad))

    def _sin(self):
        return self._chain(sin(self.val), cos(self.val))

    def _cos(self):
        return self._chain(cos(self.val), -sin(self.val))

    def _tan(self):
        t = tan(self.val)
        return self._chain(t, 1.0 + t * t)

    def _exp(self):
        e = exp(self.val)
        return self._chain(e, e)

    def _sqrt(self):
        r = sqrt(self.val)
        return self._chain(r, 0.5 / r)

    def _arctan(self):
        return self._chain(arctan(self.val), 1.0 / (1.0 + self.val * self.val))


def sin(x):
    return x._sin() if hasattr(x, "_sin") else np.sin(x)


def cos(x):
    return x._cos() if hasattr(x, "_cos") else np.cos(x)


def tan(x):
    return x._tan() if hasattr(x, "_tan") else np.tan(x)


def exp(x):
    return x._exp() if hasattr(x, "_exp") else np.exp(x)


def sqrt(x):
    return x._sqrt() if hasattr(x, "_sqrt") else np.sqrt(x)


def arctan(x):
    return x._arctan() if hasattr(x, "_arctan") else np.arctan(x)


def seed(values, names):
    """Seed `names` (keys of `values`) as independent variables one level up.

    Returns (level, env) where env maps every key of `values` to either a
    freshly seeded Dual (for keys in `names`) or the untouched constant.
    """
    lvl = lift_level(*values.values())
    n = len(names)
    env = dict(values)
    for i, nm in enumerate(names):
        unit = tuple(1.0 if j == i else 0.0 for j in range(n))
        env[nm] = Dual(lvl, values[nm], unit)
    return lvl, env


def value_grad(result, level, n):
    """Unpack (value, grads) of `result` with respect to a seeding level."""
    if isinstance(result, Dual) and result.level == level:
        return result.val, result.grad
    return result, (0.0,) * n
