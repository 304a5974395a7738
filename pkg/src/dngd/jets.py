"""Forward-mode Taylor boxes: first-order duals and second-order 2-jets.

A Dual carries (value, d1): the directional derivative along one tangent.
A Jet2 carries (value, d1, d2): value, first, and second directional
derivative along the same direction, propagated by truncated Taylor
algebra.  Components may themselves be boxes of lower level (tape
variables or jets from an enclosing pass), which is what lets input jets
run inside a parameter tape and parameter jets enclose input jets.
"""

from __future__ import annotations

from . import ops


class Dual:
    """First-order forward-mode value: f and its directional derivative."""

    __slots__ = ("val", "d1", "level")

    __array_ufunc__ = None
    __array_priority__ = 110.0

    def __init__(self, val, d1, level: int):
        self.val = val
        self.d1 = d1
        self.level = level

    def primal(self):
        return self.val

    @property
    def shape(self):
        return ops.value_of(self.val).shape

    def _lift(self, val, d1):
        return Dual(val, d1, self.level)

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        return ops.matmul(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, p):
        return ops.power(self, p)

    # -- box protocol ----------------------------------------------------------
    def _is_peer(self, other) -> bool:
        return isinstance(other, Dual) and other.level == self.level

    def _add(self, other):
        if self._is_peer(other):
            return self._lift(ops.add(self.val, other.val), ops.add(self.d1, other.d1))
        return self._lift(ops.add(self.val, other), self.d1)

    def _radd(self, other):
        return self._add(other)

    def _sub(self, other):
        if self._is_peer(other):
            return self._lift(ops.sub(self.val, other.val), ops.sub(self.d1, other.d1))
        return self._lift(ops.sub(self.val, other), self.d1)

    def _rsub(self, other):
        # other - self with other constant at this level
        return self._lift(ops.sub(other, self.val), ops.neg(self.d1))

    def _mul(self, other):
        if self._is_peer(other):
            return self._lift(
                ops.mul(self.val, other.val),
                ops.add(ops.mul(self.d1, other.val), ops.mul(self.val, other.d1)),
            )
        return self._lift(ops.mul(self.val, other), ops.mul(self.d1, other))

    def _rmul(self, other):
        return self._mul(other)

    def _matmul(self, other):
        if self._is_peer(other):
            return self._lift(
                ops.matmul(self.val, other.val),
                ops.add(ops.matmul(self.d1, other.val), ops.matmul(self.val, other.d1)),
            )
        return self._lift(ops.matmul(self.val, other), ops.matmul(self.d1, other))

    def _rmatmul(self, other):
        return self._lift(ops.matmul(other, self.val), ops.matmul(other, self.d1))

    def _neg(self):
        return self._lift(ops.neg(self.val), ops.neg(self.d1))

    def _power(self, p: int):
        if p == 1:
            return self
        dv = ops.mul(float(p), ops.power(self.val, p - 1))
        return self._lift(ops.power(self.val, p), ops.mul(dv, self.d1))

    def _tanh(self):
        t = ops.tanh(self.val)
        one_m_t2 = ops.sub(1.0, ops.mul(t, t))
        return self._lift(t, ops.mul(one_m_t2, self.d1))

    def _sin(self):
        return self._lift(ops.sin(self.val), ops.mul(ops.cos(self.val), self.d1))

    def _cos(self):
        return self._lift(ops.cos(self.val), ops.neg(ops.mul(ops.sin(self.val), self.d1)))

    def _exp(self):
        e = ops.exp(self.val)
        return self._lift(e, ops.mul(e, self.d1))

    def _reshape(self, shape):
        return self._lift(ops.reshape(self.val, shape), ops.reshape(self.d1, shape))

    def _squeeze_last(self):
        return self._lift(ops.squeeze_last(self.val), ops.squeeze_last(self.d1))


class Jet2:
    """Second-order Taylor jet along one direction: (f, f', f'')."""

    __slots__ = ("val", "d1", "d2", "level")

    __array_ufunc__ = None
    __array_priority__ = 120.0

    def __init__(self, val, d1, d2, level: int):
        self.val = val
        self.d1 = d1
        self.d2 = d2
        self.level = level

    def primal(self):
        return self.val

    @property
    def shape(self):
        return ops.value_of(self.val).shape

    def _lift(self, val, d1, d2):
        return Jet2(val, d1, d2, self.level)

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        return ops.matmul(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, p):
        return ops.power(self, p)

    # -- box protocol ------------------------------------------------------------
    def _is_peer(self, other) -> bool:
        return isinstance(other, Jet2) and other.level == self.level

    def _add(self, other):
        if self._is_peer(other):
            return self._lift(
                ops.add(self.val, other.val),
                ops.add(self.d1, other.d1),
                ops.add(self.d2, other.d2),
            )
        return self._lift(ops.add(self.val, other), self.d1, self.d2)

    def _radd(self, other):
        return self._add(other)

    def _sub(self, other):
        if self._is_peer(other):
            return self._lift(
                ops.sub(self.val, other.val),
                ops.sub(self.d1, other.d1),
                ops.sub(self.d2, other.d2),
            )
        return self._lift(ops.sub(self.val, other), self.d1, self.d2)

    def _rsub(self, other):
        return self._lift(ops.sub(other, self.val), ops.neg(self.d1), ops.neg(self.d2))

    def _mul(self, other):
        if self._is_peer(other):
            # (fg)'' = f''g + 2f'g' + fg''
            return self._lift(
                ops.mul(self.val, other.val),
                ops.add(ops.mul(self.d1, other.val), ops.mul(self.val, other.d1)),
                ops.add(
                    ops.add(ops.mul(self.d2, other.val), ops.mul(self.val, other.d2)),
                    ops.mul(2.0, ops.mul(self.d1, other.d1)),
                ),
            )
        return self._lift(
            ops.mul(self.val, other), ops.mul(self.d1, other), ops.mul(self.d2, other)
        )

    def _rmul(self, other):
        return self._mul(other)

    def _matmul(self, other):
        if self._is_peer(other):
            return self._lift(
                ops.matmul(self.val, other.val),
                ops.add(ops.matmul(self.d1, other.val), ops.matmul(self.val, other.d1)),
                ops.add(
                    ops.add(ops.matmul(self.d2, other.val), ops.matmul(self.val, other.d2)),
                    ops.mul(2.0, ops.matmul(self.d1, other.d1)),
                ),
            )
        return self._lift(
            ops.matmul(self.val, other),
            ops.matmul(self.d1, other),
            ops.matmul(self.d2, other),
        )

    def _rmatmul(self, other):
        return self._lift(
            ops.matmul(other, self.val),
            ops.matmul(other, self.d1),
            ops.matmul(other, self.d2),
        )

    def _neg(self):
        return self._lift(ops.neg(self.val), ops.neg(self.d1), ops.neg(self.d2))

    def _power(self, p: int):
        if p == 1:
            return self
        # f^p: d1 = p f^{p-1} f', d2 = p f^{p-1} f'' + p(p-1) f^{p-2} f'^2
        fp1 = ops.power(self.val, p - 1)
        d1 = ops.mul(float(p), ops.mul(fp1, self.d1))
        d1sq = ops.mul(self.d1, self.d1)
        if p >= 3:
            curv = ops.mul(float(p * (p - 1)), ops.mul(ops.power(self.val, p - 2), d1sq))
        else:
            curv = ops.mul(2.0, d1sq)
        d2 = ops.add(ops.mul(float(p), ops.mul(fp1, self.d2)), curv)
        return self._lift(ops.power(self.val, p), d1, d2)

    def _tanh(self):
        # t = tanh f: d1 = (1-t^2) f', d2 = (1-t^2) f'' - 2 t (1-t^2) f'^2
        t = ops.tanh(self.val)
        one_m_t2 = ops.sub(1.0, ops.mul(t, t))
        d1 = ops.mul(one_m_t2, self.d1)
        d2 = ops.sub(
            ops.mul(one_m_t2, self.d2),
            ops.mul(2.0, ops.mul(t, ops.mul(one_m_t2, ops.mul(self.d1, self.d1)))),
        )
        return self._lift(t, d1, d2)

    def _sin(self):
        s, c = ops.sin(self.val), ops.cos(self.val)
        d1 = ops.mul(c, self.d1)
        d2 = ops.sub(ops.mul(c, self.d2), ops.mul(s, ops.mul(self.d1, self.d1)))
        return self._lift(s, d1, d2)

    def _cos(self):
        s, c = ops.sin(self.val), ops.cos(self.val)
        d1 = ops.neg(ops.mul(s, self.d1))
        d2 = ops.neg(ops.add(ops.mul(s, self.d2), ops.mul(c, ops.mul(self.d1, self.d1))))
        return self._lift(c, d1, d2)

    def _exp(self):
        e = ops.exp(self.val)
        d1 = ops.mul(e, self.d1)
        d2 = ops.mul(e, ops.add(self.d2, ops.mul(self.d1, self.d1)))
        return self._lift(e, d1, d2)

    def _reshape(self, shape):
        return self._lift(
            ops.reshape(self.val, shape),
            ops.reshape(self.d1, shape),
            ops.reshape(self.d2, shape),
        )

    def _squeeze_last(self):
        return self._lift(
            ops.squeeze_last(self.val),
            ops.squeeze_last(self.d1),
            ops.squeeze_last(self.d2),
        )
