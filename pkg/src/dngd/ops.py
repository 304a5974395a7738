"""Generic numeric operations dispatched over numpy arrays and AD boxes.

Every differentiable value in this library is either a plain numpy array
(or scalar) or a "box": a tape variable (reverse mode) or a Taylor jet
(forward mode).  Boxes carry an integer ``level``; when two boxes meet in
a binary operation, the one with the higher level owns the operation and
treats the other as a constant coefficient.  Equal levels mean the two
boxes belong to the same differentiation pass and the full product/chain
rules apply.  Plain arrays sit below every box.

Residual evaluation code is written against these functions once and then
runs unchanged in plain numpy, under the tape, or under jets of either
direction.
"""

from __future__ import annotations

import numpy as np


def level_of(x) -> int | None:
    """Box level, or None for plain arrays and scalars."""
    return getattr(x, "level", None)


def _dispatch_binary(a, b, name: str):
    la, lb = level_of(a), level_of(b)
    if la is None and lb is None:
        return None  # caller handles the numpy case
    if lb is None or (la is not None and la >= lb):
        return getattr(a, "_" + name)(b)
    return getattr(b, "_r" + name)(a)


def add(a, b):
    out = _dispatch_binary(a, b, "add")
    return a + b if out is None else out


def sub(a, b):
    out = _dispatch_binary(a, b, "sub")
    return a - b if out is None else out


def mul(a, b):
    out = _dispatch_binary(a, b, "mul")
    return a * b if out is None else out


def matmul(a, b):
    out = _dispatch_binary(a, b, "matmul")
    return a @ b if out is None else out


def neg(a):
    return -a if level_of(a) is None else a._neg()


def power(a, p: int):
    """Integer power, p >= 1."""
    p = int(p)
    if p < 1:
        raise ValueError(f"power expects integer exponent >= 1, got {p}")
    if level_of(a) is None:
        return a ** p
    return a._power(p)


def tanh(a):
    return np.tanh(a) if level_of(a) is None else a._tanh()


def sin(a):
    return np.sin(a) if level_of(a) is None else a._sin()


def cos(a):
    return np.cos(a) if level_of(a) is None else a._cos()


def exp(a):
    return np.exp(a) if level_of(a) is None else a._exp()


def reshape(a, shape: tuple[int, ...]):
    if level_of(a) is None:
        return np.reshape(a, shape)
    return a._reshape(tuple(shape))


def squeeze_last(a):
    """Drop a trailing axis of size 1, keeping any leading stack axes."""
    if level_of(a) is None:
        a = np.asarray(a)
        if a.shape[-1] != 1:
            raise ValueError(f"last axis has size {a.shape[-1]}, expected 1")
        return a[..., 0]
    return a._squeeze_last()


def value_of(x) -> np.ndarray:
    """Strip every box layer and return the underlying numpy value."""
    while level_of(x) is not None:
        x = x.primal()
    return np.asarray(x)


_LEVEL_COUNTER = [0]


def new_level() -> int:
    """Allocate a fresh box level, above all existing ones."""
    _LEVEL_COUNTER[0] += 1
    return _LEVEL_COUNTER[0]
