"""Reverse-mode automatic differentiation on a vectorized tape.

The tape records primitive operations on whole arrays.  A variable is
either *batched* (axis 0 indexes collocation samples and no primitive
ever mixes rows) or *unbatched* (parameters and other shared values).
Because samples never interact, one backward sweep with per-sample
accumulation yields the full residual Jacobian: the adjoint of an
unbatched leaf simply keeps the sample axis instead of summing over it.

Two backward modes:

* standard: adjoints of unbatched leaves are summed over samples; from a
  residual seed this produces the loss gradient J^T w.
* per-sample: adjoints of unbatched leaves keep a leading sample axis;
  from a unit seed this produces one Jacobian row per sample in a single
  sweep.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import DimensionError

Array = np.ndarray


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "idx", "value", "batched")

    level = 0  # below every jet; see ops.level_of
    __array_ufunc__ = None  # keep numpy from hijacking mixed expressions
    __array_priority__ = 100.0

    def __init__(self, tape: "Tape", idx: int, value: Array, batched: bool):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.batched = batched

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def primal(self) -> Array:
        return self.value

    # -- operator sugar ----------------------------------------------------
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

    # -- box protocol (self owns the op; other is a Var or a constant) ------
    def _add(self, other):
        return self.tape.record("add", (self, other))

    def _radd(self, other):
        return self.tape.record("add", (other, self))

    def _sub(self, other):
        return self.tape.record("sub", (self, other))

    def _rsub(self, other):
        return self.tape.record("sub", (other, self))

    def _mul(self, other):
        return self.tape.record("mul", (self, other))

    def _rmul(self, other):
        return self.tape.record("mul", (other, self))

    def _matmul(self, other):
        return self.tape.record("matmul", (self, other))

    def _rmatmul(self, other):
        return self.tape.record("matmul", (other, self))

    def _neg(self):
        return self.tape.record("neg", (self,))

    def _power(self, p: int):
        return self.tape.record("power", (self,), p=p)

    def _tanh(self):
        return self.tape.record("tanh", (self,))

    def _sin(self):
        return self.tape.record("sin", (self,))

    def _cos(self):
        return self.tape.record("cos", (self,))

    def _exp(self):
        return self.tape.record("exp", (self,))

    def _reshape(self, shape):
        return self.tape.record("reshape", (self,), shape=shape)

    def _squeeze_last(self):
        if self.value.shape[-1] != 1:
            raise DimensionError(
                f"last axis has size {self.value.shape[-1]}, expected 1"
            )
        return self.tape.record("reshape", (self,), shape=self.value.shape[:-1])


class _Node:
    __slots__ = ("op", "slots", "consts", "out_idx", "out_shape", "out_batched", "extra")

    def __init__(self, op, slots, consts, out_idx, out_shape, out_batched, extra):
        self.op = op
        self.slots = slots  # per-operand Var index or None when constant
        self.consts = consts  # per-operand constant value or None when Var
        self.out_idx = out_idx
        self.out_shape = out_shape
        self.out_batched = out_batched
        self.extra = extra


def _unbroadcast(grad: Array, target_shape: tuple[int, ...], keep_batch: bool) -> Array:
    """Reduce a broadcast gradient back to target_shape.

    keep_batch preserves grad's leading sample axis (per-sample adjoint of
    an unbatched variable): only axes beyond the first are reduced.
    """
    start = 1 if keep_batch else 0
    while grad.ndim > start + len(target_shape):
        grad = grad.sum(axis=start)
    for ax in range(start, grad.ndim):
        if target_shape[ax - start] == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tape:
    """Append-only record of primitive operations; replay backward for grads."""

    def __init__(self):
        self.nodes: list[_Node | None] = []
        self.values: list[Array] = []
        self.batched_flags: list[bool] = []

    # -- construction --------------------------------------------------------
    def leaf(self, value: Array, batched: bool = False) -> Var:
        value = np.asarray(value, dtype=np.float64)
        idx = len(self.values)
        self.values.append(value)
        self.batched_flags.append(batched)
        self.nodes.append(None)
        return Var(self, idx, value, batched)

    def _operand(self, x):
        """Split an operand into (var_index, constant)."""
        if isinstance(x, Var):
            if x.tape is not self:
                raise DimensionError("operands recorded on different tapes")
            return x.idx, None
        return None, np.asarray(x, dtype=np.float64)

    def record(self, op: str, operands: tuple, **extra) -> Var:
        slots, consts, vals, batched_in, const_in = [], [], [], [], []
        for x in operands:
            idx, const = self._operand(x)
            slots.append(idx)
            consts.append(const)
            if idx is None:
                vals.append(const)
                batched_in.append(False)
                const_in.append(True)
            else:
                vals.append(self.values[idx])
                batched_in.append(self.batched_flags[idx])
                const_in.append(False)

        value, out_batched = _FORWARD[op](vals, batched_in, extra, const_in)
        out_idx = len(self.values)
        self.values.append(value)
        self.batched_flags.append(out_batched)
        self.nodes.append(
            _Node(op, tuple(slots), tuple(consts), out_idx, value.shape, out_batched, extra)
        )
        return Var(self, out_idx, value, out_batched)

    # -- backward -------------------------------------------------------------
    def backward(
        self,
        roots: list[tuple[Var, Array]],
        wrt: list[Var],
        per_sample: bool = False,
        num_samples: int | None = None,
    ) -> list[Array]:
        """Adjoint sweep from seeded roots down to the wrt leaves.

        In per-sample mode the adjoint of every unbatched variable keeps a
        leading sample axis, so a unit seed on a batched (N,) root returns
        Jacobian rows (N, *leaf_shape) in one sweep.
        """
        adjoint: dict[int, Array] = {}
        for var, seed in roots:
            if var.tape is not self:
                raise DimensionError("root recorded on a different tape")
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != var.value.shape:
                raise DimensionError(
                    f"seed shape {seed.shape} != root shape {var.value.shape}"
                )
            if var.idx in adjoint:
                adjoint[var.idx] = adjoint[var.idx] + seed
            else:
                adjoint[var.idx] = seed.copy()
            if num_samples is None and var.batched:
                num_samples = var.value.shape[0]
        if per_sample and num_samples is None:
            raise DimensionError("per-sample backward needs at least one batched root")

        for idx in range(len(self.values) - 1, -1, -1):
            node = self.nodes[idx]
            if node is None:
                continue  # leaf: keep its accumulated adjoint for collection
            g = adjoint.pop(idx, None)
            if g is None:
                continue
            contribs = _BACKWARD[node.op](g, node, self, per_sample)
            for slot, contrib in zip(node.slots, contribs):
                if slot is None or contrib is None:
                    continue
                if slot in adjoint:
                    adjoint[slot] = adjoint[slot] + contrib
                else:
                    adjoint[slot] = contrib

        grads = []
        for var in wrt:
            g = adjoint.get(var.idx)
            if g is None:
                shape = var.value.shape
                if per_sample and not var.batched:
                    shape = (num_samples,) + shape
                g = np.zeros(shape)
            grads.append(g)
        return grads


# -- primitive forward rules ----------------------------------------------

def _fw_add(vals, batched, extra, const):
    return vals[0] + vals[1], batched[0] or batched[1]


def _fw_sub(vals, batched, extra, const):
    return vals[0] - vals[1], batched[0] or batched[1]


def _fw_mul(vals, batched, extra, const):
    return vals[0] * vals[1], batched[0] or batched[1]


def _fw_matmul(vals, batched, extra, const):
    # Restricted to the shape the networks need: sample-rows times a shared
    # weight matrix.  Left is (N, p) -- a batched variable or a constant
    # whose rows are samples; right is an unbatched (p, q) variable or
    # constant.  Output rows stay sample-indexed.
    a, b = vals
    if batched[1]:
        raise DimensionError("matmul right operand must be unbatched (parameters)")
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"tape matmul needs 2-d operands, got {a.shape} @ {b.shape}"
        )
    if not const[0] and not batched[0]:
        raise DimensionError("matmul left operand must be batched (sample rows)")
    return a @ b, True


def _fw_neg(vals, batched, extra, const):
    return -vals[0], batched[0]


def _fw_power(vals, batched, extra, const):
    return vals[0] ** extra["p"], batched[0]


def _fw_tanh(vals, batched, extra, const):
    return np.tanh(vals[0]), batched[0]


def _fw_sin(vals, batched, extra, const):
    return np.sin(vals[0]), batched[0]


def _fw_cos(vals, batched, extra, const):
    return np.cos(vals[0]), batched[0]


def _fw_exp(vals, batched, extra, const):
    return np.exp(vals[0]), batched[0]


def _fw_reshape(vals, batched, extra, const):
    v = vals[0]
    shape = extra["shape"]
    if batched[0] and (len(shape) == 0 or shape[0] != v.shape[0]):
        raise DimensionError("reshape of a batched variable must keep the sample axis")
    return v.reshape(shape), batched[0]


_FORWARD = {
    "add": _fw_add,
    "sub": _fw_sub,
    "mul": _fw_mul,
    "matmul": _fw_matmul,
    "neg": _fw_neg,
    "power": _fw_power,
    "tanh": _fw_tanh,
    "sin": _fw_sin,
    "cos": _fw_cos,
    "exp": _fw_exp,
    "reshape": _fw_reshape,
}


# -- primitive backward rules -----------------------------------------------

def _operand_info(node, tape, i):
    if node.slots[i] is None:
        return node.consts[i], False
    idx = node.slots[i]
    return tape.values[idx], tape.batched_flags[idx]


def _reduce_to(contrib, shape, batched, per_sample):
    keep = per_sample and not batched
    return _unbroadcast(contrib, shape, keep)


def _bw_add(g, node, tape, per_sample):
    out = []
    for i in range(2):
        if node.slots[i] is None:
            out.append(None)
            continue
        val, batched = _operand_info(node, tape, i)
        out.append(_reduce_to(g, val.shape, batched, per_sample))
    return out


def _bw_sub(g, node, tape, per_sample):
    out = []
    for i, sign in enumerate((1.0, -1.0)):
        if node.slots[i] is None:
            out.append(None)
            continue
        val, batched = _operand_info(node, tape, i)
        out.append(_reduce_to(g if sign > 0 else -g, val.shape, batched, per_sample))
    return out


def _bw_mul(g, node, tape, per_sample):
    a, a_b = _operand_info(node, tape, 0)
    b, b_b = _operand_info(node, tape, 1)
    out = [None, None]
    if node.slots[0] is not None:
        out[0] = _reduce_to(g * b, a.shape, a_b, per_sample)
    if node.slots[1] is not None:
        out[1] = _reduce_to(g * a, b.shape, b_b, per_sample)
    return out


def _bw_matmul(g, node, tape, per_sample):
    # out (N, q) = A (N, p) @ B (p, q) with sample-indexed rows; the adjoint
    # of the shared B keeps one (p, q) block per sample in per-sample mode.
    a, a_b = _operand_info(node, tape, 0)
    b, _ = _operand_info(node, tape, 1)
    out = [None, None]
    if node.slots[0] is not None:
        da = g @ b.T
        out[0] = _reduce_to(da, a.shape, a_b, per_sample)
    if node.slots[1] is not None:
        if per_sample:
            out[1] = np.einsum("ni,nj->nij", a, g)
        else:
            out[1] = a.T @ g
    return out


def _bw_neg(g, node, tape, per_sample):
    return [-g]


def _bw_power(g, node, tape, per_sample):
    v, _ = _operand_info(node, tape, 0)
    p = node.extra["p"]
    return [g * (p * v ** (p - 1))]


def _bw_tanh(g, node, tape, per_sample):
    t = tape.values[node.out_idx]
    return [g * (1.0 - t * t)]


def _bw_sin(g, node, tape, per_sample):
    v, _ = _operand_info(node, tape, 0)
    return [g * np.cos(v)]


def _bw_cos(g, node, tape, per_sample):
    v, _ = _operand_info(node, tape, 0)
    return [-g * np.sin(v)]


def _bw_exp(g, node, tape, per_sample):
    return [g * tape.values[node.out_idx]]


def _bw_reshape(g, node, tape, per_sample):
    v, batched = _operand_info(node, tape, 0)
    if per_sample and not batched:
        return [g.reshape(g.shape[:1] + v.shape)]
    return [g.reshape(v.shape)]


_BACKWARD = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "matmul": _bw_matmul,
    "neg": _bw_neg,
    "power": _bw_power,
    "tanh": _bw_tanh,
    "sin": _bw_sin,
    "cos": _bw_cos,
    "exp": _bw_exp,
    "reshape": _bw_reshape,
}
