"""Residual maps: collocation sets, residual batches, and their derivatives.

A residual map r(theta): R^n -> R^m stacks weighted per-class residuals
over fixed collocation points. One core definition, written against the
generic operation layer, serves every evaluation mode:

* plain numpy           -> residual values
* reverse-mode tape     -> gradients, transposed products, full Jacobian
* forward-mode duals    -> Jacobian-vector products (single or stacked)
* second-order jets     -> directional curvature of the residuals
* stacked numpy weights -> losses of many parameter candidates at once
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import DimensionError, NonFiniteError
from .jets import Dual, Jet2
from .params import ParameterLayout, ParameterVector
from .tape import Tape

INTERIOR = "interior"
BOUNDARY = "boundary"
INITIAL = "initial"

_CLASS_IDS = (INTERIOR, BOUNDARY, INITIAL)


@dataclass
class CollocationClass:
    """Points of one residual class with its fixed loss weight.

    weight multiplies every residual of the class; sampling sets it to
    1/sqrt(N) so that the summed square loss matches the per-class mean
    square convention. Sub-selection keeps the parent weight, so a subset
    map reproduces the same residual values row for row.
    """

    class_id: str
    points: np.ndarray  # (N, dim)
    weight: float
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.class_id not in _CLASS_IDS:
            raise DimensionError(f"unknown residual class id: {self.class_id!r}")
        pts = np.asarray(self.points, dtype=np.float64)
        self.points = pts[:, None] if pts.ndim == 1 else pts

    @property
    def count(self) -> int:
        return self.points.shape[0]


class CollocationSet:
    """Ordered residual classes; rows of r(theta) follow this order."""

    def __init__(self, classes: list[CollocationClass]):
        if not classes:
            raise DimensionError("a collocation set needs at least one class")
        self.classes = list(classes)

    @property
    def m(self) -> int:
        return sum(c.count for c in self.classes)

    def partition(self) -> list[tuple[str, int, int]]:
        """(class_id, start, stop) spans of the stacked residual vector."""
        spans, start = [], 0
        for c in self.classes:
            spans.append((c.class_id, start, start + c.count))
            start += c.count
        return spans

    def locate(self, row: int) -> tuple[int, int]:
        """Global residual row -> (class index, local point index)."""
        if not 0 <= row < self.m:
            raise DimensionError(f"residual row {row} out of range [0, {self.m})")
        for k, (_, start, stop) in enumerate(self.partition()):
            if row < stop:
                return k, row - start
        raise AssertionError("unreachable")

    def subset(self, rows: np.ndarray) -> "CollocationSet":
        """Classes restricted to the given sorted global residual rows."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim != 1 or rows.size == 0:
            raise DimensionError("subset needs a non-empty 1-d list of rows")
        if np.any(np.diff(rows) <= 0):
            raise DimensionError("subset rows must be strictly increasing")
        if rows[0] < 0 or rows[-1] >= self.m:
            raise DimensionError(f"subset rows out of range [0, {self.m})")
        classes = []
        for c, (_, start, stop) in zip(self.classes, self.partition()):
            local = rows[(rows >= start) & (rows < stop)] - start
            if local.size == 0:
                continue
            aux = {k: np.asarray(v)[local] for k, v in c.aux.items()}
            classes.append(CollocationClass(c.class_id, c.points[local], c.weight, aux))
        return CollocationSet(classes)


@dataclass
class ResidualBatch:
    """Stacked residual values with their class partition."""

    values: np.ndarray  # (m,)
    partition: list[tuple[str, int, int]]

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def per_class(self) -> dict[str, np.ndarray]:
        return {cid: self.values[a:b] for cid, a, b in self.partition}

    def loss(self) -> float:
        return 0.5 * float(self.values @ self.values)


def _check_finite(values: np.ndarray, partition) -> None:
    if np.all(np.isfinite(values)):
        return
    bad = int(np.flatnonzero(~np.isfinite(values))[0])
    for cid, a, b in partition:
        if a <= bad < b:
            raise NonFiniteError(
                f"non-finite residual in class {cid!r} at point {bad - a}",
                class_id=cid,
                point_index=bad - a,
            )
    raise NonFiniteError("non-finite residual", point_index=bad)


class ResidualMap:
    """Base for maps whose core is written against the generic operations.

    Subclasses implement _core(arrays) returning one algebra value of
    shape [..., N] per collocation class, already weight-scaled, plus
    rebind(collocation) for subset extraction.
    """

    layout: ParameterLayout
    collocation: CollocationSet

    # -- subclass surface ---------------------------------------------------
    def _core(self, arrays: list) -> list:
        raise NotImplementedError

    def rebind(self, collocation: CollocationSet) -> "ResidualMap":
        raise NotImplementedError

    # -- shapes ---------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.layout.size

    @property
    def m(self) -> int:
        return self.collocation.m

    def partition(self) -> list[tuple[str, int, int]]:
        return self.collocation.partition()

    def _arrays(self, theta: ParameterVector) -> list[np.ndarray]:
        if theta.layout != self.layout:
            raise DimensionError("parameter vector layout does not match this map")
        return theta.arrays()

    def _class_sizes(self) -> list[int]:
        return [c.count for c in self.collocation.classes]

    # -- value evaluation ------------------------------------------------------
    def residual_batch(self, theta: ParameterVector) -> ResidualBatch:
        outs = self._core(self._arrays(theta))
        values = np.concatenate([np.asarray(o, dtype=np.float64) for o in outs])
        partition = self.partition()
        _check_finite(values, partition)
        return ResidualBatch(values, partition)

    def loss(self, theta: ParameterVector) -> float:
        return self.residual_batch(theta).loss()

    def loss_many(self, candidates: np.ndarray) -> np.ndarray:
        """Losses of stacked parameter vectors (C, n) -> (C,), no finite check."""
        candidates = np.asarray(candidates, dtype=np.float64)
        if candidates.ndim != 2:
            raise DimensionError("loss_many expects a (C, n) candidate stack")
        arrays = self.layout.unflatten(candidates)
        outs = self._core(arrays)
        C = candidates.shape[0]
        cols = []
        for out, size in zip(outs, self._class_sizes()):
            arr = np.asarray(out, dtype=np.float64)
            cols.append(np.broadcast_to(arr, (C, size)))
        r = np.concatenate(cols, axis=1)
        return 0.5 * np.einsum("ij,ij->i", r, r)

    # -- reverse mode -------------------------------------------------------------
    def _taped(self, theta: ParameterVector):
        tape = Tape()
        leaves = [tape.leaf(a) for a in self._arrays(theta)]
        outs = self._core(leaves)
        return tape, leaves, outs

    def _flatten_grads(self, grads: list[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(g).reshape(-1) for g in grads])

    def _seed_roots(self, outs, w: np.ndarray):
        roots, start = [], 0
        for out, size in zip(outs, self._class_sizes()):
            roots.append((out, w[start : start + size]))
            start += size
        return roots

    def vjp(self, theta: ParameterVector, w: np.ndarray) -> np.ndarray:
        """Transposed Jacobian product J(theta)^T w -> (n,)."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.m,):
            raise DimensionError(f"cotangent has shape {w.shape}, expected ({self.m},)")
        tape, leaves, outs = self._taped(theta)
        grads = tape.backward(self._seed_roots(outs, w), leaves)
        return self._flatten_grads(grads)

    def residuals_and_gradient(self, theta: ParameterVector) -> tuple[ResidualBatch, np.ndarray]:
        """One pass giving r(theta) and the loss gradient J^T r."""
        tape, leaves, outs = self._taped(theta)
        values = np.concatenate([np.asarray(o.value) for o in outs])
        partition = self.partition()
        _check_finite(values, partition)
        grads = tape.backward(self._seed_roots(outs, values), leaves)
        return ResidualBatch(values, partition), self._flatten_grads(grads)

    def gradient(self, theta: ParameterVector) -> np.ndarray:
        return self.residuals_and_gradient(theta)[1]

    def linearize(self, theta: ParameterVector) -> tuple[ResidualBatch, np.ndarray]:
        """Residuals and the full Jacobian (m, n), one row block per class."""
        tape, leaves, outs = self._taped(theta)
        values = np.concatenate([np.asarray(o.value) for o in outs])
        partition = self.partition()
        _check_finite(values, partition)
        blocks = []
        for out in outs:
            count = out.value.shape[0]
            grads = tape.backward(
                [(out, np.ones(count))], leaves, per_sample=True, num_samples=count
            )
            blocks.append(
                np.concatenate([g.reshape(count, -1) for g in grads], axis=1)
            )
        return ResidualBatch(values, partition), np.concatenate(blocks, axis=0)

    def jacobian(self, theta: ParameterVector) -> np.ndarray:
        return self.linearize(theta)[1]

    def rows_jacobian(self, theta: ParameterVector, rows: np.ndarray) -> np.ndarray:
        """Jacobian rows for the given sorted global residual rows."""
        return self.sub_map(rows).jacobian(theta)

    # -- forward mode ----------------------------------------------------------
    def _check_tangent(self, v: np.ndarray, stacked: bool) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        want = 2 if stacked else 1
        if v.ndim != want or v.shape[-1] != self.n:
            raise DimensionError(f"tangent has shape {v.shape}, expected (..., {self.n})")
        return v

    def _extract(self, outs, level: int, comp: str, lead: tuple[int, ...] = ()):
        parts = []
        for out, size in zip(outs, self._class_sizes()):
            if ops.level_of(out) == level:
                parts.append(np.asarray(getattr(out, comp), dtype=np.float64))
            else:  # class independent of theta
                parts.append(np.zeros(lead + (size,)))
        return np.concatenate(parts, axis=-1)

    def jvp(self, theta: ParameterVector, v: np.ndarray) -> np.ndarray:
        """Jacobian-vector product J(theta) v -> (m,)."""
        v = self._check_tangent(v, stacked=False)
        level = ops.new_level()
        varrs = self.layout.unflatten(v)
        duals = [Dual(a, va, level) for a, va in zip(self._arrays(theta), varrs)]
        outs = self._core(duals)
        result = self._extract(outs, level, "d1")
        if not np.all(np.isfinite(result)):
            _check_finite(result, self.partition())
        return result

    def jvp_many(self, theta: ParameterVector, tangents: np.ndarray) -> np.ndarray:
        """Stacked products J(theta) V^T for tangents (k, n) -> (k, m)."""
        tangents = self._check_tangent(tangents, stacked=True)
        k = tangents.shape[0]
        level = ops.new_level()
        varrs = self.layout.unflatten(tangents)
        duals = [Dual(a, va, level) for a, va in zip(self._arrays(theta), varrs)]
        outs = self._core(duals)
        return self._extract(outs, level, "d1", lead=(k,))

    def second_directional(self, theta: ParameterVector, v: np.ndarray) -> np.ndarray:
        """Directional curvature d^2/dt^2 r(theta + t v) at t = 0 -> (m,)."""
        v = self._check_tangent(v, stacked=False)
        level = ops.new_level()
        varrs = self.layout.unflatten(v)
        jets = [
            Jet2(a, va, np.zeros_like(a), level)
            for a, va in zip(self._arrays(theta), varrs)
        ]
        outs = self._core(jets)
        result = self._extract(outs, level, "d2")
        if not np.all(np.isfinite(result)):
            _check_finite(result, self.partition())
        return result

    # -- subsetting -------------------------------------------------------------
    def sub_map(self, rows: np.ndarray) -> "ResidualMap":
        """Map restricted to sorted global residual rows; values match row for row."""
        return self.rebind(self.collocation.subset(rows))


class LinearResidualMap(ResidualMap):
    """r(theta) = A theta + c with a fixed matrix; every product is closed form."""

    def __init__(self, A: np.ndarray, c: np.ndarray):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.c = np.asarray(c, dtype=np.float64)
        if self.c.shape != (self.A.shape[0],):
            raise DimensionError(
                f"offset has shape {self.c.shape}, expected ({self.A.shape[0]},)"
            )
        self.layout = ParameterLayout([("theta", (self.A.shape[1],))])
        # Rows are bookkept as interior points indexed by row number.
        self.collocation = CollocationSet(
            [CollocationClass(INTERIOR, np.arange(self.A.shape[0])[:, None] * 1.0, 1.0)]
        )

    def rebind(self, collocation: CollocationSet) -> "LinearResidualMap":
        rows = collocation.classes[0].points[:, 0].astype(np.int64)
        sub = LinearResidualMap(self.A[rows], self.c[rows])
        sub.layout = self.layout
        return sub

    def residual_batch(self, theta: ParameterVector) -> ResidualBatch:
        values = self.A @ self._arrays(theta)[0] + self.c
        partition = self.partition()
        _check_finite(values, partition)
        return ResidualBatch(values, partition)

    def loss_many(self, candidates: np.ndarray) -> np.ndarray:
        candidates = np.asarray(candidates, dtype=np.float64)
        r = candidates @ self.A.T + self.c
        return 0.5 * np.einsum("ij,ij->i", r, r)

    def vjp(self, theta: ParameterVector, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.m,):
            raise DimensionError(f"cotangent has shape {w.shape}, expected ({self.m},)")
        return self.A.T @ w

    def residuals_and_gradient(self, theta: ParameterVector):
        batch = self.residual_batch(theta)
        return batch, self.A.T @ batch.values

    def linearize(self, theta: ParameterVector):
        return self.residual_batch(theta), self.A.copy()

    def jvp(self, theta: ParameterVector, v: np.ndarray) -> np.ndarray:
        return self.A @ self._check_tangent(v, stacked=False)

    def jvp_many(self, theta: ParameterVector, tangents: np.ndarray) -> np.ndarray:
        return self._check_tangent(tangents, stacked=True) @ self.A.T

    def second_directional(self, theta: ParameterVector, v: np.ndarray) -> np.ndarray:
        self._check_tangent(v, stacked=False)
        return np.zeros(self.m)


class RegressionResidualMap(ResidualMap):
    """Pointwise network regression: r_i = weight (u_theta(x_i) - y_i)."""

    def __init__(self, spec, inputs: np.ndarray, targets: np.ndarray, weight: float | None = None):
        from .model import MlpSpec, pair_layers  # local to avoid an import cycle

        if not isinstance(spec, MlpSpec):
            raise DimensionError("RegressionResidualMap needs an MlpSpec")
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if inputs.shape[0] != targets.shape[0]:
            raise DimensionError("inputs and targets disagree on sample count")
        if inputs.shape[1] != spec.input_dim or spec.output_dim != 1:
            raise DimensionError("spec widths do not fit scalar regression data")
        if weight is None:
            weight = 1.0 / np.sqrt(inputs.shape[0])
        self.spec = spec
        self.layout = spec.layout()
        self._pair = pair_layers
        self.collocation = CollocationSet(
            [CollocationClass(INTERIOR, inputs, float(weight), {"targets": targets})]
        )

    def rebind(self, collocation: CollocationSet) -> "RegressionResidualMap":
        cls = collocation.classes[0]
        sub = RegressionResidualMap(
            self.spec, cls.points, cls.aux["targets"], weight=cls.weight
        )
        return sub

    def _core(self, arrays: list) -> list:
        from .model import mlp_apply

        cls = self.collocation.classes[0]
        u = ops.squeeze_last(mlp_apply(self._pair(arrays), cls.points))
        return [ops.mul(cls.weight, ops.sub(u, cls.aux["targets"]))]


class PinnResidualMap(ResidualMap):
    """Weighted PDE residuals of a transformed network over collocation classes."""

    def __init__(self, problem, spec, collocation: CollocationSet):
        from .model import MlpSpec, pair_layers

        if not isinstance(spec, MlpSpec):
            raise DimensionError("PinnResidualMap needs an MlpSpec")
        if spec.input_dim != problem.embedding.out_dim:
            raise DimensionError(
                f"spec input width {spec.input_dim} != embedding width "
                f"{problem.embedding.out_dim}"
            )
        self.problem = problem
        self.spec = spec
        self.layout = spec.layout()
        self._pair = pair_layers
        self.collocation = collocation

    def rebind(self, collocation: CollocationSet) -> "PinnResidualMap":
        return PinnResidualMap(self.problem, self.spec, collocation)

    def _core(self, arrays: list) -> list:
        from .model import NetAccess

        net = NetAccess(
            self._pair(arrays), self.problem.embedding, self.problem.transform
        )
        outs = []
        for cls in self.collocation.classes:
            res = self.problem.class_residual(net, cls)
            outs.append(ops.mul(cls.weight, res))
        return outs
