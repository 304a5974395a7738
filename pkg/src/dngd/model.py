"""Tanh multi-layer perceptrons, input embeddings, and output transforms.

The forward pass is written against the generic operation layer, so the
same code runs on plain arrays, on the reverse-mode tape, and under
forward-mode jets.  Arrays are treated as [..., N, features]: any extra
leading axes (stacked line-search candidates, stacked tangents) broadcast
through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import DimensionError, DomainError
from .jets import Dual, Jet2
from .params import ParameterLayout, ParameterVector


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths input -> hidden... -> output; tanh on hidden layers."""

    layer_widths: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise DomainError("an MLP needs at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise DomainError(f"layer widths must be >= 1, got {self.layer_widths}")
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    def param_count(self) -> int:
        widths = self.layer_widths
        return sum((widths[k] + 1) * widths[k + 1] for k in range(len(widths) - 1))

    def layout(self) -> ParameterLayout:
        entries = []
        widths = self.layer_widths
        for k in range(len(widths) - 1):
            entries.append((f"W{k}", (widths[k], widths[k + 1])))
            entries.append((f"b{k}", (widths[k + 1],)))
        return ParameterLayout(entries)


def init_params(spec: MlpSpec) -> ParameterVector:
    """Uniform Glorot weights (scale sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(spec.seed)
    arrays = []
    widths = spec.layer_widths
    for k in range(len(widths) - 1):
        fan_in, fan_out = widths[k], widths[k + 1]
        scale = np.sqrt(6.0 / (fan_in + fan_out))
        arrays.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        arrays.append(np.zeros(fan_out))
    return ParameterVector.from_arrays(arrays, spec.layout())


def pair_layers(arrays: list) -> list[tuple]:
    """Group a flat [W0, b0, W1, b1, ...] list into (W, b) pairs."""
    if len(arrays) % 2 != 0:
        raise DimensionError("parameter arrays do not pair into (W, b) layers")
    return [(arrays[2 * k], arrays[2 * k + 1]) for k in range(len(arrays) // 2)]


def _expand_bias(b):
    """Insert a row axis so stacked bias arrays broadcast against [..., N, h]."""
    if isinstance(b, np.ndarray):
        return b[..., None, :] if b.ndim >= 2 else b
    if isinstance(b, Dual):
        return Dual(_expand_bias(b.val), _expand_bias(b.d1), b.level)
    if isinstance(b, Jet2):
        return Jet2(_expand_bias(b.val), _expand_bias(b.d1), _expand_bias(b.d2), b.level)
    return b  # tape variables stay 1-d


def mlp_apply(layers: list[tuple], x):
    """Affine + tanh composition; identity on the output layer.

    x: algebra value shaped [..., N, d_in]; returns [..., N, d_out].
    """
    h = x
    for W, b in layers[:-1]:
        h = ops.tanh(ops.add(ops.matmul(h, W), _expand_bias(b)))
    W, b = layers[-1]
    return ops.add(ops.matmul(h, W), _expand_bias(b))


def forward(spec: MlpSpec, theta: ParameterVector, x: np.ndarray) -> np.ndarray:
    """Plain forward pass at points x (N, d_in) -> (N, d_out)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[-1] != spec.input_dim:
        raise DimensionError(
            f"input has {x.shape[-1]} features, spec expects {spec.input_dim}"
        )
    layers = pair_layers(theta.arrays())
    return np.asarray(mlp_apply(layers, x))


# -- input embeddings ----------------------------------------------------------


def _direction_onehot(num_points: int, dim: int, direction) -> np.ndarray:
    e = np.zeros((num_points, dim))
    if np.isscalar(direction) or getattr(direction, "ndim", 1) == 0:
        j = int(direction)
        if not 0 <= j < dim:
            raise DomainError(f"direction index {j} out of range for dim {dim}")
        e[:, j] = 1.0
    else:
        idx = np.asarray(direction, dtype=np.int64)
        if idx.shape != (num_points,):
            raise DimensionError(
                f"per-point direction indices must have shape ({num_points},)"
            )
        if idx.min() < 0 or idx.max() >= dim:
            raise DomainError("direction index out of range")
        e[np.arange(num_points), idx] = 1.0
    return e


class IdentityEmbedding:
    """Raw coordinates pass straight into the network."""

    def __init__(self, dim: int):
        self.in_dim = dim
        self.out_dim = dim

    def plain(self, pts: np.ndarray) -> np.ndarray:
        return pts

    def jet(self, pts: np.ndarray, direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        e = _direction_onehot(pts.shape[0], self.in_dim, direction)
        return pts, e, np.zeros_like(pts)


class PeriodicEmbedding1d:
    """(t, x) -> [t, sin(w x), cos(w x)]: periodic in x with period 2*pi/w.

    The network output and its x-derivatives are periodic by construction,
    which removes periodic boundary residuals entirely.
    """

    def __init__(self, period: float = 2.0):
        self.in_dim = 2
        self.out_dim = 3
        self.omega = 2.0 * np.pi / period

    def plain(self, pts: np.ndarray) -> np.ndarray:
        t, x = pts[:, 0], pts[:, 1]
        w = self.omega
        return np.stack([t, np.sin(w * x), np.cos(w * x)], axis=1)

    def jet(self, pts: np.ndarray, direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        e = _direction_onehot(pts.shape[0], self.in_dim, direction)
        t, x = pts[:, 0], pts[:, 1]
        dt, dx = e[:, 0], e[:, 1]
        w = self.omega
        s, c = np.sin(w * x), np.cos(w * x)
        val = np.stack([t, s, c], axis=1)
        d1 = np.stack([dt, w * c * dx, -w * s * dx], axis=1)
        zero = np.zeros_like(t)
        d2 = np.stack([zero, -w * w * s * dx * dx, -w * w * c * dx * dx], axis=1)
        return val, d1, d2


# -- output transforms ---------------------------------------------------------


@dataclass(frozen=True)
class OutputTransform:
    """Hard-constraint wrappers applied to the raw network output phi.

    identity:       u = phi
    dirichlet_ball: u = (1 - |x|^2) phi, exactly zero on the unit sphere
    ic_shift:       u(t, x) = phi(t, x) - phi(0, x) + q0(x), exact at t = 0
    """

    kind: str = "identity"
    q0: object = field(default=None, compare=False)  # algebra-generic callable(cols)

    def __post_init__(self):
        if self.kind not in ("identity", "dirichlet_ball", "ic_shift"):
            raise DomainError(f"unknown output transform kind: {self.kind}")
        if self.kind == "ic_shift" and self.q0 is None:
            raise DomainError("ic_shift transform needs the initial function q0")


def point_columns(pts: np.ndarray, direction=None, level: int | None = None) -> list:
    """Per-coordinate algebra scalars for closed-form data functions.

    With a direction and level, each column is a 2-jet along that unit
    coordinate direction; otherwise plain numpy columns.
    """
    d = pts.shape[1]
    if level is None:
        return [pts[:, i] for i in range(d)]
    e = _direction_onehot(pts.shape[0], d, direction)
    zero = np.zeros(pts.shape[0])
    return [Jet2(pts[:, i], e[:, i], zero, level) for i in range(d)]


class NetAccess:
    """Bound network evaluator handed to residual definitions.

    Provides the solution value u and its 2-jet along unit coordinate
    directions of the raw input space, with embedding and output transform
    applied. Values live in whatever algebra the layer arrays carry.
    """

    def __init__(self, layers: list[tuple], embedding, transform: OutputTransform):
        self.layers = layers
        self.embedding = embedding
        self.transform = transform

    def _phi_plain(self, pts: np.ndarray):
        out = mlp_apply(self.layers, self.embedding.plain(pts))
        return ops.squeeze_last(out)

    def _phi_jet(self, pts: np.ndarray, direction, level: int) -> Jet2:
        val, d1, d2 = self.embedding.jet(pts, direction)
        xjet = Jet2(val, d1, d2, level)
        out = mlp_apply(self.layers, xjet)
        return ops.squeeze_last(out)

    def u(self, pts: np.ndarray):
        """Solution value at pts (N, d_raw) -> algebra (..., N)."""
        t = self.transform
        if t.kind == "identity":
            return self._phi_plain(pts)
        if t.kind == "dirichlet_ball":
            factor = 1.0 - np.sum(pts * pts, axis=1)
            return ops.mul(factor, self._phi_plain(pts))
        # ic_shift
        pts0 = pts.copy()
        pts0[:, 0] = 0.0
        q0 = t.q0(point_columns(pts))
        return ops.add(ops.sub(self._phi_plain(pts), self._phi_plain(pts0)), q0)

    def jet(self, pts: np.ndarray, direction) -> Jet2:
        """2-jet of u along one unit coordinate direction of the raw input."""
        level = ops.new_level()
        t = self.transform
        if t.kind == "identity":
            return self._phi_jet(pts, direction, level)
        if t.kind == "dirichlet_ball":
            # s(t) = 1 - |p + t e|^2 along a unit direction e
            e = _direction_onehot(pts.shape[0], pts.shape[1], direction)
            factor = Jet2(
                1.0 - np.sum(pts * pts, axis=1),
                -2.0 * np.sum(pts * e, axis=1),
                -2.0 * np.ones(pts.shape[0]),
                level,
            )
            return ops.mul(factor, self._phi_jet(pts, direction, level))
        # ic_shift
        pts0 = pts.copy()
        pts0[:, 0] = 0.0
        q0 = t.q0(point_columns(pts, direction, level))
        base = self._phi_jet(pts, direction, level)
        is_time_dir = np.isscalar(direction) and int(direction) == 0
        if is_time_dir:
            shift = self._phi_plain(pts0)  # constant along the time direction
        else:
            shift = self._phi_jet(pts0, direction, level)
        return ops.add(ops.sub(base, shift), q0)
