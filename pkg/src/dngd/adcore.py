"""Public automatic-differentiation operations over residual maps.

These wrap the map-level machinery in `residuals` behind the operation
signatures the rest of the library (and its tests) program against:
parameter-space products with the residual Jacobian, directional
curvature, and input-space 2-jets of a network.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .jets import Jet2
from .model import IdentityEmbedding, MlpSpec, NetAccess, OutputTransform, pair_layers
from .params import ParameterVector
from .residuals import ResidualBatch, ResidualMap


def _rebound(residual_map: ResidualMap, points) -> ResidualMap:
    if points is None or points is residual_map.collocation:
        return residual_map
    return residual_map.rebind(points)


def _tangent_data(v) -> np.ndarray:
    return v.data if isinstance(v, ParameterVector) else np.asarray(v, dtype=np.float64)


def _cotangent_data(w) -> np.ndarray:
    return w.values if isinstance(w, ResidualBatch) else np.asarray(w, dtype=np.float64)


def jvp_params(residual_map: ResidualMap, theta: ParameterVector, v, points=None) -> ResidualBatch:
    """Jacobian-vector product J(theta) v as a ResidualBatch."""
    rmap = _rebound(residual_map, points)
    values = rmap.jvp(theta, _tangent_data(v))
    return ResidualBatch(values, rmap.partition())


def vjp_params(residual_map: ResidualMap, theta: ParameterVector, w, points=None) -> ParameterVector:
    """Transposed product J(theta)^T w as a ParameterVector."""
    rmap = _rebound(residual_map, points)
    grad = rmap.vjp(theta, _cotangent_data(w))
    return ParameterVector(grad, theta.layout)


def second_directional(residual_map: ResidualMap, theta: ParameterVector, v, points=None) -> ResidualBatch:
    """Directional curvature d^2/dt^2 r(theta + t v) at t = 0."""
    rmap = _rebound(residual_map, points)
    values = rmap.second_directional(theta, _tangent_data(v))
    return ResidualBatch(values, rmap.partition())


def _network_jet(network, theta: ParameterVector, pts: np.ndarray, direction) -> Jet2:
    if isinstance(network, MlpSpec):
        net = NetAccess(
            pair_layers(theta.arrays()),
            IdentityEmbedding(network.input_dim),
            OutputTransform("identity"),
        )
        return net.jet(pts, direction)
    # duck-typed network: callable(parameter_arrays, x_jet) -> algebra (N,)
    from . import ops
    from .errors import DomainError

    j = int(direction)
    if not 0 <= j < pts.shape[1]:
        raise DomainError(f"direction index {j} out of range for dim {pts.shape[1]}")
    level = ops.new_level()
    e = np.zeros_like(pts)
    e[:, j] = 1.0
    xjet = Jet2(pts, e, np.zeros_like(pts), level)
    arrays = theta.arrays() if isinstance(theta, ParameterVector) else theta
    return network(arrays, xjet)


def input_jet(network, theta: ParameterVector, x: np.ndarray, direction: int) -> Jet2:
    """Value, slope, and curvature of u along one input coordinate.

    Returns a scalar Jet2 (u(x), d_j u(x), d_jj u(x)) for the unit basis
    direction e_j at a single point x.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if isinstance(network, MlpSpec) and x.shape[0] != network.input_dim:
        raise DimensionError(
            f"point has dim {x.shape[0]}, network expects {network.input_dim}"
        )
    out = _network_jet(network, theta, x[None, :], int(direction))
    return Jet2(
        float(np.asarray(out.val)[0]),
        float(np.asarray(out.d1)[0]),
        float(np.asarray(out.d2)[0]),
        out.level,
    )
