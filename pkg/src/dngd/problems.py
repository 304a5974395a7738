"""PDE problem definitions: domains, sampling, residual classes, exact data.

Each problem owns its input embedding, output transform, per-class residual
definitions written against a NetAccess (so they run under every algebra),
closed-form data functions, and a deterministic evaluation grid for error
reporting.

Time-dependent problems follow the two-class convention: one interior
class and one boundary class covering the parabolic boundary (initial
slab plus lateral faces), so the 1/sqrt(N) class weights reproduce the
standard two-term PINN loss.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from . import ops
from .errors import DimensionError, DomainError
from .model import (
    IdentityEmbedding,
    OutputTransform,
    PeriodicEmbedding1d,
    point_columns,
)
from .residuals import (
    BOUNDARY,
    INITIAL,
    INTERIOR,
    CollocationClass,
    CollocationSet,
    PinnResidualMap,
)

# -- sampling helpers --------------------------------------------------------


def _box_interior(rng, n, lows, highs):
    lows, highs = np.asarray(lows, dtype=float), np.asarray(highs, dtype=float)
    return lows + rng.uniform(size=(n, lows.size)) * (highs - lows)


def _box_faces(rng, n, lows, highs):
    """Uniform points on the faces of a box; faces chosen uniformly.

    All in-scope boxes are cubes, so uniform face choice equals area
    weighting; rectangular boxes would need per-face weights.
    """
    lows, highs = np.asarray(lows, dtype=float), np.asarray(highs, dtype=float)
    d = lows.size
    x = _box_interior(rng, n, lows, highs)
    face = rng.integers(0, 2 * d, size=n)
    j, side = face // 2, face % 2
    x[np.arange(n), j] = np.where(side == 0, lows[j], highs[j])
    return x


def _parabolic_boundary(rng, n, d):
    """Points on the parabolic boundary of (0,1) x (0,1)^d.

    Pieces of equal measure: the initial slab {0} x cube and the 2d
    lateral faces (0,1) x face; a uniform piece choice is area-uniform.
    """
    piece = rng.integers(0, 2 * d + 1, size=n)
    t = np.where(piece == 0, 0.0, rng.uniform(size=n))
    x = rng.uniform(size=(n, d))
    rows = np.flatnonzero(piece > 0)
    j = (piece[rows] - 1) // 2
    x[rows, j] = ((piece[rows] - 1) % 2).astype(np.float64)
    return np.column_stack([t, x])


def _ball_interior(rng, n, d):
    """Uniform points in the open unit ball."""
    z = rng.normal(size=(n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radius = rng.uniform(size=(n, 1)) ** (1.0 / d)
    return z * radius


def _halton(num: int, lows, highs) -> np.ndarray:
    lows, highs = np.asarray(lows, dtype=float), np.asarray(highs, dtype=float)
    unit = qmc.Halton(d=lows.size, scramble=False).random(num)
    return lows + unit * (highs - lows)


def _pairwise_sum(terms: list):
    """Balanced summation tree; keeps jet/tape expression depth O(log n)."""
    while len(terms) > 1:
        terms = [
            ops.add(terms[i], terms[i + 1]) if i + 1 < len(terms) else terms[i]
            for i in range(0, len(terms), 2)
        ]
    return terms[0]


def _cls(class_id, points, aux=None):
    return CollocationClass(
        class_id, points, 1.0 / np.sqrt(points.shape[0]), aux or {}
    )


# -- problem definitions -------------------------------------------------------


class PdeProblem:
    """Shared surface: sampling, residual classes, exact data, eval grid."""

    name: str
    raw_dim: int  # coordinates as sampled (time first when present)
    embedding = None
    transform = OutputTransform("identity")
    default_counts: dict
    default_widths: tuple
    default_lam_cap: float = 1e-5
    has_exact: bool = True

    def sample(self, counts: dict, rng) -> CollocationSet:
        raise NotImplementedError

    def class_residual(self, net, cls: CollocationClass):
        raise NotImplementedError

    def exact_solution(self, pts: np.ndarray) -> np.ndarray:
        raise DomainError(f"problem {self.name} has no closed-form solution")

    def eval_points(self, num: int = 10_000) -> np.ndarray:
        raise NotImplementedError

    def resolve_counts(self, counts) -> dict:
        """Merge user counts (dict or sequence in class order) with defaults."""
        merged = dict(self.default_counts)
        if counts is not None and not isinstance(counts, dict):
            counts = dict(zip(merged, counts))
        if counts:
            unknown = set(counts) - set(merged)
            if unknown:
                raise DomainError(
                    f"problem {self.name} has no classes {sorted(unknown)}"
                )
            merged.update(counts)
        bad = {k: v for k, v in merged.items() if int(v) < 1}
        if bad:
            raise DomainError(f"class counts must be >= 1, got {bad}")
        return {k: int(v) for k, v in merged.items()}


class Poisson2d(PdeProblem):
    """-Lap u = f on (0,1)^2, u = 0 on the boundary.

    Manufactured solution u*(x, y) = sin(pi x) sin(pi y), so
    f = 2 pi^2 sin(pi x) sin(pi y).
    """

    name = "poisson2d"
    raw_dim = 2
    default_counts = {INTERIOR: 480, BOUNDARY: 120}
    default_widths = (2, 32, 32, 1)

    def __init__(self):
        self.embedding = IdentityEmbedding(2)

    def sample(self, counts, rng) -> CollocationSet:
        c = self.resolve_counts(counts)
        return CollocationSet(
            [
                _cls(INTERIOR, _box_interior(rng, c[INTERIOR], [0, 0], [1, 1])),
                _cls(BOUNDARY, _box_faces(rng, c[BOUNDARY], [0, 0], [1, 1])),
            ]
        )

    def class_residual(self, net, cls):
        p = cls.points
        if cls.class_id == INTERIOR:
            lap = ops.add(net.jet(p, 0).d2, net.jet(p, 1).d2)
            f = 2.0 * np.pi**2 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
            return ops.sub(ops.neg(lap), f)
        return net.u(p)  # boundary data g = 0

    def exact_cols(self, cols):
        return ops.mul(
            ops.sin(ops.mul(np.pi, cols[0])), ops.sin(ops.mul(np.pi, cols[1]))
        )

    def exact_solution(self, pts):
        return np.asarray(self.exact_cols(point_columns(pts)))

    def eval_points(self, num=10_000):
        return _halton(num, [0, 0], [1, 1])


class Poisson10d(PdeProblem):
    """-Lap u = 0 on (0,1)^10 with boundary trace of u*(x) = sum x_{2k-1} x_{2k}."""

    name = "poisson10d"
    raw_dim = 10
    default_counts = {INTERIOR: 400, BOUNDARY: 200}
    default_widths = (10, 32, 32, 1)

    def __init__(self):
        self.embedding = IdentityEmbedding(10)

    def sample(self, counts, rng) -> CollocationSet:
        c = self.resolve_counts(counts)
        lows, highs = np.zeros(10), np.ones(10)
        return CollocationSet(
            [
                _cls(INTERIOR, _box_interior(rng, c[INTERIOR], lows, highs)),
                _cls(BOUNDARY, _box_faces(rng, c[BOUNDARY], lows, highs)),
            ]
        )

    def class_residual(self, net, cls):
        p = cls.points
        if cls.class_id == INTERIOR:
            lap = _pairwise_sum([net.jet(p, j).d2 for j in range(10)])
            return ops.neg(lap)  # the exact solution is harmonic: f = 0
        return ops.sub(net.u(p), self.exact_solution(p))

    def exact_cols(self, cols):
        return _pairwise_sum([ops.mul(cols[2 * k], cols[2 * k + 1]) for k in range(5)])

    def exact_solution(self, pts):
        return np.asarray(self.exact_cols(point_columns(pts)))

    def eval_points(self, num=10_000):
        return _halton(num, np.zeros(10), np.ones(10))


class Heat(PdeProblem):
    """u_t = kappa Lap u on (0,1) x (0,1)^d, kappa = 1/4.

    Exact solution u(t, x) = exp(-4 pi^2 kappa t) sum_i sin(2 pi x_i).
    The single boundary class covers the parabolic boundary, pinning the
    exact trace there; at t = 0 that trace is the initial data itself.
    """

    kappa = 0.25
    default_lam_cap = 1e-3

    def __init__(self, spatial_dim: int):
        self.d = spatial_dim
        self.name = f"heat{spatial_dim}d"
        self.raw_dim = 1 + spatial_dim
        self.embedding = IdentityEmbedding(self.raw_dim)
        if spatial_dim == 2:
            self.default_counts = {INTERIOR: 320, BOUNDARY: 160}
            self.default_widths = (3, 24, 24, 1)
        else:
            self.default_counts = {INTERIOR: 400, BOUNDARY: 210}
            self.default_widths = (self.raw_dim, 32, 32, 1)

    def sample(self, counts, rng) -> CollocationSet:
        c = self.resolve_counts(counts)
        d = self.d
        interior = np.column_stack(
            [
                rng.uniform(size=c[INTERIOR]),
                _box_interior(rng, c[INTERIOR], np.zeros(d), np.ones(d)),
            ]
        )
        boundary = _parabolic_boundary(rng, c[BOUNDARY], d)
        return CollocationSet([_cls(INTERIOR, interior), _cls(BOUNDARY, boundary)])

    def class_residual(self, net, cls):
        p = cls.points
        if cls.class_id == INTERIOR:
            jt = net.jet(p, 0)
            lap = _pairwise_sum([net.jet(p, 1 + j).d2 for j in range(self.d)])
            return ops.sub(jt.d1, ops.mul(self.kappa, lap))
        return ops.sub(net.u(p), self.exact_solution(p))

    def exact_cols(self, cols):
        decay = ops.exp(ops.mul(-4.0 * np.pi**2 * self.kappa, cols[0]))
        modes = _pairwise_sum(
            [ops.sin(ops.mul(2.0 * np.pi, cols[1 + j])) for j in range(self.d)]
        )
        return ops.mul(decay, modes)

    def exact_solution(self, pts):
        return np.asarray(self.exact_cols(point_columns(pts)))

    def eval_points(self, num=10_000):
        return _halton(num, np.zeros(self.raw_dim), np.ones(self.raw_dim))


class AllenCahn(PdeProblem):
    """u_t - 1e-4 u_xx + 5 u^3 - 5 u = 0 on (0,1) x (-1,1).

    Initial data u(0, x) = x^2 cos(pi x); periodic in x with period 2,
    enforced by the sin/cos input embedding, so the non-interior class
    holds only initial-condition residuals. No closed-form solution.
    """

    name = "allen_cahn"
    raw_dim = 2
    default_counts = {INTERIOR: 1125, INITIAL: 225}
    default_widths = (3, 32, 32, 32, 1)
    has_exact = False
    diffusivity = 1e-4

    def __init__(self):
        self.embedding = PeriodicEmbedding1d(period=2.0)

    def sample(self, counts, rng) -> CollocationSet:
        c = self.resolve_counts(counts)
        interior = np.column_stack(
            [rng.uniform(size=c[INTERIOR]), rng.uniform(-1.0, 1.0, size=c[INTERIOR])]
        )
        initial = np.column_stack(
            [np.zeros(c[INITIAL]), rng.uniform(-1.0, 1.0, size=c[INITIAL])]
        )
        return CollocationSet([_cls(INTERIOR, interior), _cls(INITIAL, initial)])

    def class_residual(self, net, cls):
        p = cls.points
        if cls.class_id == INTERIOR:
            jt = net.jet(p, 0)
            jx = net.jet(p, 1)
            u = jt.val
            reaction = ops.mul(5.0, ops.sub(ops.power(u, 3), u))
            return ops.add(ops.sub(jt.d1, ops.mul(self.diffusivity, jx.d2)), reaction)
        x = p[:, 1]
        return ops.sub(net.u(p), x**2 * np.cos(np.pi * x))

    def eval_points(self, num=10_000):
        return _halton(num, [0.0, -1.0], [1.0, 1.0])


class PoissonBallStde(PdeProblem):
    """-Lap u = f on the unit ball in R^d, u = 0 on the sphere.

    The Dirichlet condition is exact through the (1 - |x|^2) output
    factor, so only the interior class exists. The Laplacians of both
    the network and the exact solution are estimated with the same
    random second-derivative index subsets (one set per point, shared
    between the two sides so the subset noise of common modes cancels),
    drawn at sampling time and carried in the class aux data.
    """

    name = "poisson_ball_stde"
    default_lam_cap = 1e3
    has_exact = True

    def __init__(self, dim: int = 100, index_set_size: int = 8, coeff_seed: int = 1234):
        self.dim = dim
        self.k = int(index_set_size)
        if not 1 <= self.k <= dim:
            raise DomainError(f"index set size {self.k} outside [1, {dim}]")
        self.raw_dim = dim
        self.embedding = IdentityEmbedding(dim)
        self.transform = OutputTransform("dirichlet_ball")
        self.default_counts = {INTERIOR: 128}
        self.default_widths = (dim, 64, 64, 1)
        self.coeffs = np.random.default_rng(coeff_seed).normal(size=dim - 1)

    def sample(self, counts, rng) -> CollocationSet:
        c = self.resolve_counts(counts)
        n = c[INTERIOR]
        pts = _ball_interior(rng, n, self.dim)
        # one index subset (without replacement) per point
        idx = rng.random((n, self.dim)).argsort(axis=1)[:, : self.k]
        return CollocationSet([_cls(INTERIOR, pts, aux={"stde_idx": idx})])

    def class_residual(self, net, cls):
        p = cls.points
        idx = np.asarray(cls.aux["stde_idx"])
        k = idx.shape[1]
        net_parts, exact_parts = [], []
        for s in range(k):
            direction = idx[:, s]
            net_parts.append(net.jet(p, direction).d2)
            level = ops.new_level()
            exact_parts.append(
                np.asarray(self.exact_cols(point_columns(p, direction, level)).d2)
            )
        lap_net = _pairwise_sum(net_parts)
        lap_exact = sum(exact_parts)
        # paired estimator: -(d/k) sum_j (dd_jj u - dd_jj u_ex)
        return ops.mul(-(self.dim / k), ops.sub(lap_net, lap_exact))

    def exact_cols(self, cols):
        d = self.dim
        factor = ops.sub(1.0, _pairwise_sum([ops.power(c, 2) for c in cols]))
        terms = []
        for i in range(d - 1):
            inner = ops.sin(ops.add(cols[i], ops.cos(cols[i + 1])))
            cross = ops.mul(cols[i + 1], ops.cos(cols[i]))
            terms.append(ops.mul(float(self.coeffs[i]), ops.add(inner, cross)))
        return ops.mul(factor, _pairwise_sum(terms))

    def exact_solution(self, pts):
        return np.asarray(self.exact_cols(point_columns(pts)))

    def eval_points(self, num=10_000):
        rng = np.random.default_rng(0)
        return _ball_interior(rng, num, self.dim)


# -- module-level operations ----------------------------------------------------

PROBLEMS = {
    "poisson2d": Poisson2d,
    "poisson10d": Poisson10d,
    "heat2d": lambda: Heat(2),
    "heat10d": lambda: Heat(10),
    "allen_cahn": AllenCahn,
    "poisson_ball_stde": PoissonBallStde,
}


def make_problem(name: str, **kwargs) -> PdeProblem:
    if name not in PROBLEMS:
        raise DomainError(f"unknown problem {name!r}; available: {sorted(PROBLEMS)}")
    return PROBLEMS[name](**kwargs)


def sample_collocation(problem: PdeProblem, counts, rng) -> CollocationSet:
    """Draw a fresh collocation set; deterministic given the generator state."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return problem.sample(counts, rng)


def build_map(problem: PdeProblem, spec, collocation: CollocationSet) -> PinnResidualMap:
    """Bind a problem, a network spec, and points into a residual map."""
    return PinnResidualMap(problem, spec, collocation)


def eval_residuals(problem, spec, theta, points: CollocationSet):
    """Scaled per-class residuals of the network at theta on the given points."""
    return PinnResidualMap(problem, spec, points).residual_batch(theta)


def stde_laplacian(network, theta, x: np.ndarray, k: int, rng) -> float:
    """Randomized Laplacian estimate (d/k) sum over a k-subset of dd_jj u.

    Indices are drawn uniformly without replacement; averaging over all
    subsets reproduces the exact Laplacian.
    """
    from .adcore import input_jet

    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.shape[0]
    k = int(k)
    if not 1 <= k <= d:
        raise DomainError(f"index set size {k} outside [1, {d}]")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    idx = rng.choice(d, size=k, replace=False)
    total = sum(input_jet(network, theta, x, int(j)).d2 for j in idx)
    return (d / k) * total


class ExactNet:
    """NetAccess stand-in whose u is a closed-form columns function.

    Lets residual definitions be evaluated on a problem's exact solution
    (or any analytic field) without a network in the loop.
    """

    def __init__(self, cols_fn):
        self.cols_fn = cols_fn

    def u(self, pts):
        return np.asarray(self.cols_fn(point_columns(pts)))

    def jet(self, pts, direction):
        level = ops.new_level()
        return self.cols_fn(point_columns(pts, direction, level))
