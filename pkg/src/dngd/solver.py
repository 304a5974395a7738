"""Dual-space Gauss-Newton machinery.

The damped step (J^T J + lambda I) dtheta = -g is solved through its
m-dimensional dual form (K + lambda I) y = -J g with K = J J^T, then
recovered as dtheta = -(1/lambda)(J^T y + g). Two paths cover the size
regimes: a dense Cholesky solve with optional geodesic acceleration, and
a matrix-free preconditioned CG using Nystrom-approximated spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, FactorizationError
from .params import ParameterVector
from .residuals import ResidualBatch, ResidualMap

GRAMIAN_MEMORY_BUDGET = 2 * 1024**3  # bytes; guards m x m allocation

EIG_FLOOR_REL = 1e-10  # relative eigenvalue floor in the Nystrom build
GA_NORM_GUARD = 1e-12  # skip acceleration when the step is this small
GA_RATIO_MAX = 0.5  # accept acceleration only while 2|a|/|v| stays below


@dataclass
class GramianMatrix:
    """Dense residual Gramian K = J J^T with its class partition."""

    K: np.ndarray  # (m, m), symmetric PSD
    partition: list[tuple[str, int, int]]

    @property
    def m(self) -> int:
        return self.K.shape[0]


@dataclass
class StepResult:
    """One parameter update with its solve diagnostics."""

    delta: ParameterVector
    lambda_used: float
    cg_iterations: int = 0
    eta: float | None = None
    ga_ratio: float | None = None
    warning: str | None = None


@dataclass
class NystromPreconditioner:
    """Low-rank spectral approximation K ~ U diag(lam_hat) U^T plus damping.

    apply() realizes U (lam_hat + lam)^-1 U^T v + (1/lam)(v - U U^T v):
    approximated modes are damped by their eigenvalues, the orthogonal
    complement by 1/lam alone. Empty rank degrades to pure 1/lam scaling.
    """

    U: np.ndarray  # (m, r), orthonormal columns
    lam_hat: np.ndarray  # (r,), nonnegative, descending
    lam: float
    landmarks: np.ndarray  # sorted residual row indices used in the build

    def __post_init__(self):
        if self.lam <= 0.0:
            raise DomainError(f"preconditioner damping must be positive, got {self.lam}")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.U.shape[0],):
            raise DimensionError(
                f"vector has shape {v.shape}, expected ({self.U.shape[0]},)"
            )
        if self.rank == 0:
            return v / self.lam
        t = self.U.T @ v
        return self.U @ (t / (self.lam_hat + self.lam)) + (v - self.U @ t) / self.lam


class DualOperator:
    """Matrix-free v -> (K + lambda I) v at a fixed parameter snapshot."""

    def __init__(self, residual_map: ResidualMap, theta: ParameterVector, lam: float):
        if lam < 0.0:
            raise DomainError(f"damping must be nonnegative, got {lam}")
        self.residual_map = residual_map
        self.theta = theta
        self.lam = lam

    @property
    def m(self) -> int:
        return self.residual_map.m

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.m,):
            raise DimensionError(f"vector has shape {v.shape}, expected ({self.m},)")
        u = self.residual_map.vjp(self.theta, v)
        return self.residual_map.jvp(self.theta, u) + self.lam * v


def _rebound(residual_map: ResidualMap, points) -> ResidualMap:
    if points is None or points is residual_map.collocation:
        return residual_map
    return residual_map.rebind(points)


def _vector_data(v, n: int, what: str) -> np.ndarray:
    data = v.data if isinstance(v, ParameterVector) else np.asarray(v, dtype=np.float64)
    if data.shape != (n,):
        raise DimensionError(f"{what} has shape {data.shape}, expected ({n},)")
    return data


def _batch_data(v, m: int, what: str) -> np.ndarray:
    data = v.values if isinstance(v, ResidualBatch) else np.asarray(v, dtype=np.float64)
    if data.shape != (m,):
        raise DimensionError(f"{what} has shape {data.shape}, expected ({m},)")
    return data


# -- kernel entries and the dense Gramian ---------------------------------------


def kernel_entry(residual_map: ResidualMap, theta: ParameterVector, i: int, j: int) -> np.ndarray:
    """Gramian block J_i J_j^T for residual rows i and j, no full Jacobian.

    A unit cotangent through row j's transposed Jacobian gives J_j; pushing
    it forward through row i's Jacobian contracts the two rows.
    """
    row_j = residual_map.sub_map(np.array([j])).vjp(theta, np.ones(1))
    entry = residual_map.sub_map(np.array([i])).jvp(theta, row_j)
    return entry.reshape(1, 1)


def assemble_gramian(residual_map: ResidualMap, theta: ParameterVector, points=None) -> GramianMatrix:
    """Dense K = J J^T via one per-sample sweep and a symmetrized BLAS product."""
    rmap = _rebound(residual_map, points)
    m = rmap.m
    needed = 8 * m * m
    if needed > GRAMIAN_MEMORY_BUDGET:
        raise DomainError(
            f"dense Gramian needs {needed / 1024**3:.1f} GiB for m={m}, "
            f"over the {GRAMIAN_MEMORY_BUDGET / 1024**3:.1f} GiB budget"
        )
    J = rmap.jacobian(theta)
    K = J @ J.T
    K = 0.5 * (K + K.T)
    return GramianMatrix(K, rmap.partition())


# -- dense dual solve with geodesic acceleration ----------------------------------


def _chol_with_retries(K: np.ndarray, lam: float, retries: int = 5):
    """Cholesky of K + lam I, damping harder on failure; returns (factor, lam)."""
    m = K.shape[0]
    for _ in range(retries + 1):
        try:
            factor = scipy.linalg.cho_factor(K + lam * np.eye(m), lower=True)
            return factor, lam
        except scipy.linalg.LinAlgError:
            lam *= 10.0
    raise FactorizationError(
        f"Cholesky of the damped Gramian failed after {retries} retries "
        f"(final damping {lam:.3e})"
    )


def dense_dual_solve(
    residual_map: ResidualMap,
    theta: ParameterVector,
    g,
    points=None,
    lam: float = 1e-3,
    use_ga: bool = True,
) -> StepResult:
    """Damped Gauss-Newton step through the dense m x m dual system.

    Solves (K + lam I) y = -J g once by Cholesky, recovers the step
    dtheta = -(1/lam)(J^T y + g), and optionally adds the half geodesic
    acceleration correction when its size ratio stays within the gate.
    """
    if lam <= 0.0:
        raise DomainError(f"damping must be positive, got {lam}")
    rmap = _rebound(residual_map, points)
    g = _vector_data(g, rmap.n, "gradient")

    K = assemble_gramian(rmap, theta).K
    factor, lam_used = _chol_with_retries(K, lam)

    b = -rmap.jvp(theta, g)
    y = scipy.linalg.cho_solve(factor, b)
    v = -(rmap.vjp(theta, y) + g) / lam_used

    delta = v
    ga_ratio = None
    if use_ga:
        v_norm = float(np.linalg.norm(v))
        if v_norm > GA_NORM_GUARD:
            f_vv = rmap.second_directional(theta, v)
            b_a = -(K @ f_vv)
            y_a = scipy.linalg.cho_solve(factor, b_a)
            a = -(rmap.vjp(theta, y_a + f_vv)) / lam_used
            ga_ratio = 2.0 * float(np.linalg.norm(a)) / v_norm
            if ga_ratio <= GA_RATIO_MAX:
                delta = v + 0.5 * a
    return StepResult(
        delta=ParameterVector(delta, theta.layout),
        lambda_used=lam_used,
        cg_iterations=0,
        ga_ratio=ga_ratio,
    )


# -- matrix-free products -----------------------------------------------------------


def kvp(residual_map: ResidualMap, theta: ParameterVector, v, lam: float, points=None) -> ResidualBatch:
    """Damped kernel-vector product (K + lam I) v in three AD passes."""
    rmap = _rebound(residual_map, points)
    data = _batch_data(v, rmap.m, "dual vector")
    u = rmap.vjp(theta, data)
    w = rmap.jvp(theta, u) + lam * data
    return ResidualBatch(w, rmap.partition())


# -- Nystrom preconditioner -----------------------------------------------------------


def nystrom_build(
    residual_map: ResidualMap,
    theta: ParameterVector,
    points=None,
    landmark_count: int = 64,
    lam: float = 1e-3,
    rng=None,
) -> NystromPreconditioner:
    """Low-rank eigenpair estimate of K from a random landmark subset.

    Only the ell landmark Jacobian rows are materialized; the coupling
    columns K[:, I] come from stacked forward products with those rows.
    """
    rmap = _rebound(residual_map, points)
    m = rmap.m
    ell = int(landmark_count)
    if not 1 <= ell <= m:
        raise DomainError(f"landmark count {ell} outside [1, {m}]")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)

    landmarks = np.sort(rng.choice(m, size=ell, replace=False))
    J_I = rmap.rows_jacobian(theta, landmarks)  # (ell, n)
    K_cols = rmap.jvp_many(theta, J_I).T  # (m, ell) = K[:, landmarks]
    K_II = K_cols[landmarks]
    K_II = 0.5 * (K_II + K_II.T)

    eigvals, eigvecs = scipy.linalg.eigh(K_II)
    floor = EIG_FLOOR_REL * max(float(eigvals[-1]), 0.0)
    keep = eigvals > floor
    if not np.any(keep):
        return NystromPreconditioner(np.zeros((m, 0)), np.zeros(0), lam, landmarks)
    lam_q = eigvals[keep][::-1]  # descending
    Q = eigvecs[:, keep][:, ::-1]

    U_tilde = np.empty((m, lam_q.size))
    U_tilde[landmarks] = Q
    comp = np.setdiff1d(np.arange(m), landmarks, assume_unique=True)
    U_tilde[comp] = (K_cols[comp] @ Q) / lam_q
    V, sigma, _ = scipy.linalg.svd(U_tilde * np.sqrt(lam_q), full_matrices=False)
    return NystromPreconditioner(V, sigma**2, lam, landmarks)


def precond_apply(precond: NystromPreconditioner, v):
    """Apply the inverse preconditioner; mirrors the input container type."""
    if isinstance(v, ResidualBatch):
        return ResidualBatch(precond.apply(v.values), v.partition)
    return precond.apply(v)


# -- preconditioned CG step -------------------------------------------------------------


def pcg_step(
    residual_map: ResidualMap,
    theta: ParameterVector,
    g,
    points=None,
    lam: float = 1e-3,
    landmark_count: int = 64,
    tol: float = 1e-10,
    max_iters: int = 500,
    rng=None,
    precond: NystromPreconditioner | None = None,
) -> StepResult:
    """Matrix-free dual step: CG on (K + lam I) y = -J g with Nystrom preconditioning.

    Stops at |r|_2 <= tol |b|_2 or max_iters; near-zero curvature or
    search-direction overlap ends the loop early with the best iterate
    seen and a warning instead of aborting.
    """
    if lam <= 0.0:
        raise DomainError(f"damping must be positive, got {lam}")
    if tol <= 0.0:
        raise DomainError(f"CG tolerance must be positive, got {tol}")
    rmap = _rebound(residual_map, points)
    g = _vector_data(g, rmap.n, "gradient")

    b = -rmap.jvp(theta, g)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        delta = -(g / lam)
        return StepResult(ParameterVector(delta, theta.layout), lam, 0)

    if precond is None:
        precond = nystrom_build(rmap, theta, None, landmark_count, lam, rng)

    breakdown_floor = 1e-300 * max(1.0, b_norm**2)
    y = np.zeros(rmap.m)
    r = b.copy()
    z = precond.apply(r)
    p = z.copy()
    rho = float(r @ z)

    best_y, best_rnorm = y.copy(), b_norm
    iterations = 0
    warning = None
    for iterations in range(1, max_iters + 1):
        u = rmap.vjp(theta, p)
        Ap = rmap.jvp(theta, u) + lam * p
        p_dot_ap = float(p @ Ap)
        if abs(p_dot_ap) <= breakdown_floor:
            warning = "cg_breakdown: search direction has near-zero curvature"
            iterations -= 1
            break
        alpha = rho / p_dot_ap
        y += alpha * p
        r -= alpha * Ap
        r_norm = float(np.linalg.norm(r))
        if r_norm < best_rnorm:
            best_y, best_rnorm = y.copy(), r_norm
        if r_norm <= tol * b_norm:
            break
        z = precond.apply(r)
        rho_new = float(r @ z)
        if abs(rho) <= breakdown_floor:
            warning = "cg_breakdown: preconditioned residual collapsed"
            break
        p = z + (rho_new / rho) * p
        rho = rho_new

    if warning is not None:
        y = best_y
    delta = -(rmap.vjp(theta, y) + g) / lam
    return StepResult(
        delta=ParameterVector(delta, theta.layout),
        lambda_used=lam,
        cg_iterations=iterations,
        warning=warning,
    )
