"""Outer training loops: damped dual Gauss-Newton, baselines, and metrics.

One iteration of the main loop: (re)sample collocation points, evaluate
residuals and the loss gradient, set the damping from the loss, solve for
the step densely or by preconditioned CG depending on the residual count,
grid-search the step length, and update the parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError
from .model import MlpSpec, NetAccess, init_params, pair_layers
from .params import ParameterVector
from .residuals import PinnResidualMap, ResidualMap
from .solver import StepResult, _chol_with_retries, dense_dual_solve, pcg_step

LAMBDA_FLOOR = 1e-12
MAX_CONSECUTIVE_REJECTIONS = 10


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the outer loop; exactly one budget kind must be set."""

    lam_cap: float = 1e-5
    dense_threshold: int = 4000
    nystrom_rank: int = 64
    cg_tol: float = 1e-10
    cg_max_iters: int = 500
    use_ga: bool = True
    line_search_points: int = 31
    max_iters: int | None = None
    wall_seconds: float | None = None
    resample: bool = True
    reject_if_worse: bool = False
    deterministic_timing: bool = False

    def __post_init__(self):
        if self.lam_cap <= 0.0:
            raise ConfigError(f"lam_cap must be positive, got {self.lam_cap}", "lam_cap")
        if self.line_search_points < 1:
            raise ConfigError(
                f"line_search_points must be >= 1, got {self.line_search_points}",
                "line_search_points",
            )
        if self.dense_threshold < 1:
            raise ConfigError(
                f"dense_threshold must be >= 1, got {self.dense_threshold}",
                "dense_threshold",
            )
        if self.nystrom_rank < 1:
            raise ConfigError(
                f"nystrom_rank must be >= 1, got {self.nystrom_rank}", "nystrom_rank"
            )
        if self.cg_tol <= 0.0 or self.cg_max_iters < 1:
            raise ConfigError("CG tolerance and iteration cap must be positive", "cg_tol")
        if (self.max_iters is None) == (self.wall_seconds is None):
            raise ConfigError(
                "exactly one of max_iters / wall_seconds must be set", "max_iters"
            )
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}", "max_iters")
        if self.wall_seconds is not None and self.wall_seconds <= 0.0:
            raise ConfigError(
                f"wall_seconds must be positive, got {self.wall_seconds}", "wall_seconds"
            )


@dataclass
class TraceRow:
    """One accepted or rejected outer iteration."""

    iteration: int
    wall_time: float
    loss: float
    rel_l2: float = float("nan")
    lam: float = float("nan")
    eta: float = float("nan")
    cg_iterations: int = 0
    ga_ratio: float = float("nan")


@dataclass
class TrainTrace:
    """Per-iteration history of one run plus its final parameters."""

    problem: str
    method: str
    seed: int
    rows: list[TraceRow] = field(default_factory=list)
    final_theta: ParameterVector | None = None
    aborted: bool = False
    abort_reason: str | None = None
    diverged: bool = False

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss if self.rows else float("nan")

    @property
    def final_rel_l2(self) -> float:
        return self.rows[-1].rel_l2 if self.rows else float("nan")


class _Clock:
    """Strictly increasing time stamps; logical ticks in deterministic mode."""

    def __init__(self, deterministic: bool):
        self.deterministic = deterministic
        self.t0 = time.monotonic()
        self.ticks = 0
        self.last = 0.0

    def stamp(self) -> float:
        self.ticks += 1
        if self.deterministic:
            t = float(self.ticks)
        else:
            t = max(time.monotonic() - self.t0, self.last + 1e-9)
        self.last = t
        return t

    def elapsed(self) -> float:
        return time.monotonic() - self.t0


def lm_damping(loss: float, lam_cap: float) -> float:
    """Levenberg-Marquardt damping: the loss itself, capped and floored."""
    if loss < 0.0:
        raise DomainError(f"loss must be nonnegative, got {loss}")
    return max(min(loss, lam_cap), LAMBDA_FLOOR)


@dataclass
class LineSearchResult:
    eta: float | None
    loss: float
    degraded: bool
    evaluations: int
    rejected: bool


def line_search(loss_many, theta: np.ndarray, delta: np.ndarray, current_loss: float | None = None, points_count: int = 31) -> LineSearchResult:
    """Geometric grid search over step lengths 2^0, 2^-1, ..., 2^-(count-1).

    Returns the argmin (ties resolve to the larger step); a result above
    the current loss is still accepted but flagged as degraded. All
    evaluations non-finite means rejection: the caller should raise the
    damping and retry.
    """
    theta = np.asarray(theta, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    etas = 2.0 ** -np.arange(points_count, dtype=np.float64)
    candidates = theta[None, :] + etas[:, None] * delta[None, :]
    losses = np.asarray(loss_many(candidates), dtype=np.float64)
    finite = np.isfinite(losses)
    if not finite.any():
        return LineSearchResult(None, float("nan"), False, points_count, True)
    j = int(np.argmin(np.where(finite, losses, np.inf)))
    degraded = current_loss is not None and losses[j] > current_loss
    return LineSearchResult(float(etas[j]), float(losses[j]), degraded, points_count, False)


# -- the main loop ------------------------------------------------------------------


def _dispatch_step(rmap: ResidualMap, theta: ParameterVector, g: np.ndarray, lam: float, config: OptimizerConfig, rng) -> StepResult:
    if rmap.m < config.dense_threshold:
        return dense_dual_solve(rmap, theta, g, lam=lam, use_ga=config.use_ga)
    return pcg_step(
        rmap,
        theta,
        g,
        lam=lam,
        landmark_count=min(config.nystrom_rank, rmap.m),
        tol=config.cg_tol,
        max_iters=config.cg_max_iters,
        rng=rng,
    )


def _budget_reached(config: OptimizerConfig, iteration: int, clock: _Clock) -> bool:
    if config.max_iters is not None:
        return iteration > config.max_iters
    return clock.elapsed() >= config.wall_seconds


def _dngd_loop(
    trace: TrainTrace,
    rmap_provider,
    theta: ParameterVector,
    config: OptimizerConfig,
    rng,
    rel_l2_fn=None,
) -> TrainTrace:
    clock = _Clock(config.deterministic_timing)
    rmap = rmap_provider(1)
    rel = rel_l2_fn(theta) if rel_l2_fn else float("nan")
    trace.rows.append(TraceRow(0, clock.stamp(), rmap.loss(theta), rel_l2=rel))

    rejections = 0
    iteration = 0
    while True:
        iteration += 1
        if _budget_reached(config, iteration, clock):
            break
        try:
            rmap = rmap_provider(iteration)
            batch, g = rmap.residuals_and_gradient(theta)
            loss = batch.loss()
            lam = lm_damping(loss, config.lam_cap) * 10.0**rejections
            step = _dispatch_step(rmap, theta, g, lam, config, rng)
        except Exception as exc:
            # flush the partial trace with an error record instead of losing it
            trace.aborted = True
            trace.abort_reason = f"error at iteration {iteration}: {exc!r}"
            break
        if not step.delta.data.any():
            # all candidates coincide with theta; keep the exact current loss
            ls = LineSearchResult(1.0, loss, False, 0, False)
        else:
            ls = line_search(
                rmap.loss_many, theta.data, step.delta.data, loss, config.line_search_points
            )
        if ls.rejected or (config.reject_if_worse and ls.loss > loss):
            rejections += 1
            trace.rows.append(
                TraceRow(
                    iteration,
                    clock.stamp(),
                    loss,
                    rel_l2=rel_l2_fn(theta) if rel_l2_fn else float("nan"),
                    lam=step.lambda_used,
                    cg_iterations=step.cg_iterations,
                )
            )
            if rejections >= MAX_CONSECUTIVE_REJECTIONS:
                trace.aborted = True
                trace.abort_reason = (
                    f"{rejections} consecutive step rejections; last damping "
                    f"{step.lambda_used:.3e}"
                )
                break
            continue
        rejections = 0
        theta = ParameterVector(theta.data + ls.eta * step.delta.data, theta.layout)
        trace.rows.append(
            TraceRow(
                iteration,
                clock.stamp(),
                ls.loss,
                rel_l2=rel_l2_fn(theta) if rel_l2_fn else float("nan"),
                lam=step.lambda_used,
                eta=ls.eta,
                cg_iterations=step.cg_iterations,
                ga_ratio=step.ga_ratio if step.ga_ratio is not None else float("nan"),
            )
        )
    trace.final_theta = theta
    return trace


def dngd_minimize(residual_map: ResidualMap, theta: ParameterVector, config: OptimizerConfig, rng=None) -> TrainTrace:
    """Run the dual Gauss-Newton loop on a fixed residual map."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    trace = TrainTrace(problem="custom", method="dngd", seed=-1)
    return _dngd_loop(trace, lambda it: residual_map, theta, config, rng)


def network_values(problem, spec: MlpSpec, theta: ParameterVector, pts: np.ndarray) -> np.ndarray:
    """Transformed network output on raw points (embedding + transform applied)."""
    net = NetAccess(pair_layers(theta.arrays()), problem.embedding, problem.transform)
    return np.asarray(net.u(pts), dtype=np.float64)


def _rel_l2_fn(problem, spec: MlpSpec):
    if not problem.has_exact:
        return None
    pts = problem.eval_points()
    exact = problem.exact_solution(pts)
    return lambda theta: relative_l2_error(network_values(problem, spec, theta, pts), exact)


def dngd_run(problem, spec: MlpSpec, config: OptimizerConfig, seed: int, counts=None) -> TrainTrace:
    """Train a network on a PDE problem with dual natural gradient descent.

    The seed drives the weight initialization and all collocation
    resampling, so equal (problem, spec, config, seed) reproduce the
    trace exactly under deterministic timing.
    """
    from .problems import sample_collocation

    spec = replace(spec, seed=seed)
    rng = np.random.default_rng(seed)
    theta = init_params(spec)
    state = {"rmap": None}

    def provider(iteration: int) -> ResidualMap:
        if state["rmap"] is None or (config.resample and iteration > 1):
            colloc = sample_collocation(problem, counts, rng)
            if state["rmap"] is None:
                state["rmap"] = PinnResidualMap(problem, spec, colloc)
            else:
                state["rmap"] = state["rmap"].rebind(colloc)
        return state["rmap"]

    trace = TrainTrace(problem=problem.name, method="dngd", seed=seed)
    return _dngd_loop(trace, provider, theta, config, rng, _rel_l2_fn(problem, spec))


# -- primal oracles --------------------------------------------------------------------


def _explicit_jacobian(residual_map: ResidualMap, theta: ParameterVector, chunk: int = 256) -> np.ndarray:
    n = residual_map.n
    blocks = []
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        tangents = np.zeros((stop - start, n))
        tangents[np.arange(stop - start), np.arange(start, stop)] = 1.0
        blocks.append(residual_map.jvp_many(theta, tangents))
    return np.concatenate(blocks, axis=0).T  # (m, n)


def primal_gn_solve(residual_map: ResidualMap, theta: ParameterVector, g, points=None, lam: float = 1e-3) -> ParameterVector:
    """Parameter-space damped Gauss-Newton step (J^T J + lam I) dtheta = -g.

    Materializes J column blocks through forward products; n-cubed cost,
    intended as the small-n oracle and the n << m production path.
    """
    if lam <= 0.0:
        raise DomainError(f"damping must be positive, got {lam}")
    rmap = residual_map if points is None else residual_map.rebind(points)
    g = g.data if isinstance(g, ParameterVector) else np.asarray(g, dtype=np.float64)
    J = _explicit_jacobian(rmap, theta)
    import scipy.linalg

    factor, _ = _chol_with_retries(J.T @ J, lam)
    delta = scipy.linalg.cho_solve(factor, -g)
    return ParameterVector(delta, theta.layout)


def primal_ga_correction(residual_map: ResidualMap, theta: ParameterVector, v, points=None, lam: float = 1e-3) -> ParameterVector:
    """Parameter-space geodesic acceleration (J^T J + lam I) a = -J^T f_vv."""
    if lam <= 0.0:
        raise DomainError(f"damping must be positive, got {lam}")
    rmap = residual_map if points is None else residual_map.rebind(points)
    v = v.data if isinstance(v, ParameterVector) else np.asarray(v, dtype=np.float64)
    f_vv = rmap.second_directional(theta, v)
    J = _explicit_jacobian(rmap, theta)
    import scipy.linalg

    factor, _ = _chol_with_retries(J.T @ J, lam)
    a = scipy.linalg.cho_solve(factor, -(J.T @ f_vv))
    return ParameterVector(a, theta.layout)


# -- first-order baselines ---------------------------------------------------------------


ADAM_DEFAULTS = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
SGD_DEFAULTS = {"momentum": 0.9, "peak_lr": 1e-2, "edge_lr": 1e-4, "pct_start": 0.3}
DIVERGENCE_LOSS = 1e10


def _one_cycle_lr(step: int, total: int, peak: float, edge: float, pct_start: float) -> float:
    """Linear ramp to the peak, cosine anneal back to the edge rate."""
    warm = max(int(total * pct_start), 1)
    if step <= warm:
        return edge + (peak - edge) * step / warm
    tail = max(total - warm, 1)
    frac = min((step - warm) / tail, 1.0)
    return edge + (peak - edge) * 0.5 * (1.0 + np.cos(np.pi * frac))


def adam_update(g: np.ndarray, m1: np.ndarray, m2: np.ndarray, step: int, hp: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam update; returns (delta, m1, m2)."""
    m1 = hp["beta1"] * m1 + (1.0 - hp["beta1"]) * g
    m2 = hp["beta2"] * m2 + (1.0 - hp["beta2"]) * g * g
    m1_hat = m1 / (1.0 - hp["beta1"] ** step)
    m2_hat = m2 / (1.0 - hp["beta2"] ** step)
    return -hp["lr"] * m1_hat / (np.sqrt(m2_hat) + hp["eps"]), m1, m2


def sgd_nesterov_update(g: np.ndarray, velocity: np.ndarray, lr: float, momentum: float) -> tuple[np.ndarray, np.ndarray]:
    """One Nesterov momentum update (lookahead form); returns (delta, velocity)."""
    velocity = momentum * velocity + g
    return -lr * (g + momentum * velocity), velocity


def baseline_run(problem, spec: MlpSpec, method: str, config: OptimizerConfig, seed: int, counts=None, hyperparams: dict | None = None) -> TrainTrace:
    """First-order reference training loop (adam or sgd_momentum)."""
    from .problems import sample_collocation

    if method not in ("adam", "sgd_momentum"):
        raise ConfigError(f"unknown baseline method {method!r}", "method")
    if config.max_iters is None:
        raise ConfigError("baselines require an iteration budget", "max_iters")
    hp = dict(ADAM_DEFAULTS if method == "adam" else SGD_DEFAULTS)
    hp.update(hyperparams or {})

    spec = replace(spec, seed=seed)
    rng = np.random.default_rng(seed)
    theta = init_params(spec)
    rel_fn = _rel_l2_fn(problem, spec)
    clock = _Clock(config.deterministic_timing)
    trace = TrainTrace(problem=problem.name, method=method, seed=seed)

    colloc = sample_collocation(problem, counts, rng)
    rmap = PinnResidualMap(problem, spec, colloc)
    trace.rows.append(
        TraceRow(
            0,
            clock.stamp(),
            rmap.loss(theta),
            rel_l2=rel_fn(theta) if rel_fn else float("nan"),
        )
    )

    m1 = np.zeros(theta.n)
    m2 = np.zeros(theta.n)
    velocity = np.zeros(theta.n)
    for iteration in range(1, config.max_iters + 1):
        try:
            if config.resample and iteration > 1:
                rmap = rmap.rebind(sample_collocation(problem, counts, rng))
            batch, g = rmap.residuals_and_gradient(theta)
            loss = batch.loss()
        except Exception as exc:
            trace.aborted = True
            trace.abort_reason = f"error at iteration {iteration}: {exc!r}"
            break
        if loss > DIVERGENCE_LOSS:
            trace.diverged = True
            trace.abort_reason = f"loss {loss:.3e} above divergence cutoff"
            break
        if method == "adam":
            update, m1, m2 = adam_update(g, m1, m2, iteration, hp)
            lr = hp["lr"]
        else:
            lr = _one_cycle_lr(
                iteration, config.max_iters, hp["peak_lr"], hp["edge_lr"], hp["pct_start"]
            )
            update, velocity = sgd_nesterov_update(g, velocity, lr, hp["momentum"])
        theta = ParameterVector(theta.data + update, theta.layout)
        trace.rows.append(
            TraceRow(
                iteration,
                clock.stamp(),
                rmap.loss(theta),
                rel_l2=rel_fn(theta) if rel_fn else float("nan"),
                eta=lr,
            )
        )
    trace.final_theta = theta
    return trace


# -- metrics and the regime sweep -----------------------------------------------------------


def relative_l2_error(u_pred: np.ndarray, u_exact: np.ndarray) -> float:
    """|u_pred - u_exact|_2 / |u_exact|_2 over a shared evaluation grid."""
    u_pred = np.asarray(u_pred, dtype=np.float64).reshape(-1)
    u_exact = np.asarray(u_exact, dtype=np.float64).reshape(-1)
    if u_pred.shape != u_exact.shape:
        raise DomainError(
            f"prediction and reference shapes differ: {u_pred.shape} vs {u_exact.shape}"
        )
    denom = float(np.linalg.norm(u_exact))
    if denom == 0.0:
        raise DomainError("reference values are identically zero on the grid")
    return float(np.linalg.norm(u_pred - u_exact)) / denom


def timing_sweep(grid, iterations: int = 3, lam: float = 1e-3, seed: int = 0) -> list[dict]:
    """Mean per-step seconds of primal vs dual dense solves on random maps.

    Each (m, n) cell times the full step: Gramian/normal-matrix assembly,
    Cholesky, and recovery. Timings are hardware facts, only the relative
    ordering is meaningful.
    """
    from .residuals import LinearResidualMap

    rng = np.random.default_rng(seed)
    rows = []
    for m, n in grid:
        A = rng.normal(size=(m, n)) / np.sqrt(n)
        rmap = LinearResidualMap(A, rng.normal(size=m))
        theta = ParameterVector(rng.normal(size=n), rmap.layout)

        primal_times, dual_times = [], []
        for _ in range(iterations):
            t0 = time.perf_counter()
            g = rmap.gradient(theta)
            primal_gn_solve(rmap, theta, g, lam=lam)
            primal_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            g = rmap.gradient(theta)
            dense_dual_solve(rmap, theta, g, lam=lam, use_ga=False)
            dual_times.append(time.perf_counter() - t0)
        primal_s = float(np.mean(primal_times))
        dual_s = float(np.mean(dual_times))
        rows.append(
            {
                "m": m,
                "n": n,
                "primal_s": primal_s,
                "dual_s": dual_s,
                "winner": "dual" if dual_s < primal_s else "primal",
            }
        )
    return rows
