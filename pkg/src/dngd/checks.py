"""Fast self-check suite: small-instance oracles for every core equivalence.

Each check runs in well under a second and verifies one mathematical
identity (adjoint pairing, primal/dual step equality, preconditioner
exactness, estimator unbiasedness, ...) at the library's advertised
tolerances. The CLI `check` verb and the service expose this suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .model import MlpSpec, init_params
from .optimizer import lm_damping, line_search, primal_ga_correction, primal_gn_solve
from .params import ParameterVector
from .problems import ExactNet, make_problem, sample_collocation, stde_laplacian
from .residuals import LinearResidualMap, RegressionResidualMap
from .solver import assemble_gramian, dense_dual_solve, kvp, nystrom_build, pcg_step


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _instance(widths=(2, 8, 1), num_points=12, seed=0):
    spec = MlpSpec(widths, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    x = rng.uniform(-1.0, 1.0, size=(num_points, widths[0]))
    y = rng.normal(size=num_points)
    return RegressionResidualMap(spec, x, y), init_params(spec)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_adjoint_identity() -> CheckResult:
    rmap, theta = _instance(seed=1)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        v = rng.normal(size=rmap.n)
        w = rng.normal(size=rmap.m)
        lhs = float(rmap.jvp(theta, v) @ w)
        rhs = float(v @ rmap.vjp(theta, w))
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs)))
    return CheckResult("adjoint_identity", worst <= 1e-12, f"max rel gap {worst:.2e}")


def check_gradient_finite_difference() -> CheckResult:
    rmap, theta = _instance(widths=(2, 10, 1), num_points=15, seed=3)
    g = rmap.gradient(theta)
    h = 1e-6
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(5):
        v = rng.normal(size=rmap.n)
        v /= np.linalg.norm(v)
        lp = rmap.loss(ParameterVector(theta.data + h * v, theta.layout))
        lm = rmap.loss(ParameterVector(theta.data - h * v, theta.layout))
        fd = (lp - lm) / (2.0 * h)
        an = float(g @ v)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return CheckResult(
        "gradient_finite_difference", worst <= 1e-5, f"max rel error {worst:.2e}"
    )


def check_second_directional_finite_difference() -> CheckResult:
    rmap, theta = _instance(widths=(2, 6, 1), num_points=10, seed=5)
    rng = np.random.default_rng(6)
    v = rng.normal(size=rmap.n)
    h = 1e-4
    r0 = rmap.residual_batch(theta).values
    rp = rmap.residual_batch(ParameterVector(theta.data + h * v, theta.layout)).values
    rm = rmap.residual_batch(ParameterVector(theta.data - h * v, theta.layout)).values
    fd = (rp - 2.0 * r0 + rm) / h**2
    an = rmap.second_directional(theta, v)
    err = _rel(fd, an)
    return CheckResult(
        "second_directional_finite_difference", err <= 1e-6, f"rel error {err:.2e}"
    )


def check_primal_dual_equivalence() -> CheckResult:
    worst = 0.0
    for seed in range(4):
        rmap, theta = _instance(seed=seed)
        g = rmap.gradient(theta)
        for lam in (1e-6, 1e-3, 1.0):
            p = primal_gn_solve(rmap, theta, g, lam=lam).data
            d = dense_dual_solve(rmap, theta, g, lam=lam, use_ga=False).delta.data
            worst = max(worst, _rel(d, p))
    return CheckResult(
        "primal_dual_equivalence", worst <= 1e-8, f"max rel error {worst:.2e}"
    )


def check_ga_equivalence() -> CheckResult:
    # affine residuals: the correction vanishes identically
    rng = np.random.default_rng(7)
    A = rng.normal(size=(12, 5))
    affine = LinearResidualMap(A, rng.normal(size=12))
    theta = ParameterVector(rng.normal(size=5), affine.layout)
    g = affine.gradient(theta)
    plain = dense_dual_solve(affine, theta, g, lam=1e-3, use_ga=False).delta.data
    curved = dense_dual_solve(affine, theta, g, lam=1e-3, use_ga=True).delta.data
    affine_gap = float(np.linalg.norm(curved - plain))
    if affine_gap > 1e-12:
        return CheckResult("ga_equivalence", False, f"affine GA gap {affine_gap:.2e}")

    # curved residuals small enough to open the acceptance gate: the dual
    # correction must then equal the primal GA solve
    spec = MlpSpec((2, 8, 1), seed=8)
    theta0 = init_params(spec)
    rng = np.random.default_rng(8)
    x = rng.uniform(-1.0, 1.0, size=(10, 2))
    probe = RegressionResidualMap(spec, x, np.zeros(10))
    weight = probe.collocation.classes[0].weight
    targets = probe.residual_batch(theta0).values / weight + 0.01 * rng.normal(size=10)
    rmap = RegressionResidualMap(spec, x, targets)

    lam = 1e-2
    g = rmap.gradient(theta0)
    v = dense_dual_solve(rmap, theta0, g, lam=lam, use_ga=False).delta
    with_ga = dense_dual_solve(rmap, theta0, g, lam=lam, use_ga=True)
    a_primal = primal_ga_correction(rmap, theta0, v, lam=lam).data
    if with_ga.ga_ratio is None or with_ga.ga_ratio > 0.5:
        return CheckResult("ga_equivalence", False, "acceptance gate unexpectedly closed")
    a_dual = 2.0 * (with_ga.delta.data - v.data)
    err = _rel(a_dual, a_primal)
    return CheckResult(
        "ga_equivalence", err <= 1e-8, f"affine gap {affine_gap:.1e}, rel error {err:.2e}"
    )


def check_kvp_against_dense_gramian() -> CheckResult:
    rmap, theta = _instance(widths=(2, 8, 1), num_points=14, seed=9)
    K = assemble_gramian(rmap, theta).K
    lam = 1e-3
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(10):
        v = rng.normal(size=rmap.m)
        got = kvp(rmap, theta, v, lam).values
        want = K @ v + lam * v
        worst = max(worst, float(np.max(np.abs(got - want))))
    return CheckResult(
        "kvp_against_dense_gramian", worst <= 1e-10, f"max abs error {worst:.2e}"
    )


def check_nystrom_full_rank_exactness() -> CheckResult:
    rmap, theta = _instance(widths=(2, 6, 1), num_points=12, seed=11)
    K = assemble_gramian(rmap, theta).K
    lam = 1e-3
    pre = nystrom_build(rmap, theta, landmark_count=rmap.m, lam=lam, rng=0)
    recon = pre.U @ np.diag(pre.lam_hat) @ pre.U.T
    frob = float(np.linalg.norm(recon - K) / np.linalg.norm(K))
    rng = np.random.default_rng(12)
    v = rng.normal(size=rmap.m)
    inv_gap = float(np.max(np.abs(pre.apply(K @ v + lam * v) - v)))
    ok = frob <= 1e-8 and inv_gap <= 1e-8
    return CheckResult(
        "nystrom_full_rank_exactness",
        ok,
        f"reconstruction {frob:.2e}, inverse identity {inv_gap:.2e}",
    )


def check_pcg_matches_dense() -> CheckResult:
    rmap, theta = _instance(widths=(2, 10, 1), num_points=30, seed=13)
    g = rmap.gradient(theta)
    lam = 1e-3
    dense = dense_dual_solve(rmap, theta, g, lam=lam, use_ga=False).delta.data
    cg = pcg_step(rmap, theta, g, lam=lam, landmark_count=15, tol=1e-10, rng=1).delta.data
    err = _rel(cg, dense)
    return CheckResult("pcg_matches_dense", err <= 1e-6, f"rel error {err:.2e}")


def check_stde_unbiased() -> CheckResult:
    class _FixedSubset:
        def __init__(self, idx):
            self.idx = np.asarray(idx)

        def choice(self, d, size, replace):
            return self.idx

    d = 4
    spec = MlpSpec((d, 6, 1), seed=14)
    theta = init_params(spec)
    rng = np.random.default_rng(15)
    x = rng.uniform(-1.0, 1.0, size=d)
    from .adcore import input_jet

    exact = sum(input_jet(spec, theta, x, j).d2 for j in range(d))
    worst = 0.0
    for k in (1, 2):
        subsets = list(combinations(range(d), k))
        mean = np.mean(
            [stde_laplacian(spec, theta, x, k, _FixedSubset(s)) for s in subsets]
        )
        worst = max(worst, abs(mean - exact))
    return CheckResult("stde_unbiased", worst <= 1e-10, f"max abs bias {worst:.2e}")


def check_exact_solution_residual() -> CheckResult:
    problem = make_problem("poisson2d")
    net = ExactNet(problem.exact_cols)
    colloc = sample_collocation(problem, {"interior": 60, "boundary": 40}, rng=16)
    worst = 0.0
    for cls in colloc.classes:
        vals = np.asarray(problem.class_residual(net, cls), dtype=np.float64)
        worst = max(worst, float(np.max(np.abs(vals))))
    return CheckResult(
        "exact_solution_residual", worst <= 1e-8, f"max abs residual {worst:.2e}"
    )


def check_damping_and_line_search_contracts() -> CheckResult:
    ok = (
        lm_damping(0.3, 1e-5) == 1e-5
        and lm_damping(1e-7, 1e-5) == 1e-7
        and lm_damping(0.0, 1e-5) == 1e-12
    )
    quad = line_search(lambda c: (c[:, 0] - 1.0) ** 2, np.zeros(1), np.ones(1), 9.0)
    ok = ok and quad.eta == 1.0 and quad.evaluations == 31
    bad = line_search(lambda c: np.full(c.shape[0], np.nan), np.zeros(1), np.ones(1))
    ok = ok and bad.rejected
    return CheckResult(
        "damping_and_line_search_contracts", ok, "rule table and grid semantics"
    )


ALL_CHECKS = (
    check_adjoint_identity,
    check_gradient_finite_difference,
    check_second_directional_finite_difference,
    check_primal_dual_equivalence,
    check_ga_equivalence,
    check_kvp_against_dense_gramian,
    check_nystrom_full_rank_exactness,
    check_pcg_matches_dense,
    check_stde_unbiased,
    check_exact_solution_residual,
    check_damping_and_line_search_contracts,
)


def run_checks() -> list[CheckResult]:
    results = []
    for fn in ALL_CHECKS:
        try:
            results.append(fn())
        except Exception as exc:  # a crash is a failure, not a crash of the suite
            results.append(CheckResult(fn.__name__.removeprefix("check_"), False, f"raised {exc!r}"))
    return results


def format_results(results: list[CheckResult]) -> str:
    lines = [
        f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}" for r in results
    ]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
