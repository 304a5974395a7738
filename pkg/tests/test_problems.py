"""Problem definitions: sampling, exact-solution residuals, loss scaling, STDE."""

import itertools

import numpy as np
import pytest

from dngd import ops
from dngd.errors import DomainError
from dngd.jets import Jet2
from dngd.model import MlpSpec, NetAccess, init_params, pair_layers
from dngd.problems import (
    PROBLEMS,
    AllenCahn,
    ExactNet,
    Heat,
    Poisson2d,
    Poisson10d,
    PoissonBallStde,
    eval_residuals,
    make_problem,
    sample_collocation,
    stde_laplacian,
)
from dngd.residuals import BOUNDARY, INTERIOR, PinnResidualMap


def exactnet_class_residuals(problem, colloc, cols_fn=None):
    """Unweighted per-class residuals with the network replaced by a field."""
    net = ExactNet(cols_fn or problem.exact_cols)
    return {
        c.class_id: np.asarray(problem.class_residual(net, c), dtype=np.float64)
        for c in colloc.classes
    }


# -- exact solutions annihilate their residuals --------------------------------


def test_poisson2d_exact_solution_zero_residuals():
    problem = Poisson2d()
    colloc = sample_collocation(problem, {INTERIOR: 100, BOUNDARY: 50}, 0)
    res = exactnet_class_residuals(problem, colloc)
    assert np.max(np.abs(res[INTERIOR])) <= 1e-10
    assert np.max(np.abs(res[BOUNDARY])) <= 1e-12


def test_poisson10d_exact_solution_zero_residuals():
    problem = Poisson10d()
    colloc = sample_collocation(problem, {INTERIOR: 100, BOUNDARY: 40}, 1)
    res = exactnet_class_residuals(problem, colloc)
    # the product structure makes every dd_jj vanish identically
    assert np.max(np.abs(res[INTERIOR])) == 0.0
    assert np.max(np.abs(res[BOUNDARY])) == 0.0


@pytest.mark.parametrize("d", [2, 10])
def test_heat_exact_solution_zero_residuals(d):
    problem = Heat(d)
    colloc = sample_collocation(problem, {INTERIOR: 100, BOUNDARY: 60}, 2)
    res = exactnet_class_residuals(problem, colloc)
    assert np.max(np.abs(res[INTERIOR])) <= 1e-10
    assert np.max(np.abs(res[BOUNDARY])) == 0.0


def test_heat_trace_at_t0_is_initial_data():
    problem = Heat(2)
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(40, 2))
    pts0 = np.column_stack([np.zeros(40), x])
    expected = np.sum(np.sin(2.0 * np.pi * x), axis=1)
    assert np.allclose(problem.exact_solution(pts0), expected, atol=1e-12)


def test_allen_cahn_zero_network_interior_and_exact_initial_field():
    problem = AllenCahn()
    colloc = sample_collocation(problem, None, 4)
    zero = lambda cols: ops.mul(0.0, cols[0])
    res = exactnet_class_residuals(problem, colloc, cols_fn=zero)
    assert np.max(np.abs(res[INTERIOR])) == 0.0

    ic_field = lambda cols: ops.mul(
        ops.power(cols[1], 2), ops.cos(ops.mul(np.pi, cols[1]))
    )
    res = exactnet_class_residuals(problem, colloc, cols_fn=ic_field)
    assert np.max(np.abs(res["initial"])) <= 1e-14


def test_zero_network_zero_forcing_gives_zero_interior():
    problem = Poisson10d()  # harmonic target: f = 0
    colloc = sample_collocation(problem, {INTERIOR: 30, BOUNDARY: 10}, 5)
    zero = lambda cols: ops.mul(0.0, cols[0])
    res = exactnet_class_residuals(problem, colloc, cols_fn=zero)
    assert np.max(np.abs(res[INTERIOR])) == 0.0


def test_poisson_ball_paired_estimator_zero_at_exact_solution():
    problem = PoissonBallStde(dim=6, index_set_size=2)
    colloc = sample_collocation(problem, {INTERIOR: 16}, 6)
    res = exactnet_class_residuals(problem, colloc)
    assert np.max(np.abs(res[INTERIOR])) <= 1e-12


# -- sampling --------------------------------------------------------------------


def test_poisson2d_membership_and_counts():
    problem = Poisson2d()
    colloc = sample_collocation(problem, (8, 4), 7)
    interior, boundary = colloc.classes
    assert interior.points.shape == (8, 2)
    assert np.all((interior.points > 0.0) & (interior.points < 1.0))
    assert boundary.points.shape == (4, 2)
    on_face = np.isin(boundary.points, (0.0, 1.0))
    assert np.all(on_face.any(axis=1))
    assert colloc.m == 12


def test_same_seed_identical_sets():
    for name in PROBLEMS:
        problem = make_problem(name)
        a = sample_collocation(problem, None, 11)
        b = sample_collocation(problem, None, 11)
        for ca, cb in zip(a.classes, b.classes):
            assert np.array_equal(ca.points, cb.points)
            for key in ca.aux:
                assert np.array_equal(ca.aux[key], cb.aux[key])


def test_heat_count_arithmetic_and_boundary_membership():
    problem = Heat(10)
    colloc = sample_collocation(problem, {INTERIOR: 100, BOUNDARY: 10}, 8)
    assert colloc.m == 110
    boundary = colloc.classes[1].points
    t, x = boundary[:, 0], boundary[:, 1:]
    on_parabolic = (t == 0.0) | np.isin(x, (0.0, 1.0)).any(axis=1)
    assert np.all(on_parabolic)
    interior = colloc.classes[0].points
    assert np.all((interior[:, 0] > 0.0) & (interior[:, 0] < 1.0))
    assert np.all((interior[:, 1:] > 0.0) & (interior[:, 1:] < 1.0))


def test_allen_cahn_classes_and_domain():
    problem = AllenCahn()
    colloc = sample_collocation(problem, None, 9)
    assert [c.class_id for c in colloc.classes] == [INTERIOR, "initial"]
    assert colloc.m == 1350
    interior, initial = colloc.classes
    assert np.all((interior.points[:, 1] > -1.0) & (interior.points[:, 1] < 1.0))
    assert np.all(initial.points[:, 0] == 0.0)


def test_ball_sampling_and_index_subsets():
    problem = PoissonBallStde(dim=12, index_set_size=4)
    colloc = sample_collocation(problem, {INTERIOR: 64}, 10)
    cls = colloc.classes[0]
    assert np.all(np.linalg.norm(cls.points, axis=1) < 1.0)
    idx = cls.aux["stde_idx"]
    assert idx.shape == (64, 4)
    assert idx.min() >= 0 and idx.max() < 12
    assert all(len(set(row)) == 4 for row in idx)


def test_count_validation():
    problem = Poisson2d()
    with pytest.raises(DomainError):
        sample_collocation(problem, {INTERIOR: 0}, 0)
    with pytest.raises(DomainError):
        sample_collocation(problem, {"inital": 5}, 0)
    with pytest.raises(DomainError):
        make_problem("burgers")


def test_default_counts_match_desk_scale():
    assert sample_collocation(Poisson2d(), None, 0).m == 600
    assert sample_collocation(AllenCahn(), None, 0).m == 1350


# -- loss scaling -----------------------------------------------------------------


@pytest.mark.parametrize(
    "problem,widths",
    [
        (Poisson2d(), (2, 8, 8, 1)),
        (Heat(2), (3, 8, 8, 1)),
        (AllenCahn(), (3, 8, 8, 1)),
    ],
)
def test_loss_matches_per_class_mean_square(problem, widths):
    spec = MlpSpec(widths, seed=3)
    theta = init_params(spec)
    counts = {cid: 20 for cid in problem.default_counts}
    colloc = sample_collocation(problem, counts, 12)
    rmap = PinnResidualMap(problem, spec, colloc)
    loss = rmap.loss(theta)

    net = NetAccess(pair_layers(theta.arrays()), problem.embedding, problem.transform)
    direct = 0.0
    for cls in colloc.classes:
        raw = np.asarray(problem.class_residual(net, cls), dtype=np.float64)
        direct += 0.5 * np.sum(raw**2) / cls.count
    assert abs(loss - direct) <= 1e-12 * max(1.0, abs(direct))


def test_eval_residuals_reports_class_partition():
    problem = Poisson2d()
    spec = MlpSpec((2, 6, 1), seed=0)
    theta = init_params(spec)
    colloc = sample_collocation(problem, {INTERIOR: 9, BOUNDARY: 4}, 13)
    batch = eval_residuals(problem, spec, theta, colloc)
    assert batch.m == 13
    spans = {cid: (a, b) for cid, a, b in batch.partition}
    assert spans[INTERIOR] == (0, 9) and spans[BOUNDARY] == (9, 13)


# -- STDE Laplacian estimator ------------------------------------------------------


class _FixedSubset:
    """rng stand-in whose choice() returns a prescribed index set."""

    def __init__(self, idx):
        self.idx = np.asarray(idx, dtype=np.int64)

    def choice(self, d, size, replace):
        assert not replace and size == self.idx.size
        return self.idx


def _col_jet(xjet, i):
    return Jet2(xjet.val[:, i], xjet.d1[:, i], xjet.d2[:, i], xjet.level)


def _norm_sq_net(arrays, xjet):
    total = _col_jet(xjet, 0)
    total = ops.power(total, 2)
    for i in range(1, xjet.val.shape[1]):
        total = ops.add(total, ops.power(_col_jet(xjet, i), 2))
    return total


def _first_sq_net(arrays, xjet):
    return ops.power(_col_jet(xjet, 0), 2)


def test_stde_norm_squared_is_exact_for_any_subset():
    x = np.random.default_rng(14).normal(size=5)
    for k in (1, 2, 5):
        est = stde_laplacian(_norm_sq_net, None, x, k, 99)
        assert abs(est - 2 * 5) <= 1e-12


def test_stde_single_coordinate_enumeration():
    x = np.array([1.0, 2.0, -1.0, 0.5])
    values = [
        stde_laplacian(_first_sq_net, None, x, 1, _FixedSubset([j])) for j in range(4)
    ]
    assert abs(values[0] - 8.0) <= 1e-12
    assert all(abs(v) <= 1e-12 for v in values[1:])
    assert abs(np.mean(values) - 2.0) <= 1e-12


def test_stde_full_index_set_matches_jet_sum():
    from dngd.adcore import input_jet

    spec = MlpSpec((4, 10, 10, 1), seed=15)
    theta = init_params(spec)
    x = np.random.default_rng(16).uniform(size=4)
    exact = sum(input_jet(spec, theta, x, j).d2 for j in range(4))
    est = stde_laplacian(spec, theta, x, 4, 17)
    assert abs(est - exact) <= 1e-12 * max(1.0, abs(exact))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_stde_unbiased_over_all_subsets(k):
    from dngd.adcore import input_jet

    d = 5
    spec = MlpSpec((d, 8, 8, 1), seed=18)
    theta = init_params(spec)
    x = np.random.default_rng(19).uniform(-0.5, 0.5, size=d)
    exact = sum(input_jet(spec, theta, x, j).d2 for j in range(d))
    subsets = list(itertools.combinations(range(d), k))
    mean = np.mean(
        [stde_laplacian(spec, theta, x, k, _FixedSubset(s)) for s in subsets]
    )
    assert abs(mean - exact) <= 1e-10 * max(1.0, abs(exact))


def test_stde_rejects_oversized_subset():
    with pytest.raises(DomainError):
        stde_laplacian(_norm_sq_net, None, np.zeros(3), 4, 0)
