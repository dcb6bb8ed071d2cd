import numpy as np
import pytest

from conftest import random_rotation
from rolo.back_end import _edge_block, _plane_block
from rolo.exceptions import NumericalFailure
from rolo.front_end import RankOneInformation, rotation_block, rotation_information, translation_blocks
from rolo.geometry import RigidTransform, geodesic_angle, is_rotation, so3_exp
from rolo.solver import (
    SE3,
    SO3,
    Euclidean,
    Method,
    ResidualBlock,
    SolverConfig,
    Termination,
    minimize,
    numeric_jacobian,
)


def test_zero_residual_start():
    block = ResidualBlock(lambda x: x - 1.0)
    x, rep = minimize([block], np.array([1.0]))
    assert rep.final_cost == 0.0 and rep.iterations <= 1 and rep.converged


def test_quadratic_gauss_newton():
    block = ResidualBlock(lambda x: x - 3.0)
    x, rep = minimize([block], np.array([0.0]), SolverConfig(method=Method.GAUSS_NEWTON))
    assert abs(x[0] - 3.0) < 1e-9 and rep.iterations <= 2


def point_pair_problem(rng, n=50, angle_deg=8.0):
    axis = rng.normal(size=3)
    R_true = so3_exp(axis / np.linalg.norm(axis) * np.radians(angle_deg))
    p = rng.normal(scale=5, size=(n, 3))
    q = p @ R_true.T
    return p, q, R_true


def test_rotation_fit_recovers_truth(rng):
    p, q, R_true = point_pair_problem(rng)
    block = ResidualBlock(lambda R: p @ R.T - q, information=np.eye(3))
    R, rep = minimize([block], np.eye(3))
    assert geodesic_angle(R, R_true) < 1e-6 and rep.converged


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(param_tolerance=0.0)


def test_information_must_be_psd():
    with pytest.raises(ValueError):
        ResidualBlock(lambda x: x, information=-np.eye(2))


def test_converged_implies_tolerance_termination(rng):
    p, q, _ = point_pair_problem(rng)
    _, rep = minimize([ResidualBlock(lambda R: p @ R.T - q)], np.eye(3), SolverConfig(max_iterations=2))
    if rep.converged:
        assert rep.termination in (Termination.PARAM_TOL, Termination.COST_TOL)
    else:
        assert rep.termination == Termination.MAX_ITER


def test_non_finite_initial_cost():
    with pytest.raises(NumericalFailure):
        minimize([ResidualBlock(lambda x: x * np.inf)], np.array([1.0]))


# -- Jacobians: analytic vs central differences at 100 random states ----------------

def _relative_gap(analytic, numeric):
    scale = max(np.abs(numeric).max(), 1e-12)
    return np.abs(analytic - numeric).max() / scale


def _check_block(block, states, manifold):
    worst = 0.0
    for x in states:
        J = block.jacobian_fn(x)
        J = np.asarray(J).reshape(numeric_jacobian(block.residuals, x, manifold).shape)
        worst = max(worst, _relative_gap(J, numeric_jacobian(block.residuals, x, manifold)))
    return worst


def _rotation_inputs(rng, m=40):
    pts = rng.normal(scale=6, size=(m, 3))
    means = pts + rng.normal(scale=0.3, size=(m, 3))
    covs = np.einsum("nij,nkj->nik", *(2 * [rng.normal(scale=0.1, size=(m, 3, 3))]))
    return pts, means, covs


@pytest.mark.parametrize("form", ["rank_one", "matrix"])
def test_rotation_jacobian(rng, form):
    pts, means, covs = _rotation_inputs(rng)
    info = rotation_information(covs, means, np.broadcast_to(4e-4 * np.eye(3), covs.shape), np.eye(3), 1e-3)
    block = rotation_block(pts, means, info if form == "rank_one" else info.matrices())
    states = [random_rotation(rng, 0.5) for _ in range(100)]
    assert _check_block(block, states, SO3()) < 1e-5


def test_rank_one_whitening_matches_matrix_cost(rng):
    pts, means, covs = _rotation_inputs(rng)
    info = rotation_information(covs, means, np.broadcast_to(4e-4 * np.eye(3), covs.shape), np.eye(3), 1e-3)
    R = random_rotation(rng, 0.2)
    a = rotation_block(pts, means, info).cost(R)
    b = rotation_block(pts, means, info.matrices()).cost(R)
    assert a == pytest.approx(b, rel=1e-9)


def test_translation_jacobians(rng):
    m = 30
    pts = rng.normal(scale=5, size=(m, 3))
    blocks = translation_blocks(pts, random_rotation(rng, 0.3), pts + 0.1, rng.integers(5, 40, m),
                                np.broadcast_to(np.eye(3), (m, 3, 3)), 0.5, rng.normal(size=3))
    assert len(blocks) == 2
    states = [rng.normal(size=3) for _ in range(100)]
    for b in blocks:
        assert _check_block(b, states, Euclidean(3)) < 1e-5


def test_submap_jacobians(rng):
    m = 25
    pts = rng.normal(scale=5, size=(m, 3))
    direction = rng.normal(size=(m, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    beta = rng.uniform(0.5, 2.0, m)
    states = [RigidTransform(random_rotation(rng, 0.3), rng.normal(size=3)) for _ in range(100)]
    for block in (_edge_block(pts, pts + 0.2, direction, beta), _plane_block(pts, pts + 0.2, direction, beta)):
        assert _check_block(block, states, SE3()) < 1e-5


# -- LM behaviour ----------------------------------------------------------------------

def _rosenbrock_like():
    return ResidualBlock(lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0], 0.3 * np.sin(3 * x[0])]))


def test_lm_cost_history_non_increasing():
    _, rep = minimize([_rosenbrock_like()], np.array([-1.2, 1.0]), SolverConfig(max_iterations=200))
    assert np.all(np.diff(rep.cost_history) <= 0)
    assert rep.final_cost <= rep.initial_cost


def test_rotation_iterates_stay_on_manifold(rng):
    p, q, _ = point_pair_problem(rng, angle_deg=40)
    seen = []
    minimize([ResidualBlock(lambda R: p @ R.T - q)], np.eye(3), callback=seen.append)
    assert seen and all(is_rotation(R, 1e-9) for R in seen)


@pytest.mark.parametrize("scale", [1e-3, 7.0, 1e4])
def test_argmin_invariant_to_information_scaling(rng, scale):
    p, q, _ = point_pair_problem(rng)
    q = q + rng.normal(scale=0.05, size=q.shape)
    W = np.einsum("nij,nkj->nik", *(2 * [rng.normal(size=(len(p), 3, 3))])) + 0.1 * np.eye(3)
    R1, _ = minimize([ResidualBlock(lambda R: p @ R.T - q, information=W)], np.eye(3))
    R2, _ = minimize([ResidualBlock(lambda R: p @ R.T - q, information=scale * W)], np.eye(3))
    assert geodesic_angle(R1, R2) < 1e-8


def test_covariance_weighting_equivalent_to_information(rng):
    cov = np.diag([0.5, 2.0])
    a = ResidualBlock(lambda x: x - [1.0, 2.0], covariance=cov)
    b = ResidualBlock(lambda x: x - [1.0, 2.0], information=np.linalg.inv(cov + 1e-6 * np.eye(2)))
    x = np.array([0.3, -0.4])
    assert a.cost(x) == pytest.approx(b.cost(x), rel=1e-12)


def test_rank_one_information_matches_inverse(rng):
    _, means, covs = _rotation_inputs(rng, 10)
    info = rotation_information(covs, means, np.broadcast_to(4e-4 * np.eye(3), covs.shape), np.eye(3), 1e-3)
    assert isinstance(info, RankOneInformation)
    assert np.all(np.linalg.eigvalsh(info.matrices()) > 0)
