"""Gauss-Newton / Levenberg-Marquardt over rotation, translation and pose variables.

Every residual block contributes ``r^T W r`` to the cost, where ``W`` is
the block's information matrix. Rotations are updated on the manifold with
left-multiplied axis-angle increments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from rolo._validation import check_int, check_positive, symmetrize
from rolo.exceptions import NumericalFailure
from rolo.geometry import RigidTransform, orthonormalize, so3_exp

INFORMATION_FLOOR = 1e-6


class Method(str, enum.Enum):
    GAUSS_NEWTON = "GaussNewton"
    LEVENBERG_MARQUARDT = "LevenbergMarquardt"


class Termination(str, enum.Enum):
    PARAM_TOL = "ParamTol"
    COST_TOL = "CostTol"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverConfig:
    max_iterations: int = 50
    param_tolerance: float = 1e-8
    cost_tolerance: float = 1e-10
    method: Method = Method.LEVENBERG_MARQUARDT
    lm_initial_damping: float = 1e-4

    def __post_init__(self):
        check_int(self.max_iterations, "max_iterations", 1)
        check_positive(self.param_tolerance, "param_tolerance")
        check_positive(self.cost_tolerance, "cost_tolerance")
        check_positive(self.lm_initial_damping, "lm_initial_damping")
        self.method = Method(self.method)


@dataclass
class SolveReport:
    final_cost: float
    iterations: int
    converged: bool
    termination: Termination
    initial_cost: float = float("nan")
    cost_history: list = field(default_factory=list)


# -- manifolds ---------------------------------------------------------------

class Euclidean:
    def __init__(self, dim):
        self.dim = int(dim)

    def retract(self, x, delta):
        return np.asarray(x, dtype=float) + delta


class SO3:
    dim = 3

    def retract(self, R, delta):
        return so3_exp(delta) @ R


class SE3:
    """Pose with ``delta = (omega, v)``: ``R <- exp(omega) R``, ``t <- t + v``."""

    dim = 6

    def retract(self, T, delta):
        return RigidTransform(so3_exp(delta[:3]) @ T.rotation, T.translation + delta[3:])


class PoseSet:
    """A list of poses; entries flagged in ``fixed`` are held constant."""

    def __init__(self, n, fixed=(0,)):
        self.n = int(n)
        self.fixed = frozenset(fixed)
        self.free = [i for i in range(self.n) if i not in self.fixed]
        self.slot = {node: j for j, node in enumerate(self.free)}
        self.dim = 6 * len(self.free)

    def retract(self, poses, delta):
        out = list(poses)
        if len(self.free) == 0:
            return out
        d = np.asarray(delta).reshape(-1, 6)
        Rs = so3_exp(d[:, :3])
        for j, i in enumerate(self.free):
            T = poses[i]
            out[i] = RigidTransform(Rs[j] @ T.rotation, T.translation + d[j, 3:])
        return out


def infer_manifold(x):
    if isinstance(x, RigidTransform):
        return SE3()
    arr = np.asarray(x)
    if arr.shape == (3, 3):
        return SO3()
    return Euclidean(arr.size)


# -- residual blocks -----------------------------------------------------------

class ResidualBlock:
    """A stack of ``m`` residual terms of size ``k`` sharing one function.

    ``residual_fn(x)`` returns shape (m, k) (or (k,) for a single term).
    Weighting is given either as ``information`` (used as is after
    symmetrization) or as ``covariance`` (symmetrized, floored by
    ``1e-6 I`` and inverted). ``jacobian_fn(x)``, when given, returns
    (m, k, dim) or a sparse (m*k, dim) matrix; otherwise central finite
    differences on the manifold are used.
    """

    def __init__(self, residual_fn: Callable, information=None, covariance=None,
                 jacobian_fn: Optional[Callable] = None, fd_step=1e-6):
        if information is not None and covariance is not None:
            raise ValueError("give information or covariance, not both")
        self.residual_fn = residual_fn
        self.jacobian_fn = jacobian_fn
        self.fd_step = fd_step
        if covariance is not None:
            cov = symmetrize(covariance)
            cov = cov + INFORMATION_FLOOR * np.eye(cov.shape[-1])
            information = np.linalg.inv(cov)
            information = symmetrize(information)
        elif information is not None:
            information = symmetrize(information)
        if information is not None and information.ndim == 2:
            eig = np.linalg.eigvalsh(information)
            if eig.min() < -1e-9 * max(1.0, abs(eig.max())):
                raise ValueError("information matrix must be positive semi-definite")
        self.information = information

    def residuals(self, x):
        r = np.asarray(self.residual_fn(x), dtype=float)
        return r.reshape(1, -1) if r.ndim == 1 else r

    def weights(self, m, k):
        if self.information is None:
            return None
        W = np.asarray(self.information)
        if W.ndim == 2:
            return np.broadcast_to(W, (m, k, k))
        return W

    def cost(self, x):
        r = self.residuals(x)
        W = self.weights(*r.shape)
        if W is None:
            return float(np.sum(r * r))
        return float(np.sum(r * np.matmul(W, r[:, :, None])[:, :, 0]))

    def jacobian(self, x, manifold):
        if self.jacobian_fn is not None:
            J = self.jacobian_fn(x)
            if sp.issparse(J):
                return J
            J = np.asarray(J, dtype=float)
            return J.reshape(J.shape[0], -1, manifold.dim) if J.ndim == 3 else J.reshape(1, -1, manifold.dim)
        return numeric_jacobian(self.residuals, x, manifold, self.fd_step)


def numeric_jacobian(fn, x, manifold, step=1e-6):
    """Central differences of ``fn`` along each manifold direction."""
    r0 = fn(x)
    J = np.zeros(r0.shape + (manifold.dim,))
    e = np.zeros(manifold.dim)
    for j in range(manifold.dim):
        e[j] = step
        rp = fn(manifold.retract(x, e))
        e[j] = -step
        rm = fn(manifold.retract(x, e))
        e[j] = 0.0
        J[..., j] = (rp - rm) / (2 * step)
    return J


def _linearize(blocks, x, manifold):
    d = manifold.dim
    use_sparse = False
    dense_H = np.zeros((d, d))
    g = np.zeros(d)
    sparse_H = None
    cost = 0.0
    for b in blocks:
        r = b.residuals(x)
        m, k = r.shape
        if m == 0:
            continue
        W = b.weights(m, k)
        J = b.jacobian(x, manifold)
        if sp.issparse(J):
            use_sparse = True
            rf = r.reshape(-1)
            if W is None:
                Wm = sp.identity(m * k, format="csr")
            else:
                Wm = sp.block_diag(list(W), format="csr")
            JW = J.T @ Wm
            H_b = (JW @ J).tocsr()
            sparse_H = H_b if sparse_H is None else sparse_H + H_b
            g += JW @ rf
            cost += float(rf @ (Wm @ rf))
            continue
        Jf = J.reshape(m * k, d)
        if W is None:
            Wr = r
            dense_H += Jf.T @ Jf
        else:
            Wr = np.matmul(W, r[:, :, None])[:, :, 0]
            dense_H += Jf.T @ np.matmul(W, J).reshape(m * k, d)
        g += Jf.T @ Wr.reshape(-1)
        cost += float(np.sum(r * Wr))
    if use_sparse:
        H = sparse_H + sp.csr_matrix(dense_H) if np.any(dense_H) else sparse_H
        return H, g, cost
    return dense_H, g, cost


def _total_cost(blocks, x):
    return float(sum(b.cost(x) for b in blocks))


def _solve(H, g, mu):
    diag = H.diagonal() if sp.issparse(H) else np.diag(H)
    scale = max(float(np.max(diag)) if diag.size else 0.0, 1e-300)
    D = np.maximum(diag, 1e-12 * scale)
    if sp.issparse(H):
        A = (H + sp.diags(mu * D)).tocsc()
        delta = spla.spsolve(A, -g)
    else:
        A = H + np.diag(mu * D)
        try:
            delta = np.linalg.solve(A, -g)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(A, -g, rcond=None)[0]
    return np.asarray(delta, dtype=float)


def _renormalize(x):
    if isinstance(x, RigidTransform):
        return RigidTransform(orthonormalize(x.rotation), x.translation)
    if isinstance(x, list):
        return [_renormalize(p) for p in x]
    arr = np.asarray(x)
    if arr.shape == (3, 3):
        return orthonormalize(arr)
    return x


def minimize(blocks, initial, cfg: SolverConfig | None = None, manifold=None, callback=None):
    """Minimize ``sum_b r_b^T W_b r_b`` starting at ``initial``.

    Returns ``(x, SolveReport)``. Levenberg-Marquardt accepts only steps that
    do not increase the cost; Gauss-Newton stops with ``NumericalFailure``
    when a full step increases it. In both cases the returned variable has
    cost no larger than the initial one.
    """
    cfg = cfg or SolverConfig()
    manifold = manifold or infer_manifold(initial)
    blocks = list(blocks)
    x = initial
    cost = _total_cost(blocks, x)
    initial_cost = cost
    history = [cost]
    lm = cfg.method == Method.LEVENBERG_MARQUARDT
    mu = cfg.lm_initial_damping if lm else 0.0
    termination = Termination.MAX_ITER
    iterations = 0
    if not np.isfinite(cost):
        raise NumericalFailure("initial cost is not finite")
    if manifold.dim == 0 or cost == 0.0:
        return x, SolveReport(cost, 0, True, Termination.COST_TOL, initial_cost, history)

    for iterations in range(1, cfg.max_iterations + 1):
        H, g, cost = _linearize(blocks, x, manifold)
        if not np.all(np.isfinite(g)):
            termination = Termination.NUMERICAL_FAILURE
            break
        if not np.any(g):
            termination = Termination.PARAM_TOL
            break
        accepted = False
        while True:
            delta = _solve(H, g, mu)
            if not np.all(np.isfinite(delta)):
                new_cost = np.inf
            else:
                x_new = manifold.retract(x, delta)
                new_cost = _total_cost(blocks, x_new)
            if new_cost <= cost:
                accepted = True
                break
            if not lm:
                break
            mu *= 10.0
            if mu > 1e12:
                break
        if not accepted:
            if lm and np.all(np.isfinite(delta)):
                # no descent direction left at machine precision: a minimum
                termination = Termination.COST_TOL
            else:
                termination = Termination.NUMERICAL_FAILURE
            break
        step = float(np.linalg.norm(delta))
        decrease = cost - new_cost
        x = x_new
        if iterations % 20 == 0:
            x = _renormalize(x)
        cost = new_cost
        history.append(cost)
        if lm:
            mu = max(mu / 10.0, 1e-15)
        if callback is not None:
            callback(x)
        if step < cfg.param_tolerance:
            termination = Termination.PARAM_TOL
            break
        if cost == 0.0 or decrease <= cfg.cost_tolerance * max(cost, 1e-300):
            termination = Termination.COST_TOL
            break
    converged = termination in (Termination.PARAM_TOL, Termination.COST_TOL)
    return x, SolveReport(cost, iterations, converged, termination, initial_cost, history)
