"""Poisson solves on a mesh and the negative-curvature preconditioning step."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..errors import NoConvergence, NonHyperbolic, TriangleInequalityViolation
from .metric import CurvatureField, cotan_laplacian, curvature

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoissonInfo:
    iterations: int
    residual: float  # A-weighted ||L f - rhs|| / ||rhs||
    projection: float  # A-weighted mean removed from rhs


def weighted_mean(f, A):
    return float(np.dot(f, A) / A.sum())


def weighted_norm(f, A):
    return float(np.sqrt(np.dot(A, f * f)))


def poisson_solve(L, A, rhs, tol=1e-10, maxiter=None, full_output=False):
    """Solve ``L f = rhs`` for the A-weighted mean-zero ``f``.

    ``L = diag(1/A) W`` with W symmetric, so the system is solved as
    ``-W f = -A * rhs`` by Jacobi-preconditioned conjugate gradients. The
    A-weighted mean of ``rhs`` is removed first (the compatibility condition);
    its size is reported in the info record when ``full_output`` is set.
    Stops once ``||L f - rhs||_A <= tol * ||rhs||_A``.
    """
    A = np.asarray(A, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = len(A)
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    projection = weighted_mean(rhs, A)
    if abs(projection) > tol * max(1.0, np.abs(rhs).max()):
        logger.debug("poisson rhs not mean-zero; projecting out %.3e", projection)
    rhs = rhs - projection

    K = -(sparse.diags(A) @ sparse.csr_matrix(L))
    K = 0.5 * (K + K.T)  # exact symmetry; L is symmetric in the A inner product
    b = -A * rhs
    target = tol * weighted_norm(rhs, A)

    f = np.zeros(n)
    res = b.copy()

    def res_norm(r):
        return float(np.sqrt(np.dot(r, r / A)))

    if res_norm(res) <= target or target == 0.0:
        out = np.zeros(n)
        info = PoissonInfo(0, 0.0, projection)
        return (out, info) if full_output else out

    dinv = 1.0 / K.diagonal()
    z = dinv * res
    p = z.copy()
    rz = np.dot(res, z)
    it = 0
    while it < maxiter:
        it += 1
        Kp = K @ p
        alpha = rz / np.dot(p, Kp)
        f += alpha * p
        res -= alpha * Kp
        if res_norm(res) <= target:
            break
        z = dinv * res
        rz_new = np.dot(res, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    # true residual, not the recursively updated one
    true_res = res_norm(b - K @ f)
    if true_res > target * 10:
        raise NoConvergence(
            f"conjugate gradients stopped after {it} iterations with residual {true_res:.3e}",
            residual=true_res,
        )
    f -= weighted_mean(f, A)
    info = PoissonInfo(it, true_res / weighted_norm(rhs, A), projection)
    return (f, info) if full_output else f


def _line_search(mesh, u, w, max_halvings):
    best = None
    step = 1.0
    for _ in range(max_halvings + 1):
        try:
            cf = curvature(mesh, u + step * w)
        except TriangleInequalityViolation:
            step *= 0.5
            continue
        if cf.R.max() < 0:
            return u + step * w, cf
        if best is None or cf.R.max() < best[1].R.max():
            best = (u + step * w, cf)
        step *= 0.5
    if best is None:
        raise NoConvergence("correction breaks the triangle inequality even after damping")
    return best


@dataclass(frozen=True)
class Preconditioned:
    u: np.ndarray
    c: float
    iterations: int
    correction_norm: float  # max-norm of u_out - u_in
    before: CurvatureField
    after: CurvatureField


def precondition_negative(mesh, u0=None, tol=1e-10, max_iter=10, max_halvings=20):
    """Conformally change ``e^{u0} g0`` to a metric with negative curvature at every vertex.

    Each correction solves ``L w = R - c`` on the current metric with
    ``c = 4 pi chi / area`` and moves to ``u + w``; in the smooth setting the
    new curvature is ``c e^{-w} < 0``. Corrections repeat until every vertex
    is strictly negative. Within one correction the step ``u + s w`` is
    backtracked over ``s = 1, 1/2, 1/4, ...``: the first step that makes every
    vertex negative is taken, otherwise the valid step with the smallest
    maximum curvature.
    Inputs that are already strictly negative are returned unchanged.
    """
    chi = mesh.euler_characteristic
    if chi >= 0:
        raise NonHyperbolic(f"Euler characteristic {chi} >= 0 admits no negatively curved metric")
    u_in = np.zeros(mesh.n_vertices) if u0 is None else np.asarray(u0, dtype=np.float64).copy()
    u = u_in.copy()
    before = cf = curvature(mesh, u)
    c = 4.0 * np.pi * chi / cf.total_area
    it = 0
    while cf.R.max() >= 0:
        if it == max_iter:
            worst = int(np.argmax(cf.R))
            raise NoConvergence(
                f"curvature still non-negative after {it} corrections (vertex {worst}, R = {cf.R[worst]:.3e})",
                worst_vertex=worst,
            )
        it += 1
        c = 4.0 * np.pi * chi / cf.total_area
        w = poisson_solve(cotan_laplacian(mesh, u), cf.area, cf.R - c, tol)
        u, cf = _line_search(mesh, u, w, max_halvings)
        logger.debug("precondition pass %d: R in [%.4g, %.4g]", it, cf.R_min, cf.R_max)
    return Preconditioned(
        u=u,
        c=float(c),
        iterations=it,
        correction_norm=float(np.abs(u - u_in).max()),
        before=before,
        after=cf,
    )
