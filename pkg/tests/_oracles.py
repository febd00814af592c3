"""Shared oracles for the geometry tests.

Everything here is implemented independently of the package internals (plain
numpy, no cached Cholesky factors, no shared kernels) so the tests compare
two separately written computations.
"""

import numpy as np

from fixedrank.factors import TangentPair


def reattach(pt, pair: TangentPair) -> TangentPair:
    """The same factor velocities considered at another base point."""
    return TangentPair(pt, pair.du, pair.dv, horizontal=pair.horizontal)


def scaled_metric_raw(u, v, a, b):
    """Reference implementation of the scaled factor metric from scratch."""
    gu = u.T @ u
    gv = v.T @ v
    return float(
        np.trace(np.linalg.solve(gu, a.du.T @ b.du))
        + np.trace(np.linalg.solve(gv, a.dv.T @ b.dv))
    )


def euclidean_metric_raw(a, b):
    return float(np.sum(a.du * b.du) + np.sum(a.dv * b.dv))


class QuadraticDistanceOracle:
    """Reference oracle for f(x) = 0.5 ||x - target||_F^2, written directly
    from the definition (forms the dense gradient every call)."""

    def __init__(self, target):
        self.target = np.array(target, dtype=float)

    def _grad(self, u, v):
        return u @ v.T - self.target

    def value(self, u, v):
        return 0.5 * float(np.linalg.norm(self._grad(u, v)) ** 2)

    def grad_right(self, u, v, w):
        return self._grad(u, v) @ w

    def grad_left(self, u, v, w):
        return self._grad(u, v).T @ w

    def hess_right(self, u, v, du, dv, w):
        return (du @ v.T + u @ dv.T) @ w

    def hess_left(self, u, v, du, dv, w):
        return (du @ v.T + u @ dv.T).T @ w


def fd_derivative(fun, t0: float = 0.0, step: float = 1e-6) -> float:
    """Central finite difference of a scalar function of one parameter."""
    return (fun(t0 + step) - fun(t0 - step)) / (2.0 * step)


def pair_distance(a: TangentPair, b: TangentPair) -> float:
    return float(
        np.linalg.norm(a.du - b.du) + np.linalg.norm(a.dv - b.dv)
    )


def pair_scale(a: TangentPair) -> float:
    return float(np.linalg.norm(a.du) + np.linalg.norm(a.dv) + 1e-300)


def horizontal_basis(geometry, pt, rng):
    """Metric-orthonormal basis of the horizontal space at pt, built from
    random horizontal vectors by Gram-Schmidt (two passes for stability)."""
    basis = []
    attempts = 0
    while len(basis) < geometry.dim:
        attempts += 1
        assert attempts < 20 * geometry.dim, "horizontal basis did not fill"
        cand = geometry.random_horizontal(pt, rng)
        for _ in range(2):
            for q in basis:
                cand = cand - geometry.metric(q, cand) * q
        nrm = geometry.norm(cand)
        if nrm > 1e-8:
            basis.append(cand * (1.0 / nrm))
    return basis


def dense_operator_matrix(geometry, operator, basis):
    """Gram matrix g(b_i, operator(b_j)) of a linear map on the span."""
    images = [operator(b) for b in basis]
    mat = np.empty((len(basis), len(basis)))
    for i, b in enumerate(basis):
        for j, img in enumerate(images):
            mat[i, j] = geometry.metric(b, img)
    return mat


def dense_newton_solve(geometry, pt, operator, rhs, rng):
    """Newton direction by explicit assembly on a horizontal basis and a
    dense linear solve. Same operator as the Krylov path, different solver."""
    basis = horizontal_basis(geometry, pt, rng)
    mat = dense_operator_matrix(geometry, operator, basis)
    vec = np.array([geometry.metric(b, rhs) for b in basis])
    coeff = np.linalg.solve(mat, vec)
    out = 0.0 * basis[0]
    for c, b in zip(coeff, basis):
        out = out + float(c) * b
    return out
