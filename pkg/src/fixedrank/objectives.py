"""Objective oracles on the ambient matrix space, evaluated through factors.

Every objective f acting on m x n matrices is consumed through a product
oracle: it never has to materialize the gradient G = grad f(u v^T) or the
Hessian as dense matrices. Instead it exposes products of G, G^T and of the
Hessian applied to a factored direction with skinny blocks, which is all the
geometry layer needs and keeps sparse objectives at O(observed * p) cost.
"""

from __future__ import annotations

import abc

import numpy as np
import scipy.sparse as sp

from .factors import TangentPair, VectorField
from .kernels import sym

__all__ = [
    "EuclideanOracle",
    "DenseApproximation",
    "MaskedCompletion",
    "gradient_field_balanced",
    "gradient_field_stiefel",
]


class EuclideanOracle(abc.ABC):
    """Product-form access to f, grad f and the Hessian of f at x = u v^T.

    The Hessian products take the factored direction (du, dv), standing for
    the ambient velocity du v^T + u dv^T, and apply the Hessian of f at u v^T
    to it before multiplying by the probe block w.
    """

    @abc.abstractmethod
    def value(self, u: np.ndarray, v: np.ndarray) -> float:
        """f(u v^T)."""

    @abc.abstractmethod
    def grad_right(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """grad f(u v^T) @ w for an n x k probe w."""

    @abc.abstractmethod
    def grad_left(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """grad f(u v^T)^T @ w for an m x k probe w."""

    @abc.abstractmethod
    def hess_right(self, u, v, du, dv, w) -> np.ndarray:
        """(Hess f(u v^T)[du v^T + u dv^T]) @ w."""

    @abc.abstractmethod
    def hess_left(self, u, v, du, dv, w) -> np.ndarray:
        """(Hess f(u v^T)[du v^T + u dv^T])^T @ w."""


class DenseApproximation(EuclideanOracle):
    """Least-squares distance to a dense target: f(x) = 0.5 ||x - a||_F^2.

    Gradient x - a, Hessian the identity map, so the Hessian products reduce
    to products with the direction itself.
    """

    def __init__(self, target):
        target = np.array(target, dtype=float)
        if target.ndim != 2:
            raise ValueError(f"target must be a matrix, got ndim={target.ndim}")
        target.flags.writeable = False
        self.target = target

    @property
    def shape(self) -> tuple[int, int]:
        return self.target.shape

    def value(self, u, v):
        return 0.5 * float(np.linalg.norm(u @ v.T - self.target) ** 2)

    def grad_right(self, u, v, w):
        return u @ (v.T @ w) - self.target @ w

    def grad_left(self, u, v, w):
        return v @ (u.T @ w) - self.target.T @ w

    def hess_right(self, u, v, du, dv, w):
        return du @ (v.T @ w) + u @ (dv.T @ w)

    def hess_left(self, u, v, du, dv, w):
        return dv @ (u.T @ w) + v @ (du.T @ w)


class MaskedCompletion(EuclideanOracle):
    """Least squares on an observed index set:
    f(x) = 0.5 * sum over observed (i, j) of (x_ij - value_ij)^2.

    Stores only the observation triples; every product costs
    O(observed * p), never O(m n). The gradient is the sparse residual
    matrix supported on the mask; the Hessian restricts a direction to the
    mask, so its products reuse the same sparse structure.
    """

    def __init__(self, rows, cols, values, shape):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        values = np.asarray(values, dtype=float)
        if rows.ndim != 1 or cols.ndim != 1 or values.ndim != 1:
            raise ValueError("rows, cols and values must be 1-d")
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError(
                f"length mismatch: {len(rows)} rows, {len(cols)} cols, "
                f"{len(values)} values"
            )
        if len(rows) == 0:
            raise ValueError("need at least one observed entry")
        if not np.issubdtype(rows.dtype, np.integer) or not np.issubdtype(
            cols.dtype, np.integer
        ):
            raise ValueError("rows and cols must be integer arrays")
        m, n = int(shape[0]), int(shape[1])
        if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
            raise ValueError(f"indices out of range for a {m} x {n} matrix")
        # sort row-major so the kept order matches CSR data order
        keys = rows.astype(np.int64) * n + cols.astype(np.int64)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if np.any(np.diff(keys) == 0):
            raise ValueError("duplicate observed indices")
        self.rows = np.ascontiguousarray(rows[order], dtype=np.int64)
        self.cols = np.ascontiguousarray(cols[order], dtype=np.int64)
        self.values = np.ascontiguousarray(values[order])
        self.shape = (m, n)
        self._pattern = sp.csr_matrix(
            (np.ones(len(self.rows)), (self.rows, self.cols)), shape=self.shape
        )

    @classmethod
    def from_matrix_with_nans(cls, x) -> "MaskedCompletion":
        """Build from a dense matrix whose unobserved entries are NaN."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ValueError("expected a matrix")
        rows, cols = np.nonzero(~np.isnan(x))
        if len(rows) == 0:
            raise ValueError("matrix has no observed entries")
        return cls(rows, cols, x[rows, cols], x.shape)

    @property
    def observed_count(self) -> int:
        return len(self.values)

    @property
    def mask_fraction(self) -> float:
        return self.observed_count / (self.shape[0] * self.shape[1])

    def _on_mask(self, u, v) -> np.ndarray:
        """Entries of u v^T on the observed index set."""
        return np.einsum("ij,ij->i", u[self.rows], v[self.cols])

    def _sparse(self, data: np.ndarray) -> sp.csr_matrix:
        out = self._pattern.copy()
        out.data = data
        return out

    def residuals(self, u, v) -> np.ndarray:
        """Observed-entry residuals of the current factors, in mask order."""
        return self._on_mask(u, v) - self.values

    def value(self, u, v):
        r = self.residuals(u, v)
        return 0.5 * float(r @ r)

    def grad_right(self, u, v, w):
        return self._sparse(self.residuals(u, v)) @ w

    def grad_left(self, u, v, w):
        return self._sparse(self.residuals(u, v)).T @ w

    def _direction_on_mask(self, u, v, du, dv) -> np.ndarray:
        return np.einsum("ij,ij->i", du[self.rows], v[self.cols]) + np.einsum(
            "ij,ij->i", u[self.rows], dv[self.cols]
        )

    def hess_right(self, u, v, du, dv, w):
        return self._sparse(self._direction_on_mask(u, v, du, dv)) @ w

    def hess_left(self, u, v, du, dv, w):
        return self._sparse(self._direction_on_mask(u, v, du, dv)).T @ w


def gradient_field_balanced(oracle: EuclideanOracle) -> VectorField:
    """Lifted-gradient vector field (G v gu, G^T u gv) for the scaled metric,
    with its exact coordinatewise derivative for Newton systems."""

    def value(pt) -> TangentPair:
        return TangentPair(
            pt,
            oracle.grad_right(pt.u, pt.v, pt.v) @ pt.gram_u,
            oracle.grad_left(pt.u, pt.v, pt.u) @ pt.gram_v,
            horizontal=True,
        )

    def derivative(pt, direction: TangentPair) -> TangentPair:
        u, v = pt.u, pt.v
        du, dv = direction.du, direction.dv
        d_gu = du.T @ u + u.T @ du
        d_gv = dv.T @ v + v.T @ dv
        d_right = oracle.hess_right(u, v, du, dv, v) + oracle.grad_right(u, v, dv)
        d_left = oracle.hess_left(u, v, du, dv, u) + oracle.grad_left(u, v, du)
        return TangentPair(
            pt,
            d_right @ pt.gram_u + oracle.grad_right(u, v, v) @ d_gu,
            d_left @ pt.gram_v + oracle.grad_left(u, v, u) @ d_gv,
        )

    return VectorField(value=value, derivative=derivative)


def gradient_field_stiefel(oracle: EuclideanOracle) -> VectorField:
    """Lifted-gradient field (c - u sym(u^T c), G^T u) with c = G v, with its
    exact coordinatewise derivative."""

    def value(pt) -> TangentPair:
        c = oracle.grad_right(pt.u, pt.v, pt.v)
        return TangentPair(
            pt,
            c - pt.u @ sym(pt.u.T @ c),
            oracle.grad_left(pt.u, pt.v, pt.u),
            horizontal=True,
        )

    def derivative(pt, direction: TangentPair) -> TangentPair:
        u, v = pt.u, pt.v
        du, dv = direction.du, direction.dv
        c = oracle.grad_right(u, v, v)
        dc = oracle.hess_right(u, v, du, dv, v) + oracle.grad_right(u, v, dv)
        return TangentPair(
            pt,
            dc - du @ sym(u.T @ c) - u @ sym(du.T @ c + u.T @ dc),
            oracle.hess_left(u, v, du, dv, u) + oracle.grad_left(u, v, du),
        )

    return VectorField(value=value, derivative=derivative)
