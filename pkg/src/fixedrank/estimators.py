"""Estimator facade over the Newton solver.

Two sklearn-style entry points: LowRankApproximator fits the best rank-p
factorization of a fully observed matrix, MatrixCompleter fits factors to
the non-NaN entries and imputes the rest. Both are thin wrappers over
``newton_run``; the geometry machinery stays in the library modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .initialization import spectral_initial_point, svd_initial_point
from .newton import NewtonConfig, newton_run
from .objectives import DenseApproximation, MaskedCompletion
from .validation import as_rng, check_dense_matrix, check_rank, make_geometry

__all__ = ["LowRankApproximator", "MatrixCompleter"]

INIT_NAMES = ("svd", "random")


def _newton_config(max_iter, grad_tol, warmstart, damped) -> NewtonConfig:
    return NewtonConfig(
        max_outer=max_iter,
        grad_tol=grad_tol,
        warmstart_steps=warmstart,
        step_policy="armijo-damped" if damped else "full-newton",
    )


def _store_result(est, result):
    est.left_factor_ = result.point.u
    est.right_factor_ = result.point.v
    est.result_ = result
    est.n_iter_ = result.iterations
    est.grad_norm_ = result.final_grad_norm
    est.converged_ = result.converged
    return est


class LowRankApproximator(BaseEstimator):
    """Best rank-p approximation of a dense matrix by Riemannian Newton.

    Parameters mirror the solver configuration; ``init`` picks the starting
    point ("svd" for the truncated SVD perturbed by ``perturbation``,
    "random" for a random full-rank pair). After ``fit`` the factors are in
    ``left_factor_`` / ``right_factor_`` and ``reconstruct()`` returns their
    product.
    """

    def __init__(self, rank=2, geometry="balanced", init="svd",
                 perturbation=0.0, max_iter=50, grad_tol=1e-12,
                 warmstart=0, damped=False, random_state=None):
        self.rank = rank
        self.geometry = geometry
        self.init = init
        self.perturbation = perturbation
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.warmstart = warmstart
        self.damped = damped
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_dense_matrix(X)
        rank = check_rank(self.rank, X.shape)
        geo = make_geometry(self.geometry, X.shape[0], X.shape[1], rank)
        rng = as_rng(self.random_state)
        if self.init == "svd":
            start = svd_initial_point(
                geo, X, perturbation=self.perturbation, rng=rng
            )
        elif self.init == "random":
            start = geo.random_point(rng)
        else:
            raise ValueError(f"init must be one of {INIT_NAMES}, got {self.init!r}")
        config = _newton_config(
            self.max_iter, self.grad_tol, self.warmstart, self.damped
        )
        result = newton_run(geo, start, DenseApproximation(X), config)
        return _store_result(self, result)

    def reconstruct(self) -> np.ndarray:
        """The fitted rank-p matrix."""
        if not hasattr(self, "left_factor_"):
            raise NotFittedError("call fit first")
        return self.left_factor_ @ self.right_factor_.T

    def score(self, X, y=None) -> float:
        """Negative squared Frobenius distance (higher is better)."""
        X = check_dense_matrix(X)
        return -float(np.linalg.norm(self.reconstruct() - X) ** 2)


class MatrixCompleter(BaseEstimator, TransformerMixin):
    """Rank-p completion of a partially observed matrix.

    NaN entries of the fitted matrix mark the unobserved positions. The
    default configuration warm-starts with gradient steps from a spectral
    initialization, then runs Newton. ``transform`` fills the NaN positions
    of its input from the fitted model and leaves observed values as given.
    """

    def __init__(self, rank=2, geometry="balanced", perturbation=0.0,
                 max_iter=50, grad_tol=1e-10, warmstart=10, damped=False,
                 random_state=None):
        self.rank = rank
        self.geometry = geometry
        self.perturbation = perturbation
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.warmstart = warmstart
        self.damped = damped
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_dense_matrix(X, allow_nan=True)
        rank = check_rank(self.rank, X.shape)
        oracle = MaskedCompletion.from_matrix_with_nans(X)
        geo = make_geometry(self.geometry, X.shape[0], X.shape[1], rank)
        rng = as_rng(self.random_state)
        start = spectral_initial_point(
            geo, oracle, perturbation=self.perturbation, rng=rng
        )
        config = _newton_config(
            self.max_iter, self.grad_tol, self.warmstart, self.damped
        )
        result = newton_run(geo, start, oracle, config)
        self.shape_ = X.shape
        return _store_result(self, result)

    def transform(self, X) -> np.ndarray:
        """Copy of X with every NaN replaced by the fitted model's value."""
        if not hasattr(self, "left_factor_"):
            raise NotFittedError("call fit first")
        X = check_dense_matrix(X, allow_nan=True)
        if X.shape != self.shape_:
            raise ValueError(
                f"transform input shape {X.shape} differs from fitted "
                f"shape {self.shape_}"
            )
        filled = X.copy()
        missing = np.isnan(filled)
        model = self.left_factor_ @ self.right_factor_.T
        filled[missing] = model[missing]
        return filled
