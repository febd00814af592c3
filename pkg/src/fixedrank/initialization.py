"""Starting points for the Newton iteration.

Truncated-SVD starts for dense targets, a spectral start for masked data,
and optional factor perturbation. All of these build dense intermediates,
which is fine at the problem sizes this library targets.
"""

from __future__ import annotations

import numpy as np

from .exceptions import RankError
from .kernels import qr_positive
from .objectives import MaskedCompletion

__all__ = [
    "truncated_svd",
    "svd_initial_point",
    "spectral_initial_point",
]


def truncated_svd(target: np.ndarray, p: int):
    """Leading p singular triplets (u, s, vt) of a dense matrix.

    Raises RankError when the target has numerical rank below p, since no
    rank-p start can be formed from it.
    """
    target = np.asarray(target, dtype=float)
    u, s, vt = np.linalg.svd(target, full_matrices=False)
    if p < 1 or p > min(target.shape):
        raise ValueError(f"rank {p} out of range for shape {target.shape}")
    if s[p - 1] <= max(target.shape) * np.finfo(float).eps * max(s[0], 1.0):
        raise RankError(f"target has numerical rank below {p}")
    return u[:, :p], s[:p], vt[:p]


def svd_initial_point(geometry, target: np.ndarray, perturbation: float = 0.0,
                      rng: np.random.Generator | None = None):
    """Factor pair of the best rank-p approximation, optionally perturbed.

    The balanced geometry gets the symmetric split u*sqrt(s), v*sqrt(s); the
    orthonormal-factor geometry keeps u orthonormal and folds the singular
    values into v. A nonzero perturbation adds that much Gaussian noise per
    entry to both factors (re-orthonormalizing u where required), which is
    how starts near, but off, the minimizer are produced.
    """
    if perturbation < 0:
        raise ValueError("perturbation must be nonnegative")
    if perturbation > 0 and rng is None:
        raise ValueError("perturbation needs an rng")
    u, s, vt = truncated_svd(target, geometry.p)
    if geometry.name == "balanced":
        root = np.sqrt(s)
        left = u * root
        right = vt.T * root
    else:
        left = u
        right = vt.T * s
    if perturbation > 0:
        left = left + perturbation * rng.standard_normal(left.shape)
        right = right + perturbation * rng.standard_normal(right.shape)
        if geometry.name == "stiefel":
            left, r = qr_positive(left)
            right = right @ r.T
    return geometry.point(left, right)


def spectral_initial_point(geometry, oracle: MaskedCompletion,
                           perturbation: float = 0.0,
                           rng: np.random.Generator | None = None):
    """Truncated-SVD start from the zero-filled observed matrix.

    Observed entries are rescaled by the inverse sampling fraction so the
    filled matrix is an unbiased proxy for the full one.
    """
    m, n = oracle.shape
    dense = np.zeros((m, n))
    dense[oracle.rows, oracle.cols] = oracle.values
    dense /= oracle.mask_fraction
    return svd_initial_point(geometry, dense, perturbation=perturbation, rng=rng)
