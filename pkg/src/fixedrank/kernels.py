"""Small dense matrix kernels used by the factor geometries.

Everything here operates on matrices of fiber size (p x p or 2p x 2p), so
robust dense algorithms are preferred over asymptotically faster ones.
"""

from __future__ import annotations

import numpy as np

from .exceptions import RankError, SylvesterError

__all__ = ["sym", "skew", "sylvester_solve", "matrix_exp", "qr_positive"]


def _require_square(z: np.ndarray, name: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {z.shape}")
    return z


def sym(z: np.ndarray) -> np.ndarray:
    """Symmetric part (z + z^T) / 2 of a square matrix."""
    z = _require_square(z, "z")
    return 0.5 * (z + z.T)


def skew(z: np.ndarray) -> np.ndarray:
    """Skew-symmetric part (z - z^T) / 2 of a square matrix."""
    z = _require_square(z, "z")
    return 0.5 * (z - z.T)


#: Condition number of the vectorized Sylvester system above which the solve
#: is refused instead of returning garbage.
SYLVESTER_COND_MAX = 1e12


def sylvester_solve(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve the Sylvester equation ``a @ k + k @ b = c`` for ``k``.

    Parameters
    ----------
    a : ndarray, shape (p, p)
    b : ndarray, shape (q, q)
    c : ndarray, shape (p, q)

    Returns
    -------
    k : ndarray, shape (p, q)

    Raises
    ------
    SylvesterError
        If the vectorized system is singular or its condition number exceeds
        ``SYLVESTER_COND_MAX`` (spectra of ``a`` and ``-b`` overlap, or nearly
        so). The estimate is attached to the exception.

    Notes
    -----
    Solved by dense vectorization: with column-major vec,
    ``(I (x) a + b^T (x) I) vec(k) = vec(c)``. Fiber sizes are tiny, so the
    O(p^3 q^3) dense solve is the simplest robust choice.
    """
    a = _require_square(a, "a")
    b = _require_square(b, "b")
    c = np.asarray(c, dtype=float)
    p, q = a.shape[0], b.shape[0]
    if c.shape != (p, q):
        raise ValueError(f"c must have shape {(p, q)}, got {c.shape}")

    lhs = np.kron(np.eye(q), a) + np.kron(b.T, np.eye(p))
    condition = np.linalg.cond(lhs)
    if not np.isfinite(condition) or condition > SYLVESTER_COND_MAX:
        raise SylvesterError(
            "Sylvester unsolvable: spectra of a and -b overlap "
            f"(condition estimate {condition:.3e})",
            condition=condition,
        )
    vec_k = np.linalg.solve(lhs, c.ravel(order="F"))
    return vec_k.reshape((p, q), order="F")


# Pade-13 numerator coefficients; theta is the standard double precision
# switching radius for the degree 13 approximant.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_PADE13_THETA = 5.371920351148152


def matrix_exp(z: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a fixed Pade-13 kernel.

    Intended for the small (at most 2p x 2p) blocks arising in geodesic
    formulas; accurate to near machine precision for moderate norms.
    """
    z = _require_square(z, "z")
    p = z.shape[0]
    if p == 0:
        return np.zeros((0, 0))

    norm = np.linalg.norm(z, 1)
    if norm == 0.0:
        return np.eye(p)
    n_squarings = 0
    if norm > _PADE13_THETA:
        n_squarings = int(np.ceil(np.log2(norm / _PADE13_THETA)))
        z = z / (2.0**n_squarings)

    b = _PADE13
    ident = np.eye(p)
    z2 = z @ z
    z4 = z2 @ z2
    z6 = z2 @ z4
    u = z @ (
        z6 @ (b[13] * z6 + b[11] * z4 + b[9] * z2)
        + b[7] * z6
        + b[5] * z4
        + b[3] * z2
        + b[1] * ident
    )
    v = (
        z6 @ (b[12] * z6 + b[10] * z4 + b[8] * z2)
        + b[6] * z6
        + b[4] * z4
        + b[2] * z2
        + b[0] * ident
    )
    result = np.linalg.solve(v - u, v + u)
    for _ in range(n_squarings):
        result = result @ result
    return result


#: Relative floor under which a diagonal entry of R flags rank deficiency.
QR_RANK_TOL = 1e-12


def qr_positive(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization with a strictly positive diagonal of R.

    Returns ``(q, r)`` with ``a = q @ r``, ``q`` having orthonormal columns
    and ``r`` upper triangular with positive diagonal, which makes the
    factorization unique. Raises RankError when a diagonal entry of R falls
    below ``QR_RANK_TOL * ||a||_F`` (numerically rank-deficient input).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise ValueError(f"expected a tall matrix, got shape {a.shape}")
    q, r = np.linalg.qr(a)
    scale = np.linalg.norm(a)
    diag = np.abs(np.diag(r))
    if scale == 0.0 or np.min(diag) < QR_RANK_TOL * scale:
        raise RankError(
            "rank-deficient input to qr_positive "
            f"(min |r_ii| = {0.0 if scale == 0 else np.min(diag):.3e})"
        )
    signs = np.sign(np.diag(r))
    return q * signs, signs[:, None] * r
