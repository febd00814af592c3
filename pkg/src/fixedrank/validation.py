"""Input checking shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .balanced import BalancedGeometry
from .stiefel import StiefelGeometry

__all__ = [
    "GEOMETRY_NAMES",
    "as_rng",
    "check_dense_matrix",
    "check_rank",
    "make_geometry",
]

GEOMETRY_NAMES = ("balanced", "stiefel")


def check_dense_matrix(x, allow_nan: bool = False) -> np.ndarray:
    """A float copy of a nonempty 2-d matrix; NaN marks a missing entry only
    when allow_nan is set, infinities are never allowed."""
    x = np.array(x, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"need a nonempty 2-d matrix, got shape {x.shape}")
    if np.any(np.isinf(x)):
        raise ValueError("matrix entries must be finite")
    if not allow_nan and np.any(np.isnan(x)):
        raise ValueError("matrix entries must not be NaN")
    return x


def check_rank(rank, shape) -> int:
    rank = int(rank)
    if not 1 <= rank <= min(shape):
        raise ValueError(
            f"rank must satisfy 1 <= rank <= min{tuple(shape)}, got {rank}"
        )
    return rank


def make_geometry(name: str, m: int, n: int, p: int):
    """Geometry factory keyed by the public names."""
    if name == "balanced":
        return BalancedGeometry(m, n, p)
    if name == "stiefel":
        return StiefelGeometry(m, n, p)
    raise ValueError(f"geometry must be one of {GEOMETRY_NAMES}, got {name!r}")


def as_rng(random_state) -> np.random.Generator:
    """A numpy Generator from None, an integer seed, or a Generator."""
    if random_state is None:
        return np.random.default_rng()
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(int(random_state))
    raise TypeError(
        f"random_state must be None, an int, or a numpy Generator, "
        f"got {type(random_state).__name__}"
    )
