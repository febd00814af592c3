"""Shared containers for factor-space tangent vectors and vector fields.

A point of the rank-p manifold is represented by a factor pair (u, v) with
x = u @ v.T; tangent vectors of the factor (total) space are pairs of factor
velocities attached to a base point. Both geometries use the same container.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .exceptions import ContractError

__all__ = ["TangentPair", "VectorField", "constant_field", "zero_pair"]


@dataclass(frozen=True)
class TangentPair:
    """A tangent vector (du, dv) of the factor space at ``point``.

    ``horizontal`` is a cached certificate set by the geometry operations
    that construct provably horizontal vectors; consumers that require
    horizontality re-validate it cheaply at their boundary.
    """

    point: Any
    du: np.ndarray
    dv: np.ndarray
    horizontal: bool = False

    def __post_init__(self):
        du = np.asarray(self.du, dtype=float)
        dv = np.asarray(self.dv, dtype=float)
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "dv", dv)
        if du.shape != self.point.u.shape or dv.shape != self.point.v.shape:
            raise ContractError(
                f"tangent components {du.shape}/{dv.shape} do not match the "
                f"base point factors {self.point.u.shape}/{self.point.v.shape}"
            )

    def _require_same_base(self, other: "TangentPair") -> None:
        if self.point is not other.point:
            raise ContractError("tangent pairs have different base points")

    def __add__(self, other: "TangentPair") -> "TangentPair":
        self._require_same_base(other)
        return TangentPair(
            self.point,
            self.du + other.du,
            self.dv + other.dv,
            horizontal=self.horizontal and other.horizontal,
        )

    def __sub__(self, other: "TangentPair") -> "TangentPair":
        self._require_same_base(other)
        return TangentPair(
            self.point,
            self.du - other.du,
            self.dv - other.dv,
            horizontal=self.horizontal and other.horizontal,
        )

    def __neg__(self) -> "TangentPair":
        return TangentPair(self.point, -self.du, -self.dv, horizontal=self.horizontal)

    def __mul__(self, scalar: float) -> "TangentPair":
        scalar = float(scalar)
        return TangentPair(
            self.point, scalar * self.du, scalar * self.dv, horizontal=self.horizontal
        )

    __rmul__ = __mul__

    def euclidean_norm(self) -> float:
        """Frobenius norm of the stacked components (metric-agnostic)."""
        return float(np.sqrt(np.sum(self.du**2) + np.sum(self.dv**2)))


@dataclass(frozen=True)
class VectorField:
    """A tangent vector field given by its value and exact directional derivative.

    ``value(point)`` returns the field as a TangentPair at ``point``;
    ``derivative(point, direction)`` returns the plain coordinatewise
    directional derivative of the field's components along ``direction``
    (a TangentPair at the same point, no projection applied). The derivative
    must be linear in the direction.
    """

    value: Callable[[Any], TangentPair]
    derivative: Callable[[Any, TangentPair], TangentPair]


def zero_pair(point: Any, horizontal: bool = True) -> TangentPair:
    """The zero tangent vector at ``point`` (horizontal by convention)."""
    return TangentPair(
        point,
        np.zeros_like(point.u),
        np.zeros_like(point.v),
        horizontal=horizontal,
    )


def constant_field(pair: TangentPair) -> VectorField:
    """Field with constant components equal to ``pair`` everywhere.

    The value is re-attached to whatever point it is evaluated at, so the
    components must make sense there (same factor shapes).
    """

    def value(point: Any) -> TangentPair:
        return TangentPair(point, pair.du, pair.dv)

    def derivative(point: Any, direction: TangentPair) -> TangentPair:
        return zero_pair(point, horizontal=False)

    return VectorField(value=value, derivative=derivative)
