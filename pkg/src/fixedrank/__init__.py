"""Riemannian Newton solvers on the manifold of fixed-rank matrices.

Rank-p matrices are represented as products M @ N.T of two tall factor
matrices, and optimization runs on the quotient of factor space by the
group of parametrization changes. Two geometries are provided: "balanced"
(invertible gauge group, a metric weighted by the factor Gram matrices)
and "stiefel" (orthonormal left factor, Euclidean metric, closed-form
geodesics). On top of either geometry, `newton_run` solves smooth
objectives given through factored Euclidean derivatives, with dense
approximation and entry-wise completion objectives built in.

The `fixedrank` console script exposes the same machinery as the
`verify`, `approx`, `complete` and `bench` subcommands.
"""

from .balanced import BalancedGeometry, BalancedPoint
from .estimators import LowRankApproximator, MatrixCompleter
from .exceptions import (
    ContractError,
    FixedRankError,
    GaugeError,
    MatrixMarketError,
    RankError,
    SolverFailure,
    SylvesterError,
    TangencyError,
)
from .factors import TangentPair, VectorField, constant_field, zero_pair
from .initialization import (
    spectral_initial_point,
    svd_initial_point,
    truncated_svd,
)
from .mmio import (
    load_matrixmarket,
    read_coordinate,
    read_dense,
    write_coordinate,
    write_dense,
)
from .newton import (
    IterationRecord,
    NewtonConfig,
    NewtonResult,
    gradient_field_for,
    krylov_solve,
    newton_operator,
    newton_run,
)
from .objectives import DenseApproximation, EuclideanOracle, MaskedCompletion
from .stiefel import StiefelGeometry, StiefelPoint
from .validation import GEOMETRY_NAMES, make_geometry

__version__ = "0.1.0"

__all__ = [
    "BalancedGeometry",
    "BalancedPoint",
    "ContractError",
    "DenseApproximation",
    "EuclideanOracle",
    "FixedRankError",
    "GEOMETRY_NAMES",
    "GaugeError",
    "IterationRecord",
    "LowRankApproximator",
    "MaskedCompletion",
    "MatrixCompleter",
    "MatrixMarketError",
    "NewtonConfig",
    "NewtonResult",
    "RankError",
    "SolverFailure",
    "StiefelGeometry",
    "StiefelPoint",
    "SylvesterError",
    "TangencyError",
    "TangentPair",
    "VectorField",
    "constant_field",
    "gradient_field_for",
    "krylov_solve",
    "load_matrixmarket",
    "make_geometry",
    "newton_operator",
    "newton_run",
    "read_coordinate",
    "read_dense",
    "spectral_initial_point",
    "svd_initial_point",
    "truncated_svd",
    "write_coordinate",
    "write_dense",
    "zero_pair",
    "__version__",
]
