"""Riemannian Newton iteration on the rank-p manifold, for both geometries.

The Newton equation is posed on the horizontal space at the current factor
pair: find horizontal xi with

    P_h( nabla_xi grad ) = -grad,

where grad is the horizontal lift of the Riemannian gradient and nabla the
quotient connection. The left-hand side is applied matrix-free and the
system solved by a Krylov method whose inner products are taken in the
geometry's own metric. Moving to the next iterate uses the geometry's
``move`` (factored retraction or quotient geodesic).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import RankError, SolverFailure
from .factors import TangentPair, VectorField, zero_pair
from .objectives import (
    EuclideanOracle,
    gradient_field_balanced,
    gradient_field_stiefel,
)

__all__ = [
    "NewtonConfig",
    "IterationRecord",
    "NewtonResult",
    "newton_operator",
    "krylov_solve",
    "gradient_step",
    "newton_run",
]

STEP_POLICIES = ("full-newton", "armijo-damped")

#: Relative basis-vector norm below which the Krylov space is invariant.
BREAKDOWN_TOL = 1e-14

#: Multiple of (machine epsilon x operator scale) under which a residual is
#: numerically indistinguishable from zero. Near a minimizer the right-hand
#: side is itself computed with cancellation, so its direction is only
#: accurate to about eps x data-scale / ||rhs||; demanding a relative
#: residual below that would fail every solve that is in fact exact to
#: working precision.
KRYLOV_FLOOR_FACTOR = 256.0


@dataclass
class NewtonConfig:
    """Knobs of the outer iteration.

    The defaults run the pure undamped Newton method; warm starting and
    Armijo damping are opt-in. ``krylov_tol`` caps the relative forcing term
    min(krylov_tol, grad_norm) that keeps the inner solves loose far from
    the solution and tight near it.
    """

    max_outer: int = 50
    grad_tol: float = 1e-12
    krylov_tol: float = 1e-2
    krylov_max: int | None = None
    warmstart_steps: int = 0
    step_policy: str = "full-newton"
    armijo_c1: float = 1e-4
    armijo_backtrack: float = 0.5
    armijo_max_backtracks: int = 40

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.grad_tol <= 0 or self.krylov_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.krylov_max is not None and self.krylov_max < 1:
            raise ValueError("krylov_max must be at least 1")
        if self.warmstart_steps < 0:
            raise ValueError("warmstart_steps must be nonnegative")
        if self.step_policy not in STEP_POLICIES:
            raise ValueError(
                f"step_policy must be one of {STEP_POLICIES}, "
                f"got {self.step_policy!r}"
            )
        if not (0 < self.armijo_backtrack < 1) or self.armijo_c1 <= 0:
            raise ValueError("bad Armijo parameters")


@dataclass(frozen=True)
class IterationRecord:
    """State of one iterate plus the work of the step that produced it.

    Row 0 describes the starting point and carries zero step columns.
    """

    index: int
    f_value: float
    grad_norm: float
    step_norm: float
    krylov_iterations: int
    newton_residual: float
    wall_time: float


@dataclass(frozen=True)
class NewtonResult:
    point: object
    records: Sequence[IterationRecord]
    status: str
    # one point per record when the run was asked to keep them, else None
    points: Sequence[object] | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_grad_norm(self) -> float:
        return self.records[-1].grad_norm

    @property
    def iterations(self) -> int:
        return self.records[-1].index


def gradient_field_for(geometry, oracle: EuclideanOracle) -> VectorField:
    """The lifted-gradient field matching the geometry's metric."""
    if geometry.name == "balanced":
        return gradient_field_balanced(oracle)
    if geometry.name == "stiefel":
        return gradient_field_stiefel(oracle)
    raise ValueError(f"unknown geometry {geometry.name!r}")


def _frozen_value_field(field: VectorField, value: TangentPair) -> VectorField:
    """The same field with its value at the current point precomputed, so the
    Newton operator does not re-evaluate the gradient on every application."""
    return VectorField(value=lambda pt: value, derivative=field.derivative)


def newton_operator(geometry, pt, field: VectorField,
                    grad: TangentPair | None = None
                    ) -> Callable[[TangentPair], TangentPair]:
    """The lifted Newton system's left-hand side as a matrix-free map.

    Returns xi -> P_h( nabla_xi grad f ), a linear, metric-self-adjoint map
    of the horizontal space at pt.
    """
    if grad is None:
        grad = field.value(pt)
    frozen = _frozen_value_field(field, grad)

    def apply(xi: TangentPair) -> TangentPair:
        return geometry.quotient_connection(xi, frozen)

    return apply


def krylov_solve(geometry, operator, rhs: TangentPair, tol: float,
                 maxit: int) -> tuple[TangentPair, int, float]:
    """Solve operator(xi) = rhs on the horizontal space at rhs.point.

    GMRES with the geometry's metric as inner product (modified
    Gram-Schmidt Arnoldi, least-squares on the Hessenberg matrix, no
    restarts). Returns (xi, iterations, relative residual), where the
    residual is re-measured with one extra operator application rather than
    read off the recurrence. Raises SolverFailure, with the best iterate
    attached, if the tolerance is not reached.
    """
    geometry.require_horizontal(rhs, where="krylov right-hand side")
    rhs_norm = geometry.norm(rhs)
    if rhs_norm == 0.0:
        return zero_pair(rhs.point), 0, 0.0

    basis = [rhs * (1.0 / rhs_norm)]
    columns: list[list[float]] = []
    solution_coeffs = None
    operator_scale = 0.0

    for j in range(maxit):
        w = operator(basis[j])
        operator_scale = max(operator_scale, geometry.norm(w))
        column = []
        for q in basis:
            hij = geometry.metric(q, w)
            column.append(hij)
            w = w - hij * q
        subdiag = geometry.norm(w)
        column.append(subdiag)
        columns.append(column)

        k = j + 1
        hess = np.zeros((k + 1, k))
        for c, vals in enumerate(columns):
            hess[: len(vals), c] = vals
        target = np.zeros(k + 1)
        target[0] = rhs_norm
        coeffs, *_ = np.linalg.lstsq(hess, target, rcond=None)
        arnoldi_residual = np.linalg.norm(hess @ coeffs - target)
        solution_coeffs = coeffs

        if arnoldi_residual <= tol * rhs_norm:
            break
        if subdiag <= BREAKDOWN_TOL * rhs_norm:
            # invariant subspace reached; the current least-squares solution
            # is the best this operator admits
            break
        basis.append(w * (1.0 / subdiag))

    xi = zero_pair(rhs.point)
    for coeff, q in zip(solution_coeffs, basis):
        xi = xi + float(coeff) * q

    absolute = geometry.norm(operator(xi) - rhs)
    true_residual = absolute / rhs_norm
    iterations = len(columns)
    eps = np.finfo(float).eps
    noise_floor = KRYLOV_FLOOR_FACTOR * eps * max(operator_scale, rhs_norm)
    if absolute > max(tol * rhs_norm, noise_floor):
        raise SolverFailure(
            f"krylov solve stalled at relative residual {true_residual:.3e} "
            f"after {iterations} iterations (tolerance {tol:.3e})",
            best=xi,
            residual=true_residual,
            iterations=iterations,
        )
    return xi, iterations, float(true_residual)


def gradient_step(geometry, pt, oracle: EuclideanOracle,
                  field: VectorField | None = None,
                  c1: float = 1e-4, backtrack: float = 0.5,
                  max_backtracks: int = 40):
    """One Riemannian gradient-descent step with Armijo backtracking.

    Used as an optional warm start for Newton; follows -grad through the
    geometry's own step map, halving on insufficient decrease or rank loss.
    The first trial step is the exact minimizer of the local quadratic model
    along the ray (one curvature evaluation), which keeps the warm start
    useful on badly scaled problems; Armijo still guards the result.
    """
    if field is None:
        field = gradient_field_for(geometry, oracle)
    grad = field.value(pt)
    slope = geometry.metric(grad, grad)
    scale = float(np.linalg.norm(pt.u) + np.linalg.norm(pt.v))
    if np.sqrt(slope) <= 1e-14 * max(scale, 1.0):
        # numerically critical; no direction worth following
        return pt
    f0 = oracle.value(pt.u, pt.v)
    curvature = geometry.metric(
        grad, newton_operator(geometry, pt, field, grad=grad)(grad)
    )
    step = slope / curvature if curvature > 0.0 else 1.0
    direction = -grad
    for _ in range(max_backtracks):
        try:
            candidate = geometry.move(pt, direction * step)
        except RankError:
            step *= backtrack
            continue
        if oracle.value(candidate.u, candidate.v) <= f0 - c1 * step * slope:
            return candidate
        step *= backtrack
    raise SolverFailure(
        f"gradient step found no Armijo point within {max_backtracks} halvings"
    )


def _newton_direction(geometry, pt, field, grad, grad_norm, config):
    operator = newton_operator(geometry, pt, field, grad=grad)
    forcing = min(config.krylov_tol, grad_norm)
    maxit = config.krylov_max if config.krylov_max is not None else geometry.dim
    return krylov_solve(geometry, operator, -grad, forcing, maxit)


def _damped_move(geometry, pt, xi, grad, oracle, config):
    f0 = oracle.value(pt.u, pt.v)
    # Armijo on the Newton direction; if it happens not to be a descent
    # direction, fall back to demanding plain non-increase
    slope = min(geometry.metric(grad, xi), 0.0)
    step = 1.0
    last_error = None
    for _ in range(config.armijo_max_backtracks):
        try:
            candidate = geometry.move(pt, xi * step)
        except RankError as err:
            last_error = err
            step *= config.armijo_backtrack
            continue
        if oracle.value(candidate.u, candidate.v) <= f0 + config.armijo_c1 * step * slope:
            return candidate
        step *= config.armijo_backtrack
    if last_error is not None:
        raise last_error
    raise SolverFailure("damped Newton found no acceptable step")


def newton_run(geometry, start, oracle: EuclideanOracle,
               config: NewtonConfig | None = None,
               keep_points: bool = False) -> NewtonResult:
    """Run warm start (optional) plus Newton iterations from ``start``.

    Records one row per iterate including the start; stops when the
    gradient norm in the geometry's metric drops to config.grad_tol
    (status "converged"), on the iteration budget ("max_iter"), on an inner
    solve that cannot reach its tolerance ("solver_failure"), or on rank
    loss of an iterate ("rank_breakdown"). With ``keep_points`` the result
    also carries the iterate for every record, for error-trajectory
    diagnostics.
    """
    if config is None:
        config = NewtonConfig()
    field = gradient_field_for(geometry, oracle)

    pt = start
    points = [pt] if keep_points else None
    grad = field.value(pt)
    grad_norm = geometry.norm(grad)
    records = [
        IterationRecord(
            index=0,
            f_value=oracle.value(pt.u, pt.v),
            grad_norm=grad_norm,
            step_norm=0.0,
            krylov_iterations=0,
            newton_residual=0.0,
            wall_time=0.0,
        )
    ]
    total_budget = config.warmstart_steps + config.max_outer
    status = "max_iter"
    moves = 0

    while True:
        if grad_norm <= config.grad_tol:
            status = "converged"
            break
        if moves >= total_budget:
            status = "max_iter"
            break
        started = time.perf_counter()
        try:
            if moves < config.warmstart_steps:
                new_pt = gradient_step(
                    geometry, pt, oracle, field=field,
                    c1=config.armijo_c1,
                    backtrack=config.armijo_backtrack,
                    max_backtracks=config.armijo_max_backtracks,
                )
                krylov_iterations = 0
                residual = 0.0
                step_norm = float(
                    np.linalg.norm(new_pt.u - pt.u)
                    + np.linalg.norm(new_pt.v - pt.v)
                )
            else:
                xi, krylov_iterations, residual = _newton_direction(
                    geometry, pt, field, grad, grad_norm, config
                )
                step_norm = geometry.norm(xi)
                if config.step_policy == "armijo-damped":
                    new_pt = _damped_move(geometry, pt, xi, grad, oracle, config)
                else:
                    new_pt = geometry.move(pt, xi)
        except SolverFailure:
            status = "solver_failure"
            break
        except RankError:
            status = "rank_breakdown"
            break
        elapsed = time.perf_counter() - started

        pt = new_pt
        if points is not None:
            points.append(pt)
        grad = field.value(pt)
        grad_norm = geometry.norm(grad)
        moves += 1
        records.append(
            IterationRecord(
                index=moves,
                f_value=oracle.value(pt.u, pt.v),
                grad_norm=grad_norm,
                step_norm=step_norm,
                krylov_iterations=krylov_iterations,
                newton_residual=residual,
                wall_time=elapsed,
            )
        )

    return NewtonResult(
        point=pt,
        records=tuple(records),
        status=status,
        points=tuple(points) if points is not None else None,
    )
