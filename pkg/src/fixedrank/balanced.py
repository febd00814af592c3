"""Quotient geometry of the rank-p manifold with the scaled factor metric.

Points of the rank-p manifold are represented by full-rank factor pairs
(u, v), u of shape (m, p), v of shape (n, p), with x = u @ v.T. The whole
fiber {(u r, v r^-T) : r invertible} maps to the same x. The total space
carries the gauge-invariant metric

    <(a, b), (a', b')> = tr((u^T u)^-1 a^T a') + tr((v^T v)^-1 b^T b'),

and the quotient inherits a well-defined geometry: horizontal lifts,
projection onto the horizontal space, the Levi-Civita connection, gradients
and a rank-preserving retraction, all computed in factored form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import ContractError, GaugeError, RankError, TangencyError
from .factors import TangentPair, VectorField
from .kernels import sym, sylvester_solve

__all__ = [
    "BalancedPoint",
    "BalancedLift",
    "BalancedProjection",
    "InvarianceGap",
    "BalancedGeometry",
]

#: Default relative tolerance on sigma_min/sigma_max below which a factor is
#: considered rank deficient.
RANK_TOL = 1e-10
#: Gram matrices with condition number beyond this are rejected at
#: construction (degenerate-point policy: error, never regularize).
GRAM_COND_MAX = 1e12
#: Relative horizontality certificate tolerance at module boundaries.
HORIZONTAL_TOL = 1e-8
#: Relative tangency tolerance for ambient matrices fed to lifts.
TANGENCY_TOL = 1e-8
#: Gauge transforms with condition number beyond this are refused.
GAUGE_COND_MAX = 1e12


class BalancedPoint:
    """A full-rank factor pair (u, v) representing x = u @ v.T.

    Gram matrices and their Cholesky factors are computed eagerly and reused
    by every operation at this point. Construction rejects rank-deficient or
    too-ill-conditioned factors.
    """

    def __init__(self, u, v, rank_tol: float = RANK_TOL,
                 gram_cond_max: float = GRAM_COND_MAX):
        u = np.array(u, dtype=float)
        v = np.array(v, dtype=float)
        if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
            raise ValueError(
                f"factors must be 2-d with a common column count, got "
                f"{u.shape} and {v.shape}"
            )
        p = u.shape[1]
        if p < 1 or u.shape[0] < p or v.shape[0] < p:
            raise ValueError(
                f"factors of shape {u.shape} and {v.shape} cannot have rank {p}"
            )
        for name, f in (("u", u), ("v", v)):
            svals = np.linalg.svd(f, compute_uv=False)
            if svals[-1] <= rank_tol * svals[0] or svals[-1] == 0.0:
                raise RankError(
                    f"factor {name} is numerically rank deficient "
                    f"(sigma_min/sigma_max = {svals[-1] / max(svals[0], 1e-300):.3e})"
                )
            if (svals[0] / svals[-1]) ** 2 > gram_cond_max:
                raise RankError(
                    f"gram matrix of factor {name} too ill conditioned "
                    f"(cond = {(svals[0] / svals[-1]) ** 2:.3e})"
                )
        u.flags.writeable = False
        v.flags.writeable = False
        self.u = u
        self.v = v
        self.gram_u = u.T @ u
        self.gram_v = v.T @ v
        self._cho_u = cho_factor(self.gram_u)
        self._cho_v = cho_factor(self.gram_v)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def product(self) -> np.ndarray:
        """The represented matrix x = u @ v.T (dense; small problems only)."""
        return self.u @ self.v.T

    # (u^T u)^-1 w  and  w (u^T u)^-1, via the cached Cholesky factors.
    def solve_gram_u(self, w: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho_u, w)

    def solve_gram_v(self, w: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho_v, w)

    def rsolve_gram_u(self, w: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho_u, w.T).T

    def rsolve_gram_v(self, w: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho_v, w.T).T

    def __repr__(self) -> str:
        m, n = self.shape
        return f"BalancedPoint(m={m}, n={n}, p={self.rank})"


@dataclass(frozen=True)
class BalancedLift:
    """A horizontal lift together with the Sylvester coupling that built it."""

    pair: TangentPair
    k_matrix: np.ndarray


@dataclass(frozen=True)
class BalancedProjection:
    """Result of the horizontal projection.

    ``pair`` is the horizontal part; ``gauge_rate`` is the p x p matrix r'
    such that the removed vertical component is (u r', -v r'^T).
    """

    pair: TangentPair
    gauge_rate: np.ndarray


@dataclass(frozen=True)
class InvarianceGap:
    """Relative fiber-invariance discrepancies of the two candidate metrics."""

    euclidean: float
    balanced: float


class BalancedGeometry:
    """Operations of the scaled-metric quotient geometry at fixed (m, n, p)."""

    name = "balanced"

    def __init__(self, m: int, n: int, p: int):
        if not (1 <= p <= min(m, n)):
            raise ValueError(f"need 1 <= p <= min(m, n), got m={m}, n={n}, p={p}")
        self.m = int(m)
        self.n = int(n)
        self.p = int(p)

    @property
    def dim(self) -> int:
        """Dimension p (m + n - p) of the rank-p manifold."""
        return self.p * (self.m + self.n - self.p)

    # -- construction -----------------------------------------------------

    def point(self, u, v) -> BalancedPoint:
        pt = BalancedPoint(u, v)
        self._check_point(pt)
        return pt

    def _check_point(self, pt: BalancedPoint) -> None:
        if pt.u.shape != (self.m, self.p) or pt.v.shape != (self.n, self.p):
            raise ContractError(
                f"point with factors {pt.u.shape}/{pt.v.shape} does not live "
                f"in the (m, n, p) = ({self.m}, {self.n}, {self.p}) geometry"
            )

    def random_point(self, rng: np.random.Generator) -> BalancedPoint:
        """Well-conditioned random point with mildly unbalanced columns."""
        for _ in range(8):
            u = rng.standard_normal((self.m, self.p)) / np.sqrt(self.m)
            v = rng.standard_normal((self.n, self.p)) / np.sqrt(self.n)
            u = u * rng.uniform(0.6, 1.6, size=(1, self.p))
            v = v * rng.uniform(0.6, 1.6, size=(1, self.p))
            try:
                return self.point(u, v)
            except RankError:
                continue
        raise RankError("failed to draw a full-rank random point")

    def random_ambient(self, pt: BalancedPoint, rng: np.random.Generator,
                       normalized: bool = True) -> TangentPair:
        """Random direction in the total space (not horizontal)."""
        pair = TangentPair(
            pt,
            rng.standard_normal(pt.u.shape),
            rng.standard_normal(pt.v.shape),
        )
        if normalized:
            pair = pair * (1.0 / self.norm(pair))
        return pair

    def random_horizontal(self, pt: BalancedPoint, rng: np.random.Generator,
                          normalized: bool = True) -> TangentPair:
        pair = self.horizontal_project(self.random_ambient(pt, rng, False)).pair
        if normalized:
            pair = pair * (1.0 / self.norm(pair))
        return pair

    def random_tangent_matrix(self, pt: BalancedPoint, rng: np.random.Generator,
                              normalized: bool = True) -> np.ndarray:
        """Random ambient m x n matrix tangent to the rank-p manifold at pt."""
        z = (
            rng.standard_normal(pt.u.shape) @ pt.v.T
            + pt.u @ rng.standard_normal(pt.v.shape).T
        )
        if normalized:
            z = z / np.linalg.norm(z)
        return z

    def random_gauge(self, rng: np.random.Generator, spread: float = 2.0) -> np.ndarray:
        """Random invertible gauge with condition number at most spread^2."""
        q1, _ = np.linalg.qr(rng.standard_normal((self.p, self.p)))
        q2, _ = np.linalg.qr(rng.standard_normal((self.p, self.p)))
        d = rng.uniform(1.0 / spread, spread, size=self.p)
        return q1 @ np.diag(d) @ q2

    def scaling_gauge(self) -> np.ndarray:
        """The alternating diag(2, 1/2, 2, ...) gauge used as a non-invariance witness."""
        return np.diag([2.0 if i % 2 == 0 else 0.5 for i in range(self.p)])

    # -- metric and splitting ----------------------------------------------

    def metric(self, a: TangentPair, b: TangentPair) -> float:
        """Scaled metric tr(gu^-1 a_u^T b_u) + tr(gv^-1 a_v^T b_v)."""
        if a.point is not b.point:
            raise ContractError("metric arguments have different base points")
        pt = a.point
        return float(
            np.trace(pt.solve_gram_u(a.du.T @ b.du))
            + np.trace(pt.solve_gram_v(a.dv.T @ b.dv))
        )

    def norm(self, a: TangentPair) -> float:
        return float(np.sqrt(max(self.metric(a, a), 0.0)))

    @staticmethod
    def euclidean_metric(a: TangentPair, b: TangentPair) -> float:
        """Plain factor-space inner product tr(a_u^T b_u) + tr(a_v^T b_v).

        Not invariant along fibers; kept as the executable counterexample.
        """
        if a.point is not b.point:
            raise ContractError("metric arguments have different base points")
        return float(np.sum(a.du * b.du) + np.sum(a.dv * b.dv))

    def vertical_vector(self, pt: BalancedPoint, rate: np.ndarray) -> TangentPair:
        """Vertical direction (u rate, -v rate^T) generated by a p x p rate."""
        rate = np.asarray(rate, dtype=float)
        if rate.shape != (self.p, self.p):
            raise ValueError(f"rate must be {self.p} x {self.p}, got {rate.shape}")
        return TangentPair(pt, pt.u @ rate, -pt.v @ rate.T)

    def horizontality_residual(self, a: TangentPair) -> float:
        """Frobenius norm of u^T a_u gu^-1 - gv^-1 a_v^T v (zero iff horizontal)."""
        t1, t2 = self._horizontality_terms(a)
        return float(np.linalg.norm(t1 - t2))

    def _horizontality_terms(self, a: TangentPair):
        pt = a.point
        t1 = pt.rsolve_gram_u(pt.u.T @ a.du)
        t2 = pt.solve_gram_v(a.dv.T @ pt.v)
        return t1, t2

    def horizontal_gap(self, a: TangentPair) -> float:
        """Metric norm of the vertical part of a, relative to the norm of a.

        Zero exactly on the horizontal space; well conditioned because it
        compares against the whole vector rather than its fiber components.
        """
        scale = self.norm(a)
        if scale == 0.0:
            return 0.0
        vert = a - self.horizontal_project(a).pair
        return float(self.norm(vert) / scale)

    def require_horizontal(self, a: TangentPair, where: str = "",
                           tol: float = HORIZONTAL_TOL) -> None:
        """Certificate check; pairs flagged horizontal by construction pass."""
        if a.horizontal:
            return
        gap = self.horizontal_gap(a)
        if gap > tol:
            raise ContractError(
                f"{where or 'input'} is not horizontal (relative gap {gap:.3e})"
            )

    def product_velocity(self, a: TangentPair) -> np.ndarray:
        """Velocity of x = u v^T induced by factor velocities: a_u v^T + u a_v^T."""
        pt = a.point
        return a.du @ pt.v.T + pt.u @ a.dv.T

    # -- lifts ---------------------------------------------------------------

    def tangency_residual(self, pt: BalancedPoint, z: np.ndarray) -> float:
        """Norm of (I - P_u) z (I - P_v) with the oblique factor projectors."""
        w = z - pt.u @ pt.solve_gram_u(pt.u.T @ z)
        w = w - pt.rsolve_gram_v(w @ pt.v) @ pt.v.T
        return float(np.linalg.norm(w))

    def _require_tangent(self, pt: BalancedPoint, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.m, self.n):
            raise ValueError(f"z must be {self.m} x {self.n}, got {z.shape}")
        res = self.tangency_residual(pt, z)
        scale = np.linalg.norm(z)
        if scale > 0 and res > TANGENCY_TOL * scale:
            raise TangencyError(
                f"z is not tangent to the rank-{self.p} manifold at this point "
                f"(relative tangency residual {res / scale:.3e})"
            )
        return z

    def horizontal_lift(self, pt: BalancedPoint, z: np.ndarray) -> BalancedLift:
        """Horizontal lift of a tangent matrix z of the rank-p manifold.

        Solves the coupling equation
        ``gu gv k + k gu gv = u^T z v`` and returns the unique horizontal
        (du, dv) with du v^T + u dv^T = z:

            du = (z v - u gv k) gv^-1,    dv = (z^T u - v gu k^T) gu^-1.
        """
        self._check_point(pt)
        z = self._require_tangent(pt, z)
        return self._lift_from_blocks(pt, z @ pt.v, z.T @ pt.u,
                                      pt.u.T @ (z @ pt.v))

    def horizontal_lift_factored(self, pt: BalancedPoint, fu: np.ndarray,
                                 fv: np.ndarray) -> BalancedLift:
        """Horizontal lift of z = fu v^T + u fv^T without forming z.

        Same result as ``horizontal_lift`` on the dense z, in
        O((m + n) p^2 + p^3) time; tangency holds by construction.
        """
        self._check_point(pt)
        fu = np.asarray(fu, dtype=float)
        fv = np.asarray(fv, dtype=float)
        if fu.shape != (self.m, self.p) or fv.shape != (self.n, self.p):
            raise ValueError("factored tangent blocks have wrong shapes")
        ufu = pt.u.T @ fu
        fvv = fv.T @ pt.v
        zv = fu @ pt.gram_v + pt.u @ fvv
        ztu = pt.v @ ufu.T + fv @ pt.gram_u
        c = ufu @ pt.gram_v + pt.gram_u @ fvv
        return self._lift_from_blocks(pt, zv, ztu, c)

    def _lift_from_blocks(self, pt, zv, ztu, c) -> BalancedLift:
        coeff = pt.gram_u @ pt.gram_v
        k = sylvester_solve(coeff, coeff, c)
        du = pt.rsolve_gram_v(zv - pt.u @ (pt.gram_v @ k))
        dv = pt.rsolve_gram_u(ztu - pt.v @ (pt.gram_u @ k.T))
        pair = TangentPair(pt, du, dv, horizontal=True)
        return BalancedLift(pair=pair, k_matrix=k)

    def euclidean_horizontal_lift(self, pt: BalancedPoint, z: np.ndarray) -> BalancedLift:
        """Lift of z horizontal for the Euclidean factor metric (counterexample).

        Solves ``gu k + k gv = u^T z v`` and returns
        du = (z v - u k) gv^-1, dv = (z^T u - v k^T) gu^-1. The resulting
        family of lifts is not fiber-invariant, which is exactly why the
        Euclidean metric does not descend to the quotient.
        """
        self._check_point(pt)
        z = self._require_tangent(pt, z)
        c = pt.u.T @ (z @ pt.v)
        k = sylvester_solve(pt.gram_u, pt.gram_v, c)
        du = pt.rsolve_gram_v(z @ pt.v - pt.u @ k)
        dv = pt.rsolve_gram_u(z.T @ pt.u - pt.v @ k.T)
        return BalancedLift(pair=TangentPair(pt, du, dv), k_matrix=k)

    # -- gauge action ----------------------------------------------------------

    def _check_gauge(self, gauge: np.ndarray) -> np.ndarray:
        gauge = np.asarray(gauge, dtype=float)
        if gauge.shape != (self.p, self.p):
            raise GaugeError(f"gauge must be {self.p} x {self.p}, got {gauge.shape}")
        condition = np.linalg.cond(gauge)
        if not np.isfinite(condition) or condition > GAUGE_COND_MAX:
            raise GaugeError(
                f"gauge transform too ill conditioned (cond = {condition:.3e})"
            )
        return gauge

    def transport_point(self, pt: BalancedPoint, gauge: np.ndarray) -> BalancedPoint:
        """The fiber-equivalent representative (u r, v r^-T)."""
        self._check_point(pt)
        gauge = self._check_gauge(gauge)
        inv = np.linalg.inv(gauge)
        return self.point(pt.u @ gauge, pt.v @ inv.T)

    def fiber_transport(self, a: TangentPair, gauge: np.ndarray,
                        at: BalancedPoint | None = None) -> TangentPair:
        """Transport a lift at (u, v) to the representative (u r, v r^-T).

        A lift of the same quotient tangent transforms as
        (du r, dv r^-T); passing ``at`` reuses an existing transported point.
        """
        gauge = self._check_gauge(gauge)
        if at is None:
            at = self.transport_point(a.point, gauge)
        inv = np.linalg.inv(gauge)
        return TangentPair(at, a.du @ gauge, a.dv @ inv.T,
                           horizontal=a.horizontal)

    # -- projection, connection, gradient ---------------------------------------

    def horizontal_project(self, a: TangentPair) -> BalancedProjection:
        """Orthogonal projection onto the horizontal space.

        Solves ``gv gu r' + r' gv gu = -gv u^T a_u + a_v^T v gu`` and adds the
        vertical direction generated by r' to a.
        """
        pt = a.point
        self._check_point(pt)
        rhs = -pt.gram_v @ (pt.u.T @ a.du) + (a.dv.T @ pt.v) @ pt.gram_u
        coeff = pt.gram_v @ pt.gram_u
        rate = sylvester_solve(coeff, coeff, rhs)
        pair = TangentPair(
            pt,
            a.du + pt.u @ rate,
            a.dv - pt.v @ rate.T,
            horizontal=True,
        )
        return BalancedProjection(pair=pair, gauge_rate=rate)

    def _connection_terms(self, x: TangentPair, y: TangentPair,
                          dy: TangentPair) -> TangentPair:
        # Levi-Civita connection of the scaled metric on the total space:
        # each factor slot gets the plain derivative plus three correction
        # terms built from gram solves.
        pt = x.point
        u, v = pt.u, pt.v
        du = (
            dy.du
            - y.du @ pt.solve_gram_u(sym(x.du.T @ u))
            - x.du @ pt.solve_gram_u(sym(y.du.T @ u))
            + u @ pt.solve_gram_u(sym(x.du.T @ y.du))
        )
        dv = (
            dy.dv
            - y.dv @ pt.solve_gram_v(sym(x.dv.T @ v))
            - x.dv @ pt.solve_gram_v(sym(y.dv.T @ v))
            + v @ pt.solve_gram_v(sym(x.dv.T @ y.dv))
        )
        return TangentPair(pt, du, dv)

    def connection(self, x: TangentPair, field: VectorField) -> TangentPair:
        """Covariant derivative of ``field`` along x in the total space."""
        pt = x.point
        self._check_point(pt)
        y = field.value(pt)
        dy = field.derivative(pt, x)
        return self._connection_terms(x, y, dy)

    def quotient_connection(self, x: TangentPair, field: VectorField) -> TangentPair:
        """Horizontal lift of the quotient covariant derivative.

        Requires a horizontal direction and a field whose values are
        horizontal lifts; equals the horizontal projection of the total-space
        covariant derivative.
        """
        pt = x.point
        self._check_point(pt)
        self.require_horizontal(x, where="direction")
        y = field.value(pt)
        self.require_horizontal(y, where="field value")
        dy = field.derivative(pt, x)
        return self.horizontal_project(self._connection_terms(x, y, dy)).pair

    def lifted_gradient(self, pt: BalancedPoint, oracle) -> TangentPair:
        """Horizontal lift of the Riemannian gradient of f(u v^T).

        With g = grad f at x = u v^T, the lift is (g v gu, g^T u gv); it is
        horizontal by construction and satisfies
        metric(grad, xi) = d/dt f((u, v) + t xi) for every direction xi.
        """
        self._check_point(pt)
        pu = oracle.grad_right(pt.u, pt.v, pt.v)
        pv = oracle.grad_left(pt.u, pt.v, pt.u)
        return TangentPair(pt, pu @ pt.gram_u, pv @ pt.gram_v, horizontal=True)

    # -- moving ----------------------------------------------------------------

    def retract(self, h: TangentPair) -> BalancedPoint:
        """First-order retraction (u + h_u, v + h_v); errors on rank loss."""
        pt = h.point
        self._check_point(pt)
        return self.point(pt.u + h.du, pt.v + h.dv)

    def move(self, pt: BalancedPoint, h: TangentPair) -> BalancedPoint:
        if h.point is not pt:
            raise ContractError("step is not based at the given point")
        return self.retract(h)

    # -- invariance counterexample ----------------------------------------------

    def euclidean_invariance_gap(self, pt: BalancedPoint, z: np.ndarray,
                                 gauge: np.ndarray) -> InvarianceGap:
        """Fiber-invariance discrepancy of both metrics on identical data.

        Lifts z at pt and at the gauge-equivalent representative, measuring
        each lift's squared length in its own metric. The scaled metric gives
        a fiber-independent value; the Euclidean metric does not.
        """
        pt2 = self.transport_point(pt, gauge)

        e0 = self.euclidean_horizontal_lift(pt, z).pair
        e1 = self.euclidean_horizontal_lift(pt2, z).pair
        val0 = self.euclidean_metric(e0, e0)
        val1 = self.euclidean_metric(e1, e1)
        euclidean_gap = abs(val1 - val0) / max(abs(val0), 1e-300)

        b0 = self.horizontal_lift(pt, z).pair
        b1 = self.horizontal_lift(pt2, z).pair
        g0 = self.metric(b0, b0)
        g1 = self.metric(b1, b1)
        balanced_gap = abs(g1 - g0) / max(abs(g0), 1e-300)

        return InvarianceGap(euclidean=float(euclidean_gap),
                             balanced=float(balanced_gap))
