"""Quotient geometry of the rank-p manifold with an orthonormal left factor.

Points are factor pairs (u, v) with u having orthonormal columns and v full
column rank, x = u @ v.T. The residual gauge freedom is the orthogonal group
acting as (u r, v r). The total space St(p, m) x R_*^{n x p} carries the
plain Euclidean metric, which is invariant under this action, so the
quotient geometry is well defined; geodesics of the total space are known in
closed form, and horizontal ones project to quotient geodesics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import ContractError, GaugeError, RankError, TangencyError
from .factors import TangentPair, VectorField
from .kernels import matrix_exp, qr_positive, sym, sylvester_solve

__all__ = [
    "StiefelPoint",
    "StiefelLift",
    "StiefelProjection",
    "StiefelGeometry",
]

#: Allowed deviation of u^T u from the identity for a valid point; geodesic
#: steps whose drift exceeds this are re-orthonormalized.
ORTH_TOL = 1e-10
#: Drift level that additionally triggers a numerical-drift warning.
DRIFT_WARN = 1e-6
#: Default relative rank tolerance for the free factor.
RANK_TOL = 1e-10
#: Relative horizontality certificate tolerance at module boundaries.
HORIZONTAL_TOL = 1e-8
#: Relative tangency tolerance for ambient matrices fed to lifts.
TANGENCY_TOL = 1e-8


class StiefelPoint:
    """Factor pair (u, v) with orthonormal u columns and full-rank v."""

    def __init__(self, u, v, orth_tol: float = ORTH_TOL, rank_tol: float = RANK_TOL):
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
        drift = np.linalg.norm(u.T @ u - np.eye(p))
        if drift > orth_tol:
            raise ValueError(
                f"left factor is not orthonormal (||u^T u - I|| = {drift:.3e})"
            )
        svals = np.linalg.svd(v, compute_uv=False)
        if svals[-1] <= rank_tol * svals[0] or svals[-1] == 0.0:
            raise RankError(
                "free factor is numerically rank deficient "
                f"(sigma_min/sigma_max = {svals[-1] / max(svals[0], 1e-300):.3e})"
            )
        u.flags.writeable = False
        v.flags.writeable = False
        self.u = u
        self.v = v
        self.gram_v = v.T @ v
        self.gram_v_plus = self.gram_v + np.eye(p)
        self._cho_v = cho_factor(self.gram_v)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def product(self) -> np.ndarray:
        return self.u @ self.v.T

    def solve_gram_v(self, w: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho_v, w)

    def rsolve_gram_v(self, w: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho_v, w.T).T

    def __repr__(self) -> str:
        m, n = self.shape
        return f"StiefelPoint(m={m}, n={n}, p={self.rank})"


@dataclass(frozen=True)
class StiefelLift:
    """Horizontal lift with the rotation-rate and symmetric blocks it solved for."""

    pair: TangentPair
    omega: np.ndarray
    s_matrix: np.ndarray


@dataclass(frozen=True)
class StiefelProjection:
    """Horizontal part of a tangent vector; the removed vertical component is
    (u omega, v omega) with the returned skew ``omega`` negated."""

    pair: TangentPair
    omega: np.ndarray


class StiefelGeometry:
    """Operations of the orthonormal-factor quotient geometry at fixed (m, n, p)."""

    name = "stiefel"

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

    def point(self, u, v) -> StiefelPoint:
        pt = StiefelPoint(u, v)
        self._check_point(pt)
        return pt

    def _check_point(self, pt: StiefelPoint) -> None:
        if pt.u.shape != (self.m, self.p) or pt.v.shape != (self.n, self.p):
            raise ContractError(
                f"point with factors {pt.u.shape}/{pt.v.shape} does not live "
                f"in the (m, n, p) = ({self.m}, {self.n}, {self.p}) geometry"
            )

    def random_point(self, rng: np.random.Generator) -> StiefelPoint:
        for _ in range(8):
            try:
                q, _ = qr_positive(rng.standard_normal((self.m, self.p)))
                v = rng.standard_normal((self.n, self.p)) / np.sqrt(self.n)
                v = v * rng.uniform(0.6, 1.6, size=(1, self.p))
                return self.point(q, v)
            except RankError:
                continue
        raise RankError("failed to draw a full-rank random point")

    def random_tangent(self, pt: StiefelPoint, rng: np.random.Generator,
                       normalized: bool = True) -> TangentPair:
        """Random tangent of the total space (u-slot projected to the Stiefel
        tangent space, v-slot free)."""
        pair = self.tangent_project(
            TangentPair(
                pt,
                rng.standard_normal(pt.u.shape),
                rng.standard_normal(pt.v.shape),
            )
        )
        if normalized:
            pair = pair * (1.0 / self.norm(pair))
        return pair

    def random_horizontal(self, pt: StiefelPoint, rng: np.random.Generator,
                          normalized: bool = True) -> TangentPair:
        pair = self.horizontal_project(self.random_tangent(pt, rng, False)).pair
        if normalized:
            pair = pair * (1.0 / self.norm(pair))
        return pair

    def random_tangent_matrix(self, pt: StiefelPoint, rng: np.random.Generator,
                              normalized: bool = True) -> np.ndarray:
        z = (
            rng.standard_normal(pt.u.shape) @ pt.v.T
            + pt.u @ rng.standard_normal(pt.v.shape).T
        )
        if normalized:
            z = z / np.linalg.norm(z)
        return z

    def random_rotation(self, rng: np.random.Generator) -> np.ndarray:
        q, _ = qr_positive(rng.standard_normal((self.p, self.p)))
        return q

    # -- tangent structure --------------------------------------------------

    def tangent_project(self, a: TangentPair) -> TangentPair:
        """Project a raw factor-velocity pair onto the total tangent space:
        (a_u - u sym(u^T a_u), a_v)."""
        pt = a.point
        self._check_point(pt)
        return TangentPair(
            pt, a.du - pt.u @ sym(pt.u.T @ a.du), a.dv
        )

    def tangent_residual(self, a: TangentPair) -> float:
        """Norm of sym(u^T a_u); zero iff the pair is tangent to the total space."""
        return float(np.linalg.norm(sym(a.point.u.T @ a.du)))

    def metric(self, a: TangentPair, b: TangentPair) -> float:
        """Euclidean metric tr(a_u^T b_u) + tr(a_v^T b_v) (gauge invariant here)."""
        if a.point is not b.point:
            raise ContractError("metric arguments have different base points")
        return float(np.sum(a.du * b.du) + np.sum(a.dv * b.dv))

    def norm(self, a: TangentPair) -> float:
        return float(np.sqrt(max(self.metric(a, a), 0.0)))

    def vertical_vector(self, pt: StiefelPoint, omega: np.ndarray) -> TangentPair:
        """Vertical direction (u omega, v omega) for a skew generator omega."""
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.p, self.p):
            raise ValueError(f"omega must be {self.p} x {self.p}, got {omega.shape}")
        if np.linalg.norm(omega + omega.T) > 1e-12 * max(1.0, np.linalg.norm(omega)):
            raise ContractError("vertical generator must be skew-symmetric")
        return TangentPair(pt, pt.u @ omega, pt.v @ omega)

    def horizontality_residual(self, a: TangentPair) -> float:
        """Norm of skew(u^T a_u + v^T a_v); zero on the horizontal space."""
        pt = a.point
        w = pt.u.T @ a.du + pt.v.T @ a.dv
        return float(np.linalg.norm(0.5 * (w - w.T)))

    def horizontal_gap(self, a: TangentPair) -> float:
        """Norm of the non-horizontal part of a (u-slot tangency defect plus
        the vertical component removed by the projector), relative to ||a||.

        Zero exactly on the horizontal space.
        """
        scale = self.norm(a)
        if scale == 0.0:
            return 0.0
        tangent = self.tangent_project(a)
        res = np.linalg.norm(a.du - tangent.du)
        vert = tangent - self.horizontal_project(tangent).pair
        return float((res + self.norm(vert)) / scale)

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
        pt = a.point
        return a.du @ pt.v.T + pt.u @ a.dv.T

    # -- lifts ------------------------------------------------------------------

    def tangency_residual(self, pt: StiefelPoint, z: np.ndarray) -> float:
        w = z - pt.u @ (pt.u.T @ z)
        w = w - pt.rsolve_gram_v(w @ pt.v) @ pt.v.T
        return float(np.linalg.norm(w))

    def _require_tangent_matrix(self, pt: StiefelPoint, z: np.ndarray) -> np.ndarray:
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

    def horizontal_lift(self, pt: StiefelPoint, z: np.ndarray) -> StiefelLift:
        """Horizontal lift of a tangent matrix z.

        With w = u^T z v, solves for the skew rotation rate
        ``omega (gv + I) + (gv + I) omega = w - w^T`` and the symmetric block
        s = w - omega (gv + I), then

            du = (z v - u (omega + s)) gv^-1,    dv = z^T u + v omega.
        """
        self._check_point(pt)
        z = self._require_tangent_matrix(pt, z)
        zv = z @ pt.v
        return self._lift_from_blocks(pt, zv, z.T @ pt.u, pt.u.T @ zv)

    def horizontal_lift_factored(self, pt: StiefelPoint, fu: np.ndarray,
                                 fv: np.ndarray) -> StiefelLift:
        """Horizontal lift of z = fu v^T + u fv^T without forming z."""
        self._check_point(pt)
        fu = np.asarray(fu, dtype=float)
        fv = np.asarray(fv, dtype=float)
        if fu.shape != (self.m, self.p) or fv.shape != (self.n, self.p):
            raise ValueError("factored tangent blocks have wrong shapes")
        zv = fu @ pt.gram_v + pt.u @ (fv.T @ pt.v)
        ztu = pt.v @ (fu.T @ pt.u) + fv
        w = (pt.u.T @ fu) @ pt.gram_v + fv.T @ pt.v
        return self._lift_from_blocks(pt, zv, ztu, w)

    def _lift_from_blocks(self, pt, zv, ztu, w) -> StiefelLift:
        gp = pt.gram_v_plus
        omega = sylvester_solve(gp, gp, w - w.T)
        s = w - omega @ gp
        du = pt.rsolve_gram_v(zv - pt.u @ (omega + s))
        dv = ztu + pt.v @ omega
        pair = TangentPair(pt, du, dv, horizontal=True)
        return StiefelLift(pair=pair, omega=omega, s_matrix=s)

    # -- gauge action -------------------------------------------------------------

    def _check_rotation(self, rot: np.ndarray) -> np.ndarray:
        rot = np.asarray(rot, dtype=float)
        if rot.shape != (self.p, self.p):
            raise GaugeError(f"rotation must be {self.p} x {self.p}, got {rot.shape}")
        drift = np.linalg.norm(rot.T @ rot - np.eye(self.p))
        if drift > 1e-10:
            raise GaugeError(f"gauge is not orthogonal (||r^T r - I|| = {drift:.3e})")
        return rot

    def transport_point(self, pt: StiefelPoint, rot: np.ndarray) -> StiefelPoint:
        self._check_point(pt)
        rot = self._check_rotation(rot)
        return self.point(pt.u @ rot, pt.v @ rot)

    def fiber_transport(self, a: TangentPair, rot: np.ndarray,
                        at: StiefelPoint | None = None) -> TangentPair:
        """Transport a lift to the rotated representative (u r, v r):
        both slots are right-multiplied by r."""
        rot = self._check_rotation(rot)
        if at is None:
            at = self.transport_point(a.point, rot)
        return TangentPair(at, a.du @ rot, a.dv @ rot, horizontal=a.horizontal)

    # -- projection, connection, gradient -------------------------------------------

    def horizontal_project(self, a: TangentPair) -> StiefelProjection:
        """Orthogonal projection of a total-space tangent onto the horizontal
        space: solves
        ``(gv + I) omega + omega (gv + I) = a_u^T u - u^T a_u + a_v^T v - v^T a_v``
        and returns (a_u + u omega, a_v + v omega)."""
        pt = a.point
        self._check_point(pt)
        res = self.tangent_residual(a)
        scale = a.euclidean_norm()
        if scale > 0 and res > 1e-8 * scale:
            raise ContractError(
                "horizontal_project expects a tangent of the total space "
                f"(relative Stiefel-tangency residual {res / scale:.3e})"
            )
        rhs = a.du.T @ pt.u - pt.u.T @ a.du + a.dv.T @ pt.v - pt.v.T @ a.dv
        gp = pt.gram_v_plus
        omega = sylvester_solve(gp, gp, rhs)
        pair = TangentPair(
            pt, a.du + pt.u @ omega, a.dv + pt.v @ omega, horizontal=True
        )
        return StiefelProjection(pair=pair, omega=omega)

    def connection(self, x: TangentPair, field: VectorField) -> TangentPair:
        """Covariant derivative on the total space: the coordinatewise
        derivative of the field with the u-slot projected back to the Stiefel
        tangent space."""
        pt = x.point
        self._check_point(pt)
        dy = field.derivative(pt, x)
        return TangentPair(
            pt, dy.du - pt.u @ sym(pt.u.T @ dy.du), dy.dv
        )

    def quotient_connection(self, x: TangentPair, field: VectorField) -> TangentPair:
        pt = x.point
        self._check_point(pt)
        self.require_horizontal(x, where="direction")
        y = field.value(pt)
        self.require_horizontal(y, where="field value")
        return self.horizontal_project(self.connection(x, field)).pair

    def lifted_gradient(self, pt: StiefelPoint, oracle) -> TangentPair:
        """Horizontal lift of the Riemannian gradient: with g = grad f at
        x = u v^T, returns (g v - u sym(u^T g v), g^T u)."""
        self._check_point(pt)
        c = oracle.grad_right(pt.u, pt.v, pt.v)
        return TangentPair(
            pt,
            c - pt.u @ sym(pt.u.T @ c),
            oracle.grad_left(pt.u, pt.v, pt.u),
            horizontal=True,
        )

    # -- geodesics -----------------------------------------------------------------

    def exponential_total(self, h: TangentPair, t: float = 1.0
                          ) -> tuple[np.ndarray, np.ndarray]:
        """Geodesic of the total space from h.point with velocity h, at time t.

        The orthonormal factor follows the closed-form Stiefel geodesic

            u(t) = [u, t h_u] expm([[a, -s], [I, a]])[:, :p] expm(-a),

        with a = u^T (t h_u) and s = (t h_u)^T (t h_u); the free factor moves
        along the straight line v + t h_v. Returns the raw factor pair.
        """
        pt = h.point
        self._check_point(pt)
        res = self.tangent_residual(h)
        scale = h.euclidean_norm()
        if scale > 0 and res > 1e-8 * scale:
            raise ContractError(
                "geodesic velocity must be tangent to the total space "
                f"(relative Stiefel-tangency residual {res / scale:.3e})"
            )
        p = self.p
        a_blk = t * (pt.u.T @ h.du)
        s_blk = (t * t) * (h.du.T @ h.du)
        block = np.zeros((2 * p, 2 * p))
        block[:p, :p] = a_blk
        block[:p, p:] = -s_blk
        block[p:, :p] = np.eye(p)
        block[p:, p:] = a_blk
        big = matrix_exp(block)
        small = matrix_exp(-a_blk)
        u_new = (np.hstack([pt.u, t * h.du]) @ big[:, :p]) @ small
        v_new = pt.v + t * h.dv
        return u_new, v_new

    def exponential(self, h: TangentPair, t: float = 1.0) -> StiefelPoint:
        """Quotient geodesic step along a horizontal velocity.

        Wraps ``exponential_total`` with the drift policy: orthonormality
        drift beyond ORTH_TOL is repaired by the positive-diagonal QR
        (warning past DRIFT_WARN); rank loss of the free factor raises.
        """
        self.require_horizontal(h, where="geodesic velocity")
        u_new, v_new = self.exponential_total(h, t)
        drift = np.linalg.norm(u_new.T @ u_new - np.eye(self.p))
        if drift > DRIFT_WARN:
            warnings.warn(
                f"geodesic orthonormality drift {drift:.3e}; re-orthonormalizing",
                RuntimeWarning,
                stacklevel=2,
            )
        if drift > ORTH_TOL:
            q, r = qr_positive(u_new)
            u_new = q
            v_new = v_new @ r.T
        return self.point(u_new, v_new)

    def move(self, pt: StiefelPoint, h: TangentPair) -> StiefelPoint:
        if h.point is not pt:
            raise ContractError("step is not based at the given point")
        return self.exponential(h, 1.0)

    def reorthonormalize(self, pt: StiefelPoint) -> StiefelPoint:
        """Restore exact orthonormality by QR, compensating in the free factor
        so the represented product is unchanged: u -> q, v -> v r^T."""
        self._check_point(pt)
        q, r = qr_positive(pt.u)
        return self.point(q, pt.v @ r.T)
