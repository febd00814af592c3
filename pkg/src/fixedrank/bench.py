"""Timing for the three per-iteration geometry kernels.

Measures the factored horizontal lift, the horizontal projection, and one
connection application (the Newton operator's inner work) at given sizes,
with a constant horizontal field so only the geometry's own arithmetic is
on the clock. Sweeps over m+n at fixed rank or over the rank at fixed
m+n, and fits log-log scaling exponents across a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import median
from time import perf_counter
from typing import Callable, Sequence

import numpy as np

from .factors import TangentPair, VectorField, zero_pair
from .validation import make_geometry

DEFAULT_REPS = 5

# target duration of one timed block; calls faster than this are batched
_MIN_BLOCK_SECONDS = 2e-3
_MAX_INNER = 500


@dataclass(frozen=True)
class BenchRow:
    """Median per-call times, in milliseconds, for one instance."""

    geometry: str
    m: int
    n: int
    p: int
    lift_ms: float
    project_ms: float
    connection_ms: float

    @property
    def total_ms(self) -> float:
        return self.lift_ms + self.project_ms + self.connection_ms


def _time_call(fun: Callable[[], object], reps: int) -> float:
    """Median wall time of one call in milliseconds.

    Warms up once, then batches enough calls per measurement that timer
    resolution does not dominate at small sizes.
    """
    fun()
    start = perf_counter()
    fun()
    once = perf_counter() - start
    inner = max(1, min(_MAX_INNER, round(_MIN_BLOCK_SECONDS / max(once, 1e-9))))
    samples = []
    for _ in range(reps):
        start = perf_counter()
        for _ in range(inner):
            fun()
        samples.append((perf_counter() - start) / inner)
    return 1000.0 * median(samples)


def _frozen_field(pair: TangentPair) -> VectorField:
    # constant horizontal field evaluated only at its own base point, so
    # the connection's horizontality checks short-circuit exactly as they
    # do on the solver's hot path
    def value(point) -> TangentPair:
        return pair

    def derivative(point, direction: TangentPair) -> TangentPair:
        return zero_pair(point, horizontal=False)

    return VectorField(value=value, derivative=derivative)


def time_kernels(geometry: str, m: int, n: int, p: int,
                 seed: int = 0, reps: int = DEFAULT_REPS) -> BenchRow:
    """Time the lift / project / connection kernels at one instance."""
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    geo = make_geometry(geometry, m, n, p)
    rng = np.random.default_rng(seed)
    pt = geo.random_point(rng)

    fu = rng.standard_normal((m, p))
    fv = rng.standard_normal((n, p))
    if geometry == "balanced":
        raw = geo.random_ambient(pt, rng)
    else:
        raw = geo.random_tangent(pt, rng)
    direction = geo.random_horizontal(pt, rng)
    field = _frozen_field(geo.random_horizontal(pt, rng))

    return BenchRow(
        geometry=geometry,
        m=m,
        n=n,
        p=p,
        lift_ms=_time_call(lambda: geo.horizontal_lift_factored(pt, fu, fv), reps),
        project_ms=_time_call(lambda: geo.horizontal_project(raw), reps),
        connection_ms=_time_call(
            lambda: geo.quotient_connection(direction, field), reps),
    )


def sweep_sizes(geometry: str, sizes: Sequence[tuple[int, int]], p: int,
                seed: int = 0, reps: int = DEFAULT_REPS) -> list[BenchRow]:
    """Time the kernels at fixed rank over a sweep of (m, n) shapes."""
    return [time_kernels(geometry, m, n, p, seed=seed, reps=reps)
            for m, n in sizes]


def sweep_ranks(geometry: str, m: int, n: int, ranks: Sequence[int],
                seed: int = 0, reps: int = DEFAULT_REPS) -> list[BenchRow]:
    """Time the kernels at fixed shape over a sweep of ranks."""
    return [time_kernels(geometry, m, n, p, seed=seed, reps=reps)
            for p in ranks]


def fit_exponent(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x.

    An exponent near 1 over an m+n sweep means linear kernel cost in the
    ambient sizes; near 2 over a rank sweep means quadratic cost in p.
    """
    if len(xs) != len(ys):
        raise ValueError("xs and ys must have the same length")
    if len(xs) < 2:
        raise ValueError("an exponent fit needs at least two sweep points")
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("exponent fits need positive sizes and times")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
