"""Command-line front end.

Four subcommands: ``verify`` runs the seeded invariant battery, ``approx``
and ``complete`` run Newton on the two objectives and write CSV
convergence logs, ``bench`` times the geometry kernels. Options come from
a flat ``key = value`` config file, command-line flags (which win), or
the per-command defaults below. Every synthetic run requires a seed, and
all randomness flows from that one seed through fixed substreams, so a
log is reproducible from its own header.

Exit codes: 0 success/converged, 1 property or convergence failure,
2 usage or parse error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bench import BenchRow, fit_exponent, sweep_ranks, sweep_sizes, time_kernels
from .exceptions import FixedRankError, MatrixMarketError
from .initialization import spectral_initial_point, svd_initial_point, truncated_svd
from .mmio import load_matrixmarket, read_coordinate, read_dense
from .newton import NewtonConfig, NewtonResult, newton_run
from .objectives import DenseApproximation, MaskedCompletion
from .validation import GEOMETRY_NAMES, make_geometry

CSV_COLUMNS = "iter,f,grad_norm,step_norm,krylov_iters,newton_residual,time_ms"

# substream tags: one user-supplied seed fans out into independent
# generators so approx and complete draw identical targets and starts
_STREAM_TARGET = 0
_STREAM_MASK = 1
_STREAM_INIT = 2

BENCH_SIZE_SWEEP = ((1000, 1000), (2000, 2000))
BENCH_SIZE_RANK = 5
BENCH_RANK_SWEEP = (4, 8, 12)
BENCH_RANK_SHAPE = (4000, 4000)


class UsageError(Exception):
    """Bad flags, bad config values, or missing required options."""


# -- option schema -----------------------------------------------------------


def _as_int(text: str) -> int:
    return int(text)


def _as_float(text: str) -> float:
    return float(text)


def _as_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_str(text: str) -> str:
    return text


CONVERTERS: dict[str, Callable[[str], object]] = {
    "geometry": _as_str,
    "m": _as_int,
    "n": _as_int,
    "p": _as_int,
    "seed": _as_int,
    "input": _as_str,
    "mask": _as_str,
    "out": _as_str,
    "max_outer": _as_int,
    "grad_tol": _as_float,
    "krylov_tol": _as_float,
    "warmstart": _as_int,
    "damped": _as_bool,
    "rank": _as_int,
    "noise": _as_float,
    "sampling": _as_float,
    "init_perturb": _as_float,
    "trials": _as_int,
    "reps": _as_int,
}

APPROX_DEFAULTS: dict[str, object] = {
    "geometry": "balanced",
    "m": None,
    "n": None,
    "p": None,
    "seed": None,
    "input": None,
    "out": None,
    "max_outer": 50,
    "grad_tol": 1e-12,
    "krylov_tol": 1e-2,
    "warmstart": 0,
    "damped": False,
    "rank": None,
    "noise": 0.0,
    "init_perturb": 0.0,
}

COMPLETE_DEFAULTS: dict[str, object] = {
    **APPROX_DEFAULTS,
    "mask": None,
    "sampling": None,
    "grad_tol": 1e-10,
    "warmstart": 10,
}

VERIFY_DEFAULTS: dict[str, object] = {
    "seed": 0,
    "trials": 25,
    "out": None,
}

BENCH_DEFAULTS: dict[str, object] = {
    "geometry": "balanced",
    "m": None,
    "n": None,
    "p": None,
    "seed": 0,
    "reps": 5,
    "out": None,
}


def load_config(path: str) -> dict[str, object]:
    """Parse a flat ``key = value`` config file.

    Blank lines and ``#`` comments are skipped; keys may use dashes or
    underscores. Unknown keys and unconvertible values are usage errors
    carrying the offending line number.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, object] = {}
    for number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise UsageError(f"{path}:{number}: expected 'key = value', got {text!r}")
        key, _, value = text.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in CONVERTERS:
            raise UsageError(f"{path}:{number}: unknown option {key!r}")
        try:
            values[key] = CONVERTERS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{number}: bad value for {key}: {exc}") from exc
    return values


def resolve_options(args: argparse.Namespace,
                    defaults: dict[str, object]) -> dict[str, object]:
    """Merge defaults, config file, and explicit flags, flags winning."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        file_values = load_config(config_path)
        unknown = sorted(set(file_values) - set(defaults))
        if unknown:
            raise UsageError(
                f"config option(s) not used by this command: {', '.join(unknown)}")
        resolved.update(file_values)
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    if "geometry" in resolved and resolved["geometry"] not in GEOMETRY_NAMES:
        raise UsageError(
            f"geometry must be one of {', '.join(GEOMETRY_NAMES)}, "
            f"got {resolved['geometry']!r}")
    return resolved


def _require(resolved: dict[str, object], key: str, why: str) -> object:
    value = resolved.get(key)
    if value is None:
        raise UsageError(f"--{key.replace('_', '-')} is required {why}")
    return value


# -- log output ---------------------------------------------------------------


def _echo_value(value: object) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def header_lines(command: str, resolved: dict[str, object]) -> list[str]:
    lines = [f"# fixedrank = {__version__}", f"# command = {command}"]
    for key in sorted(resolved):
        lines.append(f"# {key} = {_echo_value(resolved[key])}")
    return lines


def format_log(command: str, resolved: dict[str, object],
               result: NewtonResult) -> str:
    """ConvergenceLog text: config echo, column header, one row per iterate."""
    lines = header_lines(command, resolved)
    lines.append(f"# status = {result.status}")
    lines.append(CSV_COLUMNS)
    for rec in result.records:
        lines.append(",".join([
            str(rec.index),
            repr(rec.f_value),
            repr(rec.grad_norm),
            repr(rec.step_norm),
            str(rec.krylov_iterations),
            repr(rec.newton_residual),
            repr(rec.wall_time * 1000.0),
        ]))
    return "\n".join(lines) + "\n"


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


# -- synthetic data -----------------------------------------------------------


def synthetic_target(m: int, n: int, rank: int | None, noise: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Dense Gaussian target, or a rank-``rank`` product plus noise."""
    if rank is None:
        return rng.standard_normal((m, n))
    if rank < 1 or rank > min(m, n):
        raise UsageError(f"rank must be in [1, {min(m, n)}], got {rank}")
    left = rng.standard_normal((m, rank))
    right = rng.standard_normal((n, rank))
    target = left @ right.T
    if noise > 0.0:
        target = target + noise * rng.standard_normal((m, n))
    return target


def synthetic_mask(m: int, n: int, sampling: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sampled observation set of round(sampling * m * n) cells."""
    if not 0.0 < sampling <= 1.0:
        raise UsageError(f"sampling must be in (0, 1], got {sampling}")
    count = int(round(sampling * m * n))
    if count < 1:
        raise UsageError(
            f"sampling {sampling} leaves no observed entries on a {m} x {n} matrix")
    flat = rng.permutation(m * n)[:count]
    return flat // n, flat % n


def _substream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag])


# -- approx -------------------------------------------------------------------


def _newton_config(resolved: dict[str, object]) -> NewtonConfig:
    return NewtonConfig(
        max_outer=resolved["max_outer"],
        grad_tol=resolved["grad_tol"],
        krylov_tol=resolved["krylov_tol"],
        warmstart_steps=resolved["warmstart"],
        step_policy="armijo-damped" if resolved["damped"] else "full-newton",
    )


def _load_dense_input(resolved: dict[str, object]) -> np.ndarray:
    target = read_dense(resolved["input"])
    for key, size in (("m", target.shape[0]), ("n", target.shape[1])):
        given = resolved.get(key)
        if given is not None and given != size:
            raise UsageError(
                f"--{key} {given} does not match the {target.shape[0]} x "
                f"{target.shape[1]} input file")
    return target


def _init_rng(resolved: dict[str, object]) -> np.random.Generator | None:
    if resolved["init_perturb"] > 0.0:
        seed = _require(resolved, "seed",
                        "whenever the start point is randomly perturbed")
        return _substream(seed, _STREAM_INIT)
    return None


def error_ratios(errors: Sequence[float]) -> list[float]:
    """log(e_{k+1}) / log(e_k) over consecutive errors inside (0, 1).

    Near quadratic convergence the ratios approach 2; pairs outside the
    unit interval carry no information about the exponent and are skipped.
    """
    ratios = []
    for ek, ek1 in zip(errors, errors[1:]):
        if 0.0 < ek < 1.0 and 0.0 < ek1 < 1.0:
            ratios.append(float(np.log(ek1) / np.log(ek)))
    return ratios


def cmd_approx(args: argparse.Namespace) -> int:
    resolved = resolve_options(args, APPROX_DEFAULTS)
    p = _require(resolved, "p", "to choose the manifold rank")
    out = _require(resolved, "out", "to receive the convergence log")

    if resolved["input"] is not None:
        target = _load_dense_input(resolved)
    else:
        m = _require(resolved, "m", "for a synthetic target")
        n = _require(resolved, "n", "for a synthetic target")
        seed = _require(resolved, "seed", "for every synthetic run")
        target = synthetic_target(m, n, resolved["rank"], resolved["noise"],
                                  _substream(seed, _STREAM_TARGET))
    m, n = target.shape
    resolved["m"], resolved["n"] = m, n

    geo = make_geometry(resolved["geometry"], m, n, p)
    oracle = DenseApproximation(target)
    start = svd_initial_point(geo, target, perturbation=resolved["init_perturb"],
                              rng=_init_rng(resolved))
    result = newton_run(geo, start, oracle, _newton_config(resolved),
                        keep_points=True)

    _write_text(out, format_log("approx", resolved, result))

    u, s, vt = truncated_svd(target, p)
    best = (u * s) @ vt
    errors = [float(np.linalg.norm(point.product() - best))
              for point in result.points]
    ratios = error_ratios(errors)
    print(f"status = {result.status}")
    print(f"final grad norm = {result.final_grad_norm!r}")
    print(f"distance to best rank-{p} approximation = {errors[-1]!r}")
    print("error ratios log(e_k+1)/log(e_k) = "
          + (" ".join(f"{r:.3f}" for r in ratios) if ratios else "n/a"))
    return 0 if result.converged else 1


# -- complete -----------------------------------------------------------------


def _completion_data(resolved: dict[str, object]):
    """Observed entries plus, when the full matrix is known, the truth.

    Three sources: a coordinate file of observed entries (no truth), a
    dense file masked by a coordinate file of positions, or a synthetic
    low-rank truth with a uniformly sampled mask.
    """
    if resolved["input"] is not None and resolved["mask"] is not None:
        truth = _load_dense_input(resolved)
        rows, cols, _, shape = read_coordinate(resolved["mask"])
        if shape != truth.shape:
            raise UsageError(
                f"mask shape {shape[0]} x {shape[1]} does not match the "
                f"{truth.shape[0]} x {truth.shape[1]} input")
        oracle = MaskedCompletion(rows, cols, truth[rows, cols], truth.shape)
        return oracle, truth
    if resolved["input"] is not None:
        loaded = load_matrixmarket(resolved["input"])
        if not isinstance(loaded, MaskedCompletion):
            raise UsageError(
                "completion from a dense array file needs --mask with the "
                "observed positions (or use a coordinate file of entries)")
        return loaded, None
    m = _require(resolved, "m", "for a synthetic completion problem")
    n = _require(resolved, "n", "for a synthetic completion problem")
    seed = _require(resolved, "seed", "for every synthetic run")
    sampling = _require(resolved, "sampling",
                        "to choose the observed fraction of a synthetic mask")
    rank = resolved["rank"] if resolved["rank"] is not None else resolved["p"]
    truth = synthetic_target(m, n, rank, resolved["noise"],
                             _substream(seed, _STREAM_TARGET))
    rows, cols = synthetic_mask(m, n, sampling, _substream(seed, _STREAM_MASK))
    oracle = MaskedCompletion(rows, cols, truth[rows, cols], (m, n))
    return oracle, truth


def held_out_rmse(product: np.ndarray, truth: np.ndarray,
                  oracle: MaskedCompletion) -> float | None:
    """Root-mean-square error over the unobserved cells, None if none."""
    held = np.ones(truth.shape, dtype=bool)
    held[oracle.rows, oracle.cols] = False
    count = int(held.sum())
    if count == 0:
        return None
    diff = (product - truth)[held]
    return float(np.sqrt(np.mean(diff * diff)))


def cmd_complete(args: argparse.Namespace) -> int:
    resolved = resolve_options(args, COMPLETE_DEFAULTS)
    p = _require(resolved, "p", "to choose the manifold rank")
    out = _require(resolved, "out", "to receive the convergence log")

    oracle, truth = _completion_data(resolved)
    m, n = oracle.shape
    resolved["m"], resolved["n"] = m, n

    geo = make_geometry(resolved["geometry"], m, n, p)
    start = spectral_initial_point(geo, oracle,
                                   perturbation=resolved["init_perturb"],
                                   rng=_init_rng(resolved))
    result = newton_run(geo, start, oracle, _newton_config(resolved))

    _write_text(out, format_log("complete", resolved, result))

    final = result.records[-1]
    print(f"status = {result.status}")
    print(f"observed entries = {oracle.observed_count} "
          f"({oracle.mask_fraction:.3f} of {m} x {n})")
    print(f"training objective = {final.f_value!r}")
    print(f"training grad norm = {final.grad_norm!r}")
    if truth is not None:
        rmse = held_out_rmse(result.point.product(), truth, oracle)
        if rmse is None:
            print("held-out RMSE = n/a (every entry observed)")
        else:
            print(f"held-out RMSE = {rmse!r}")
    return 0 if result.converged else 1


# -- verify ---------------------------------------------------------------------


def _parse_tolerance_overrides(pairs: Sequence[str] | None) -> dict[str, float]:
    overrides: dict[str, float] = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise UsageError(
                f"--tolerance expects PROPERTY=VALUE, got {pair!r}")
        try:
            overrides[name.strip()] = float(value)
        except ValueError as exc:
            raise UsageError(f"bad tolerance for {name.strip()!r}: {value!r}") from exc
    return overrides


def cmd_verify(args: argparse.Namespace) -> int:
    from .verify import format_report, run_verification

    resolved = resolve_options(args, VERIFY_DEFAULTS)
    overrides = _parse_tolerance_overrides(getattr(args, "tolerance", None))
    try:
        report = run_verification(trials=resolved["trials"],
                                  seed=resolved["seed"],
                                  tolerances=overrides or None)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = format_report(report) + "\n"
    sys.stdout.write(text)
    if resolved["out"] is not None:
        _write_text(resolved["out"], text)
    return 0 if report.passed else 1


# -- bench --------------------------------------------------------------------


def _bench_csv(rows: list[tuple[str, BenchRow]],
               comments: list[str]) -> str:
    lines = [f"# fixedrank = {__version__}", "# command = bench"]
    lines.extend(comments)
    lines.append("geometry,sweep,m,n,p,lift_ms,project_ms,connection_ms,total_ms")
    for sweep, row in rows:
        lines.append(",".join([
            row.geometry,
            sweep,
            str(row.m),
            str(row.n),
            str(row.p),
            f"{row.lift_ms:.6f}",
            f"{row.project_ms:.6f}",
            f"{row.connection_ms:.6f}",
            f"{row.total_ms:.6f}",
        ]))
    return "\n".join(lines) + "\n"


def cmd_bench(args: argparse.Namespace) -> int:
    resolved = resolve_options(args, BENCH_DEFAULTS)
    geometry = resolved["geometry"]
    seed = resolved["seed"]
    reps = resolved["reps"]

    explicit = [resolved[key] is not None for key in ("m", "n", "p")]
    if any(explicit) and not all(explicit):
        raise UsageError("a single-point bench needs all of --m, --n and --p")

    if all(explicit):
        row = time_kernels(geometry, resolved["m"], resolved["n"], resolved["p"],
                           seed=seed, reps=reps)
        _write_text(resolved["out"], _bench_csv([("point", row)], []))
        return 0

    size_rows = sweep_sizes(geometry, BENCH_SIZE_SWEEP, BENCH_SIZE_RANK,
                            seed=seed, reps=reps)
    rank_rows = sweep_ranks(geometry, BENCH_RANK_SHAPE[0], BENCH_RANK_SHAPE[1],
                            BENCH_RANK_SWEEP, seed=seed, reps=reps)
    size_exponent = fit_exponent([r.m + r.n for r in size_rows],
                                 [r.total_ms for r in size_rows])
    rank_exponent = fit_exponent([r.p for r in rank_rows],
                                 [r.total_ms for r in rank_rows])
    doubling = size_rows[-1].total_ms / size_rows[0].total_ms
    comments = [
        f"# size_doubling_ratio = {doubling:.4f}",
        f"# size_exponent = {size_exponent:.4f}",
        f"# rank_exponent = {rank_exponent:.4f}",
    ]
    rows = [("size", row) for row in size_rows]
    rows += [("rank", row) for row in rank_rows]
    _write_text(resolved["out"], _bench_csv(rows, comments))
    return 0


# -- parser ---------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value options file")
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--out", help="output file (default: stdout for "
                                      "verify and bench)")


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--geometry", choices=list(GEOMETRY_NAMES),
                        help="factor-space geometry (default balanced)")
    parser.add_argument("--m", type=int, help="row count")
    parser.add_argument("--n", type=int, help="column count")
    parser.add_argument("--p", type=int, help="manifold rank")


def _add_newton_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="MatrixMarket input file")
    parser.add_argument("--max-outer", type=int, dest="max_outer",
                        help="Newton iteration budget (default 50)")
    parser.add_argument("--grad-tol", type=float, dest="grad_tol",
                        help="gradient-norm stopping tolerance")
    parser.add_argument("--krylov-tol", type=float, dest="krylov_tol",
                        help="relative tolerance cap for the inner solves")
    parser.add_argument("--warmstart", type=int,
                        help="gradient steps before Newton")
    parser.add_argument("--damped", action=argparse.BooleanOptionalAction,
                        help="Armijo backtracking on the Newton step")
    parser.add_argument("--rank", type=int,
                        help="rank of the synthetic truth (default: dense "
                             "target for approx, p for complete)")
    parser.add_argument("--noise", type=float,
                        help="Gaussian noise level on the synthetic truth")
    parser.add_argument("--init-perturb", type=float, dest="init_perturb",
                        help="relative size of the random start perturbation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fixedrank",
        description="Riemannian Newton solvers on fixed-rank matrices.")
    parser.add_argument("--version", action="version",
                        version=f"fixedrank {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    verify = commands.add_parser(
        "verify", help="run the seeded geometry invariant battery")
    _add_common(verify)
    verify.add_argument("--trials", type=int,
                        help="trials per instance (default 25)")
    verify.add_argument("--tolerance", action="append", metavar="PROPERTY=VALUE",
                        help="override one property tolerance (repeatable)")

    approx = commands.add_parser(
        "approx", help="Newton on the dense approximation objective")
    _add_common(approx)
    _add_problem_flags(approx)
    _add_newton_flags(approx)

    complete = commands.add_parser(
        "complete", help="warm start plus Newton on observed entries")
    _add_common(complete)
    _add_problem_flags(complete)
    _add_newton_flags(complete)
    complete.add_argument("--mask", help="coordinate file of observed positions "
                                         "over the dense --input")
    complete.add_argument("--sampling", type=float,
                          help="observed fraction for a synthetic mask")

    bench = commands.add_parser(
        "bench", help="time the lift/project/connection kernels")
    _add_common(bench)
    _add_problem_flags(bench)
    bench.add_argument("--reps", type=int,
                       help="timing repetitions per kernel (default 5)")
    return parser


_DISPATCH = {
    "verify": cmd_verify,
    "approx": cmd_approx,
    "complete": cmd_complete,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse has already printed its message; fold --help/--version
        # onto success and flag errors onto the usage exit code
        return 0 if exc.code in (0, None) else 2
    try:
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MatrixMarketError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FixedRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
