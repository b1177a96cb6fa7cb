"""Command line runner: depth sweeps over built-in problems plus a self test.

``sgprew run`` (the default command) sweeps ``t_max`` over a range, solves
the chosen problem at each depth, and writes a CSV table plus a JSON report
mirroring the solve reports.  ``t_max`` is the table-row convention of the
convergence studies; internally the sparse grid depth is ``n = t_max - 1``.

Exit codes: 0 on success, 1 on solver failure (partial CSV is kept),
2 on configuration errors.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import problems, solver
from .grid import sparse_dof

FLOAT_FMT = "{:.5e}"
CSV_COLUMNS = ("t_max", "dof", "e_inf", "ratio_inf", "e_2", "ratio_2",
               "kappa", "kappa_precond", "iterations", "seconds")

_RUN_DEFAULTS = {
    "problem": "poisson3d_cube",
    "dim": None,
    "tmax": "2..6",
    "quad_order": None,
    "rhs_mode": "quadrature",
    "tol": 1e-10,
    "max_iter": 500,
    "threads": 1,
    "output": ".",
    "format": "both",
    "seed": 0,
    "dry_run": False,
    "redact_timings": False,
    "kappa_probe_iters": 60,
    "kappa_dense_limit": 600,
}


class ConfigError(Exception):
    pass


def _parse_tmax(spec):
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            lo, hi = int(lo), int(hi)
        else:
            lo = hi = int(spec)
    except ValueError as exc:
        raise ConfigError(f"bad --tmax value {spec!r}") from exc
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad --tmax range {spec!r}")
    return list(range(lo, hi + 1))


def _float_or_blank(x):
    if x is None or not np.isfinite(x):
        return ""
    return FLOAT_FMT.format(x)


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def _build_run_parser():
    p = argparse.ArgumentParser(
        prog="sgprew", description="sparse-grid prewavelet solver runs"
    )
    p.add_argument("--config", type=str, default=None,
                   help="JSON file with defaults for any flag")
    p.add_argument("--problem", type=str,
                   help="one of: " + ", ".join(problems.builtin_names()))
    p.add_argument("--dim", type=int, help="dimension override for debug problems")
    p.add_argument("--tmax", type=str, help="sweep range A..B (or single A)")
    p.add_argument("--quad-order", dest="quad_order", type=int,
                   help="operator quadrature points per direction")
    p.add_argument("--rhs-mode", dest="rhs_mode",
                   choices=("quadrature", "interpolation"))
    p.add_argument("--tol", type=float, help="relative residual tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--output", type=str, help="output directory")
    p.add_argument("--format", choices=("csv", "json", "both"))
    p.add_argument("--seed", type=int, help="seed for randomized self tests")
    p.add_argument("--dry-run", dest="dry_run", action="store_const", const=True)
    p.add_argument("--redact-timings", dest="redact_timings",
                   action="store_const", const=True,
                   help="write zero seconds for byte-reproducible CSV output")
    p.add_argument("--kappa-probe-iters", dest="kappa_probe_iters", type=int,
                   help="cap for the unpreconditioned condition probe (0 = off)")
    p.add_argument("--kappa-dense-limit", dest="kappa_dense_limit", type=int,
                   help="use dense eigensolves for condition numbers up to this DOF")
    return p


def _merge_config(args):
    cfg = dict(_RUN_DEFAULTS)
    if args.config is not None:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        unknown = set(file_cfg) - set(_RUN_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in _RUN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def run(argv):
    parser = _build_run_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        tmaxes = _parse_tmax(cfg["tmax"])
        problem = problems.builtin(cfg["problem"], dim=cfg["dim"])
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if cfg["dry_run"]:
        print(f"plan: problem={problem.name} d={problem.d} "
              f"rhs_mode={cfg['rhs_mode']} tol={cfg['tol']:g}")
        for tmax in tmaxes:
            print(f"  t_max={tmax} n={tmax - 1} "
                  f"dof={sparse_dof(tmax - 1, problem.d)}")
        print("dry run: nothing written")
        return 0

    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{problem.name}.csv"
    json_path = outdir / f"{problem.name}.json"
    write_csv = cfg["format"] in ("csv", "both")
    write_json = cfg["format"] in ("json", "both")

    rows = []
    status = 0
    prev_inf = prev_2 = None
    csv_fh = open(csv_path, "w") if write_csv else None
    try:
        if csv_fh:
            csv_fh.write(",".join(CSV_COLUMNS) + "\n")
            csv_fh.flush()
        for tmax in tmaxes:
            n = tmax - 1
            t0 = time.perf_counter()
            try:
                x, report, op = solver.solve(
                    problem, n,
                    q=cfg["quad_order"],
                    rhs_mode=cfg["rhs_mode"],
                    tol=cfg["tol"],
                    max_iter=cfg["max_iter"],
                    threads=cfg["threads"],
                    kappa_dense_limit=cfg["kappa_dense_limit"],
                    kappa_probe_iters=cfg["kappa_probe_iters"],
                )
            except (ValueError, FloatingPointError) as exc:
                print(f"solver failure at t_max={tmax}: {exc}", file=sys.stderr)
                status = 1
                break
            e_inf = e_2 = None
            if problem.u_exact is not None:
                e_inf, e_2 = problems.error_norms(x, problem, n)
            seconds = time.perf_counter() - t0
            if cfg["redact_timings"]:
                seconds = 0.0
            ratio_inf = None if (prev_inf is None or not e_inf) else prev_inf / e_inf
            ratio_2 = None if (prev_2 is None or not e_2) else prev_2 / e_2
            prev_inf, prev_2 = e_inf, e_2
            row = {
                "t_max": tmax,
                "dof": report.dof,
                "e_inf": _finite_or_none(e_inf),
                "ratio_inf": _finite_or_none(ratio_inf),
                "e_2": _finite_or_none(e_2),
                "ratio_2": _finite_or_none(ratio_2),
                "kappa": _finite_or_none(report.kappa_operator),
                "kappa_precond": _finite_or_none(report.kappa_preconditioned),
                "iterations": report.iterations,
                "converged": report.converged,
                "relative_residual": report.relative_residual,
                "seconds": seconds,
                "timings": {} if cfg["redact_timings"] else report.seconds,
            }
            rows.append(row)
            if csv_fh:
                csv_fh.write(",".join([
                    str(tmax), str(report.dof),
                    _float_or_blank(row["e_inf"]), _float_or_blank(row["ratio_inf"]),
                    _float_or_blank(row["e_2"]), _float_or_blank(row["ratio_2"]),
                    _float_or_blank(row["kappa"]),
                    _float_or_blank(row["kappa_precond"]),
                    str(report.iterations), FLOAT_FMT.format(seconds),
                ]) + "\n")
                csv_fh.flush()
            if not report.converged:
                print(f"solver did not converge at t_max={tmax} "
                      f"(relres={report.relative_residual:.2e})", file=sys.stderr)
                status = 1
                break
    finally:
        if csv_fh:
            csv_fh.close()
    if write_json:
        payload = {
            "problem": problem.name,
            "dimension": problem.d,
            "config": {k: cfg[k] for k in sorted(_RUN_DEFAULTS)},
            "rows": rows,
        }
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2, allow_nan=False)
            fh.write("\n")
    return status


# -- self test ------------------------------------------------------------------

def _suite_roundtrip(rng):
    from . import transform
    from .grid import block_shape, complement_view, iterate_levels
    worst = 0.0
    for d, n in ((2, 4), (3, 3)):
        coeffs = {}
        for t in iterate_levels(n, d):
            arr = np.zeros(block_shape(t))
            complement_view(arr)[...] = rng.standard_normal(
                complement_view(arr).shape)
            coeffs[t] = arr
        vals = transform.reconstruct_arrays(coeffs, n, d)
        back = transform.decompose_arrays(vals, n, d)
        scale = max(np.max(np.abs(coeffs[t])) for t in coeffs)
        worst = max(worst, max(
            np.max(np.abs(back[t] - coeffs[t])) for t in coeffs) / scale)
    return worst <= 1e-12, f"max rel deviation {worst:.2e}"


def _suite_orthogonality(rng, corrupt=False):
    from .basis1d import exact_1d_integral, prewavelet_pattern
    patterns = None
    if corrupt:
        bad = dict(prewavelet_pattern(2, 3))
        first = min(bad)
        bad[first] = bad[first] + 1e-3
        patterns = {(2, 3): bad}
    worst = 0.0
    for t in range(0, 5):
        for t2 in range(t + 1, 6):
            idx = range(1, 2 ** (t + 1), 2) if t else (1,)
            idx2 = range(1, 2 ** (t2 + 1), 2) if t2 else (1,)
            for i in idx:
                for i2 in idx2:
                    val = abs(float(exact_1d_integral(
                        t, i, t2, i2, "mass", patterns=patterns)))
                    worst = max(worst, val)
    return worst <= 1e-14, f"max cross-level mass {worst:.2e}"


def _suite_oracle(rng):
    from .matvec import SemiOrthogonalOperator, assemble_dense
    from .operator import CoefficientField
    n, d = 3, 2
    coeff = CoefficientField.constant(d, 1.0, 0.0)
    op = SemiOrthogonalOperator(n, d, coeff)
    dense = assemble_dense(n, d, coeff)
    norm = np.linalg.norm(dense, "fro")
    worst = 0.0
    for _ in range(5):
        x = rng.standard_normal(dense.shape[0])
        err = np.linalg.norm(op.apply(x) - dense @ x)
        worst = max(worst, err / (norm * np.linalg.norm(x)))
    return worst <= 1e-12, f"max rel deviation {worst:.2e}"


def _suite_lemma1(rng):
    from .grid import complement_size, iterate_levels, level_max
    from .matvec import dense_constant_exact
    n, d = 3, 2
    full = dense_constant_exact(n, d, (1.0, 0.5), 0.7, enforce_cutoff=False)
    scale = np.abs(np.diag(full)).max()
    levels = iterate_levels(n, d)
    sizes = [int(np.prod([complement_size(k) for k in t])) for t in levels]
    offs = np.cumsum([0] + sizes)
    worst = 0.0
    for a, t in enumerate(levels):
        for b, t2 in enumerate(levels):
            if sum(level_max(t, t2)) > n:
                blk = full[offs[a]:offs[a + 1], offs[b]:offs[b + 1]]
                worst = max(worst, np.abs(blk).max())
    return worst <= 1e-12 * scale, f"max cut entry {worst:.2e} (scale {scale:.2e})"


_SUITES = {
    "roundtrip": _suite_roundtrip,
    "orthogonality": _suite_orthogonality,
    "oracle": _suite_oracle,
    "lemma1": _suite_lemma1,
}


def selftest(argv):
    parser = argparse.ArgumentParser(prog="sgprew selftest")
    parser.add_argument("--suite", choices=sorted(_SUITES), default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--corrupt-prewavelet", action="store_true",
                        help=argparse.SUPPRESS)   # fault injection hook
    args = parser.parse_args(argv)
    names = [args.suite] if args.suite else sorted(_SUITES)
    failures = 0
    for name in names:
        rng = np.random.default_rng(args.seed)
        if name == "orthogonality":
            ok, detail = _SUITES[name](rng, corrupt=args.corrupt_prewavelet)
        else:
            ok, detail = _SUITES[name](rng)
        print(f"{name:<14} {'PASS' if ok else 'FAIL'}  {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "selftest":
        return selftest(argv[1:])
    if argv and argv[0] == "run":
        argv = argv[1:]
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
