"""Command-line driver: ``myopic-tv generate | solve | compare``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 numerical abort.
"""

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from ._validation import ContractViolation, NumericalError, ParameterError, as_grid
from .admm import SolverConfig, solve, write_records_csv
from .bcd import BcdConfig
from .io import load_problem, read_meta, save_problem, write_meta, write_pgm
from .lap import LapConfig
from .problems import make_problem

__all__ = ["main", "build_parser", "cmd_generate", "cmd_solve", "cmd_compare",
           "TABLE_COLUMNS"]

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

TABLE_COLUMNS = ("#iter", "RelErr x", "RelErr w", "Time/s", "SNR")

log = logging.getLogger("myopic_tv")


class UsageError(Exception):
    pass


def _weights(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be comma-separated numbers: {text!r}")


def _beta(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"beta must be 'auto' or a number: {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="myopic-tv", description="TV-regularized myopic deconvolution.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic problem bundle")
    gen.add_argument("--n", type=int, default=32)
    gen.add_argument("--psf", action="append", required=True,
                     help="kernel spec, e.g. gauss:2 or gauss:2+defocus:4 (repeat per PSF)")
    gen.add_argument("--weights", type=_weights, required=True)
    gen.add_argument("--noise", type=float, default=0.01)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--kind", choices=("cells", "checkerboard"), default="cells")
    gen.add_argument("--out", required=True)

    sol = sub.add_parser("solve", help="restore a bundle with ADMM-LAP or ADMM-BCD")
    sol.add_argument("--in", dest="bundle", required=True)
    sol.add_argument("--method", choices=("lap", "bcd"), required=True)
    sol.add_argument("--out", help="run directory (default: <bundle>/<method>)")
    sol.add_argument("--mu", type=float, default=5e4)
    sol.add_argument("--beta", type=_beta, default="auto")
    sol.add_argument("--xi", type=float, default=100.0)
    sol.add_argument("--epsilon", type=float, default=1e-2)
    sol.add_argument("--a", type=float, default=1.0)
    sol.add_argument("--max-outer", type=int, default=50)
    sol.add_argument("--inner-max-iter", type=int, default=10)
    sol.add_argument("--bcd-cycles", type=int, default=3)
    sol.add_argument("--cg-tol", type=float, default=1e-1)
    sol.add_argument("--cg-max-iter", type=int, default=50)
    sol.add_argument("--seed", type=int, default=0)

    cmp_ = sub.add_parser("compare", help="tabulate finished runs")
    cmp_.add_argument("runs", nargs="+", help="run directories (each with manifest.txt)")
    cmp_.add_argument("--out", help="also write the table as CSV")
    return parser


def cmd_generate(args):
    if len(args.weights) != len(args.psf):
        raise ParameterError(
            f"got {len(args.weights)} weights for {len(args.psf)} PSFs")
    if abs(sum(args.weights) - 1.0) > 1e-9:
        raise ParameterError(
            f"weights must sum to 1 (got {sum(args.weights):.6g})")
    problem = make_problem(args.kind, args.n, args.psf, args.weights, args.noise, args.seed)
    save_problem(problem, args.out)
    print(f"wrote bundle {args.out} (n={args.n}, p={len(args.psf)})")
    return EXIT_OK


def _solver_config(args):
    common = dict(cg_tol=args.cg_tol, cg_max_iter=args.cg_max_iter,
                  inner_max_iter=args.inner_max_iter)
    inner = (BcdConfig(bcd_cycles=args.bcd_cycles, **common) if args.method == "bcd"
             else LapConfig(**common))
    return SolverConfig(mu=args.mu, beta=args.beta, xi=args.xi, epsilon=args.epsilon,
                        a=args.a, max_outer=args.max_outer, inner_kind=args.method,
                        inner=inner, seed=args.seed)


def cmd_solve(args):
    problem = load_problem(args.bundle)
    try:
        config = _solver_config(args)
    except ValueError as exc:
        raise ParameterError(str(exc)) from None
    out = args.out or os.path.join(args.bundle, args.method)
    os.makedirs(out, exist_ok=True)
    manifest = {
        "bundle": os.path.abspath(args.bundle),
        "method": args.method,
        "mu": config.mu,
        "beta_requested": config.beta,
        "xi": config.xi,
        "epsilon": config.epsilon,
        "a": config.a,
        "max_outer": config.max_outer,
        "inner_max_iter": config.inner.inner_max_iter,
        "bcd_cycles": args.bcd_cycles,
        "cg_tol": config.inner.cg_tol,
        "cg_max_iter": config.inner.cg_max_iter,
        "seed": config.seed,
    }
    t0 = time.perf_counter()
    try:
        result = solve(problem.fam, problem.d, config,
                       x_true=problem.x_true, w_true=problem.w_true)
    except (NumericalError, ContractViolation) as exc:
        manifest.update(status="failed", diagnostic=f"{type(exc).__name__}: {exc}",
                        seconds=time.perf_counter() - t0)
        write_meta(os.path.join(out, "manifest.txt"), manifest)
        raise
    seconds = time.perf_counter() - t0
    last = result.records[-1]
    n = problem.n
    paths = {
        "x_hat_pgm": os.path.join(out, "x_hat.pgm"),
        "x_hat_npy": os.path.join(out, "x_hat.npy"),
        "w_hat": os.path.join(out, "w_hat.txt"),
        "convergence": os.path.join(out, "convergence.csv"),
    }
    x_grid = as_grid(result.x, n)
    lo, hi = write_pgm(paths["x_hat_pgm"], x_grid)
    np.save(paths["x_hat_npy"], x_grid)
    with open(paths["w_hat"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(repr(float(v)) for v in result.w) + "\n")
    write_records_csv(result.records, paths["convergence"])
    manifest.update(
        status="ok",
        beta=result.beta,
        converged=result.converged,
        iterations=result.iterations,
        relerr_x=last.relerr_x,
        relerr_w=last.relerr_w,
        snr=last.snr,
        w_hat=list(result.w),
        weight_sum=float(result.w.sum()),
        total_ffts=sum(r.ffts for r in result.records),
        x_hat_min=lo,
        x_hat_max=hi,
        seconds=seconds,
        **{f"output_{k}": os.path.basename(v) for k, v in paths.items()},
    )
    write_meta(os.path.join(out, "manifest.txt"), manifest)
    print(f"{args.method}: {result.iterations} iterations, RelErr x {last.relerr_x:.4f}, "
          f"SNR {last.snr:.2f} dB, beta {result.beta:.4g} -> {out}")
    return EXIT_OK


def _table_row(run):
    path = os.path.join(run, "manifest.txt")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no manifest in {run!r}")
    meta = read_meta(path)
    if meta.get("status") != "ok":
        raise ParameterError(f"run {run!r} did not finish (status {meta.get('status')})")
    # leading method label is printed but not part of the table columns
    return [meta["method"], int(meta["iterations"]), float(meta["relerr_x"]),
            float(meta["relerr_w"]), float(meta["seconds"]), float(meta["snr"])]


def cmd_compare(args):
    if len(args.runs) < 2:
        raise UsageError("compare needs at least two runs")
    rows = [_table_row(run) for run in args.runs]
    print("{:<8} {:>6} {:>10} {:>10} {:>8} {:>8}".format("method", *TABLE_COLUMNS))
    for row in rows:
        print("{:<8} {:>6d} {:>10.4f} {:>10.4f} {:>8.2f} {:>8.2f}".format(*row))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_COLUMNS)
            for row in rows:
                writer.writerow([row[1]] + [repr(v) for v in row[2:]])
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "compare": cmd_compare}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ContractViolation, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
