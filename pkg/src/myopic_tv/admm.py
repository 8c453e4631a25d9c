"""Outer ADMM loop for TV-regularized myopic deconvolution.

The splitting ``y = D x`` gives the augmented Lagrangian

    L(x, w, y, lam) = mu/2 ||A(w) x - d||^2 + S(w)
                      + sum_i ||y_i|| - lam_i^T (y_i - D_i x) + beta/2 ||y_i - D_i x||^2

(plus indicator terms for ``x >= 0, w >= 0``, which are kept at zero by
construction). Each outer iteration shrinks ``y`` in closed form, solves
the (x, w) subproblem inexactly with LAP or BCD to tolerance
``1 / (a (k+1)^2)``, then updates the multiplier.
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from ._validation import (
    ContractViolation,
    NumericalError,
    ParameterError,
    check_image,
    check_positive,
    check_vector,
)
from .bcd import BcdConfig, bcd_solve_subproblem
from .lap import LapConfig, Subproblem, lap_solve_subproblem, projected_gradient
from .linops import DiffOperator, diff_apply, normal_apply
from .problems import rel_err, snr
from .regularizers import shrink_y

__all__ = [
    "SolverConfig",
    "AdmmState",
    "IterationRecord",
    "SolveResult",
    "CSV_COLUMNS",
    "auto_beta",
    "inner_tolerance",
    "augmented_lagrangian",
    "admm_step",
    "solve",
    "descent_monitor",
    "write_records_csv",
    "read_records_csv",
]

log = logging.getLogger(__name__)

INNER_KINDS = ("lap", "bcd")


@dataclass
class SolverConfig:
    """Parameters of one ADMM solve.

    ``beta="auto"`` picks ``beta_factor * lambda_max(A(w0)^T A(w0))``,
    estimated with ``power_iters`` power iterations.
    """

    mu: float = 5e4
    beta: object = "auto"
    xi: float = 100.0
    epsilon: float = 1e-2
    a: float = 1.0
    max_outer: int = 50
    inner_kind: str = "lap"
    inner: LapConfig = None
    seed: int = 0
    beta_factor: float = 10.0
    power_iters: int = 20

    def __post_init__(self):
        for name in ("mu", "xi", "epsilon", "a", "beta_factor"):
            check_positive(getattr(self, name), name)
        if self.beta != "auto":
            check_positive(self.beta, "beta")
        if int(self.max_outer) < 1:
            raise ParameterError("max_outer must be >= 1")
        if self.inner_kind not in INNER_KINDS:
            raise ParameterError(
                f"inner_kind must be one of {INNER_KINDS}, got {self.inner_kind!r}")
        if self.inner is None:
            self.inner = BcdConfig() if self.inner_kind == "bcd" else LapConfig()
        if self.inner_kind == "bcd" and not isinstance(self.inner, BcdConfig):
            self.inner = BcdConfig(**{f.name: getattr(self.inner, f.name)
                                      for f in fields(LapConfig)})


@dataclass
class AdmmState:
    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    k: int = 0
    eta_x: np.ndarray = None

    def check(self, n, p):
        check_vector(self.y, 2 * n * n, "y")
        check_image(self.x, n)
        check_vector(self.w, p, "w")
        check_vector(self.lam, 2 * n * n, "lambda")
        if np.any(self.x < 0) or np.any(self.w < 0):
            raise ContractViolation("state is infeasible (negative x or w)")


@dataclass
class IterationRecord:
    """Log of one outer iteration.

    ``phi`` is the subproblem objective reached by the inner solver (with
    the old multiplier); ``lagrangian`` is ``L`` at the updated state and
    drives the stopping rule.
    """

    iter: int
    phi: float
    lagrangian: float
    rel_change: float
    inner_iters: int
    inner_residual: float
    inner_tol: float
    ffts: int
    seconds: float
    allowance: float
    stagnated: bool = False
    relerr_x: float = None
    relerr_w: float = None
    snr: float = None
    weight_sum: float = None
    inner_phi_start: float = None
    inner_diagnostics: list = field(default_factory=list, repr=False)


CSV_COLUMNS = ("iter", "phi", "lagrangian", "relerr_x", "relerr_w", "snr",
               "inner_iters", "ffts", "seconds")


@dataclass
class SolveResult:
    x: np.ndarray
    w: np.ndarray
    state: AdmmState
    records: list
    beta: float
    converged: bool
    lagrangian0: float

    @property
    def iterations(self):
        return len(self.records)


def auto_beta(fam, w0, factor=10.0, n_iter=20, seed=0):
    """``factor`` times a power-iteration estimate of ``lambda_max(A^T A)``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(fam.n**2)
    v /= np.linalg.norm(v)
    lam_max = 0.0
    for _ in range(n_iter):
        u = normal_apply(fam, w0, v)
        lam_max = float(v @ u)
        norm = np.linalg.norm(u)
        if norm == 0:
            break
        v = u / norm
    return factor * lam_max


def inner_tolerance(k, a):
    """Summable schedule ``1 / (a (k+1)^2)`` for outer iteration ``k``."""
    return 1.0 / (a * (k + 1) ** 2)


def augmented_lagrangian(state, fam, d, config, beta, D=None):
    """``L`` at a feasible state (indicator terms are zero)."""
    state.check(fam.n, fam.p)
    sub = Subproblem(fam, d, state.y, state.lam, beta, config.mu, config.xi, D)
    return sub.phi(state.x, state.w)


def _ground_truth_metrics(x, w, x_true, w_true):
    out = {}
    if x_true is not None:
        out["relerr_x"] = rel_err(x, x_true)
        out["snr"] = snr(x, x_true)
    if w_true is not None:
        out["relerr_w"] = rel_err(w, w_true)
    return out


def admm_step(state, fam, d, config, beta, D=None, x_true=None, w_true=None,
              previous=None):
    """One outer iteration; returns ``(new_state, IterationRecord)``.

    ``previous`` is ``L`` at ``state``; when omitted it is recomputed.
    """
    t0 = time.perf_counter()
    D = D or DiffOperator(fam.n)
    ffts0 = fam.fft_count
    if previous is None:
        previous = augmented_lagrangian(state, fam, d, config, beta, D)
    y_new = shrink_y(diff_apply(D, state.x), state.lam, beta)
    sub = Subproblem(fam, d, y_new, state.lam, beta, config.mu, config.xi, D)
    tol = inner_tolerance(state.k, config.a)
    solver = bcd_solve_subproblem if config.inner_kind == "bcd" else lap_solve_subproblem
    inner = solver(sub, state.x, state.w, tol, config.inner)
    lam_new = state.lam - beta * (y_new - diff_apply(D, inner.x))
    ev = inner.evaluation
    eta_x = projected_gradient(ev.x, ev.w, ev.grad_x, ev.grad_w)[0]
    prev_eta = state.eta_x if state.eta_x is not None else np.zeros_like(eta_x)
    new_state = AdmmState(y_new, inner.x, inner.w, lam_new, state.k + 1, eta_x)
    lagr = Subproblem(fam, d, y_new, lam_new, beta, config.mu, config.xi, D).phi(
        inner.x, inner.w)
    if not math.isfinite(lagr):
        raise NumericalError(f"non-finite augmented Lagrangian at iteration {state.k + 1}")
    if lagr == previous:
        change = 0.0
    else:
        change = abs(lagr - previous) / abs(previous) if previous != 0 else math.inf
    delta = eta_x - prev_eta
    record = IterationRecord(
        iter=state.k + 1,
        phi=inner.evaluation.phi,
        lagrangian=lagr,
        rel_change=change,
        inner_iters=inner.iterations,
        inner_residual=inner.residual,
        inner_tol=tol,
        ffts=fam.fft_count - ffts0,
        seconds=time.perf_counter() - t0,
        allowance=2.0 / beta * float(delta @ delta),
        stagnated=inner.stagnated,
        weight_sum=float(inner.w.sum()),
        inner_phi_start=inner.phi_start,
        inner_diagnostics=inner.diagnostics,
        **_ground_truth_metrics(inner.x, inner.w, x_true, w_true),
    )
    return new_state, record


def initial_state(fam, config, x0=None, w0=None, D=None):
    """Seeded uniform random ``x0``, uniform ``w0``, ``y0 = D x0``, ``lam0 = 0``."""
    D = D or DiffOperator(fam.n)
    if x0 is None:
        x0 = np.random.default_rng(config.seed).uniform(0.0, 1.0, fam.n**2)
    x0 = check_image(x0, fam.n).copy()
    w0 = np.full(fam.p, 1.0 / fam.p) if w0 is None else check_vector(w0, fam.p, "w0").copy()
    return AdmmState(diff_apply(D, x0), x0, w0, np.zeros(2 * fam.n**2), 0)


def solve(fam, d, config=None, x0=None, w0=None, x_true=None, w_true=None,
          callback=None):
    """Run ADMM until the relative change of ``L`` drops below ``epsilon``.

    Parameters
    ----------
    fam : BlurFamily
        Known kernels. An instrumented copy is used internally so FFT counts
        in the records refer to this solve only.
    d : array_like
        Observed image, flat column-major or ``(n, n)``.
    config : SolverConfig, optional
    x0, w0 : array_like, optional
        Initial guesses; defaults are described in :func:`initial_state`.
    x_true, w_true : array_like, optional
        Ground truth, used only to fill the error columns of the records.
    callback : callable, optional
        Called as ``callback(state, record)`` after every iteration.
    """
    config = config or SolverConfig()
    fam = fam.instrumented()
    d = check_image(d, fam.n, "d")
    D = DiffOperator(fam.n)
    state = initial_state(fam, config, x0, w0, D)
    state.check(fam.n, fam.p)
    beta = (auto_beta(fam, state.w, config.beta_factor, config.power_iters, config.seed)
            if config.beta == "auto" else float(config.beta))
    if not beta > 0:
        raise NumericalError(f"auto-selected beta is not positive ({beta})")
    if x_true is not None:
        x_true = check_image(x_true, fam.n, "x_true")

    lagr = augmented_lagrangian(state, fam, d, config, beta, D)
    if not math.isfinite(lagr):
        raise NumericalError("non-finite augmented Lagrangian at the initial point")
    lagrangian0 = lagr
    records = []
    converged = False
    for _ in range(config.max_outer):
        state, rec = admm_step(state, fam, d, config, beta, D, x_true, w_true, lagr)
        records.append(rec)
        lagr = rec.lagrangian
        log.debug("iter %d L=%.6e change=%.3e inner=%d res=%.3e",
                  rec.iter, rec.lagrangian, rec.rel_change, rec.inner_iters,
                  rec.inner_residual)
        if callback is not None:
            callback(state, rec)
        if rec.rel_change < config.epsilon:
            converged = True
            break
    return SolveResult(state.x, state.w, state, records, beta, converged, lagrangian0)


def descent_monitor(records, rtol=1e-10):
    """Indices ``k`` where ``L`` rose by more than the record's allowance.

    The allowance is ``2/beta ||eta_x^{k+1} - eta_x^k||^2`` with ``eta_x``
    the image part of the inner residual. Records must carry
    ``lagrangian`` and ``allowance``.
    """
    bad = []
    for k in range(1, len(records)):
        prev = _field(records[k - 1], "lagrangian")
        cur = _field(records[k], "lagrangian")
        allow = _field(records[k], "allowance")
        if cur - prev > allow + rtol * max(abs(prev), abs(cur)):
            bad.append(k)
    return bad


def _field(rec, name):
    return rec[name] if isinstance(rec, dict) else getattr(rec, name)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_records_csv(records, path):
    """One row per outer iteration with the columns in ``CSV_COLUMNS``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(_field(rec, c)) for c in CSV_COLUMNS])


def read_records_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {}
        for key, val in row.items():
            if val == "":
                parsed[key] = None
            elif key in ("iter", "inner_iters", "ffts"):
                parsed[key] = int(val)
            else:
                parsed[key] = float(val)
        out.append(parsed)
    return out
