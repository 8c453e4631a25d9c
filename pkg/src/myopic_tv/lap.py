"""Projected LAP solver for the coupled (x, w) subproblem.

For fixed ``y`` and ``lam`` the subproblem minimizes over ``x >= 0, w >= 0``

    Phi(x, w) = mu/2 ||A(w) x - d||^2 + S(w) + R(x, y, lam).

One iteration linearizes the residual in both blocks, eliminates the
``w`` block on the inactive set (a ``p x p`` dense solve), solves the
remaining image-space system with CG, takes a scaled projected-gradient
step on the active set and finishes with a projected Armijo search.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    NumericalError,
    check_fraction,
    check_image,
    check_nonnegative,
    check_vector,
)
from .linops import DiffOperator, blur_adjoint, blur_apply, normal_apply
from .regularizers import r_gradient, r_hessian_apply, r_value, s_value_grad_hess

__all__ = [
    "LapConfig",
    "Subproblem",
    "Evaluation",
    "ActiveSetPartition",
    "LapContext",
    "LineSearchResult",
    "InnerResult",
    "conjugate_gradient",
    "projected_gradient",
    "partition_sets",
    "reduced_matvec",
    "reduced_rhs",
    "solve_reduced",
    "eliminate_dw",
    "active_step",
    "combine_steps",
    "projected_armijo",
    "lap_step",
    "lap_solve_subproblem",
]

MAX_CONDITION = 1e12


@dataclass
class LapConfig:
    cg_tol: float = 1e-1
    cg_max_iter: int = 50
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_max_backtracks: int = 20
    inner_max_iter: int = 10

    def __post_init__(self):
        check_fraction(self.armijo_c, "armijo_c")
        check_fraction(self.armijo_shrink, "armijo_shrink")
        for name in ("cg_max_iter", "armijo_max_backtracks"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if int(self.inner_max_iter) < 0:
            raise ValueError("inner_max_iter must be >= 0")
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be positive")


def _check_finite(phi, *grads):
    if not np.isfinite(phi):
        raise NumericalError(f"non-finite subproblem objective ({phi})")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericalError("non-finite subproblem gradient")


class Subproblem:
    """The objective ``Phi(., ., y, lam)`` of one ADMM inner solve."""

    def __init__(self, fam, d, y, lam, beta, mu, xi, D=None):
        self.fam = fam
        self.D = D if D is not None else DiffOperator(fam.n)
        self.d = check_image(d, fam.n, "d")
        self.y = check_vector(y, 2 * fam.n**2, "y")
        self.lam = check_vector(lam, 2 * fam.n**2, "lambda")
        self.beta = float(beta)
        self.mu = float(mu)
        self.xi = float(xi)

    def phi(self, x, w):
        r = blur_apply(self.fam, w, x) - self.d
        s_val = s_value_grad_hess(w, self.xi)[0]
        return 0.5 * self.mu * (r @ r) + s_val + r_value(
            x, self.y, self.lam, self.beta, self.D)

    def evaluate(self, x, w):
        fam = self.fam
        x = check_image(x, fam.n)
        w = check_vector(w, fam.p, "w")
        x_hat = fam.fft(x)
        cols = np.column_stack([fam.ifft(h * x_hat) for h in fam.transforms])
        r = cols @ w - self.d
        a_t_r = blur_adjoint(fam, w, r)
        jw_t_r = cols.T @ r
        grad_r = r_gradient(x, self.y, self.lam, self.beta, self.D)
        s_val, s_grad, s_hess = s_value_grad_hess(w, self.xi)
        phi = 0.5 * self.mu * (r @ r) + s_val + r_value(
            x, self.y, self.lam, self.beta, self.D)
        grad_x = self.mu * a_t_r + grad_r
        grad_w = self.mu * jw_t_r + s_grad
        _check_finite(phi, grad_x, grad_w)
        return Evaluation(
            x=x, w=w, x_hat=x_hat, cols=cols, r=r, a_t_r=a_t_r, jw_t_r=jw_t_r,
            grad_r=grad_r, s_grad=s_grad, s_hess=s_hess, phi=phi,
            grad_x=grad_x, grad_w=grad_w)

    def evaluate_x(self, x, w):
        """Objective and image gradient only, with ``w`` held fixed."""
        fam = self.fam
        x = check_image(x, fam.n)
        w = check_vector(w, fam.p, "w")
        x_hat = fam.fft(x)
        r = fam.ifft(fam.transfer(w) * x_hat) - self.d
        a_t_r = blur_adjoint(fam, w, r)
        grad_r = r_gradient(x, self.y, self.lam, self.beta, self.D)
        phi = 0.5 * self.mu * (r @ r) + s_value_grad_hess(w, self.xi)[0] + r_value(
            x, self.y, self.lam, self.beta, self.D)
        grad_x = self.mu * a_t_r + grad_r
        _check_finite(phi, grad_x)
        return Evaluation(
            x=x, w=w, phi=phi, grad_x=grad_x,
            grad_w=np.zeros(fam.p), r=r, x_hat=x_hat, a_t_r=a_t_r, grad_r=grad_r)


@dataclass
class Evaluation:
    """Objective value, residual and gradient pieces at one iterate."""

    x: np.ndarray
    w: np.ndarray
    phi: float
    grad_x: np.ndarray
    grad_w: np.ndarray
    r: np.ndarray = None
    x_hat: np.ndarray = None
    cols: np.ndarray = None
    a_t_r: np.ndarray = None
    jw_t_r: np.ndarray = None
    grad_r: np.ndarray = None
    s_grad: np.ndarray = None
    s_hess: np.ndarray = None


def projected_gradient(x, w, grad_x, grad_w):
    """Gradient with components pushing into an active bound zeroed."""
    qx = np.where((x > 0) | (grad_x < 0), grad_x, 0.0)
    qw = np.where((w > 0) | (grad_w < 0), grad_w, 0.0)
    return qx, qw


def residual_norm(ev):
    qx, qw = projected_gradient(ev.x, ev.w, ev.grad_x, ev.grad_w)
    return float(np.sqrt(qx @ qx + qw @ qw))


def conjugate_gradient(matvec, b, tol, max_iter):
    """CG from a zero start for a symmetric positive semidefinite operator.

    Returns ``(x, info)`` where ``info`` holds ``iterations``,
    ``rel_residual`` and ``converged``. Negative curvature beyond round-off
    raises :class:`NumericalError`.
    """
    x = np.zeros_like(b)
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return x, {"iterations": 0, "rel_residual": 0.0, "converged": True}
    r = b.copy()
    p = r.copy()
    rs = r @ r
    it = 0
    while it < max_iter and np.sqrt(rs) > tol * b_norm:
        ap = matvec(p)
        curv = p @ ap
        if curv <= 0:
            if curv < -1e-10 * (p @ p) * max(1.0, abs(ap).max()):
                raise NumericalError(f"CG breakdown: negative curvature {curv:.3e}")
            break
        alpha = rs / curv
        x += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    rel = float(np.sqrt(rs) / b_norm)
    return x, {"iterations": it, "rel_residual": rel, "converged": rel <= tol}


@dataclass
class ActiveSetPartition:
    """Bound-active coordinates of the stacked ``[x; w]`` vector."""

    active_x: np.ndarray
    active_w: np.ndarray

    @property
    def inactive_x(self):
        return ~self.active_x

    @property
    def inactive_w(self):
        return ~self.active_w

    @property
    def active(self):
        return np.flatnonzero(np.concatenate([self.active_x, self.active_w]))

    @property
    def inactive(self):
        return np.flatnonzero(~np.concatenate([self.active_x, self.active_w]))


def partition_sets(x, w):
    x = check_nonnegative(np.asarray(x, dtype=float), "x")
    w = check_nonnegative(np.asarray(w, dtype=float), "w")
    return ActiveSetPartition(active_x=(x == 0), active_w=(w == 0))


def _check_small(k):
    if k.size == 0:
        return
    cond = np.linalg.cond(k)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(f"singular {k.shape[0]}x{k.shape[0]} weight block", cond)


class LapContext:
    """Quantities frozen for one LAP iteration at ``(x, w)``.

    ``G`` holds ``A(w)^T A_j x`` for the inactive kernels, which turns the
    reduced operator into one fused ``A^T A`` product plus rank-``p``
    corrections.
    """

    def __init__(self, sub, ev, partition):
        self.sub = sub
        self.ev = ev
        self.partition = partition
        fam = sub.fam
        iw = partition.inactive_w
        self.jw = ev.cols[:, iw]
        # whole system is divided by mu, so the penalty terms carry 1/mu too
        self.k = self.jw.T @ self.jw + ev.s_hess[np.ix_(iw, iw)] / sub.mu
        self._k_checked = False
        h_conj = np.conj(fam.transfer(ev.w))
        self.g = np.column_stack(
            [fam.ifft(h_conj * h * ev.x_hat) for h in fam.transforms[iw]]
        ) if iw.any() else np.zeros((fam.n**2, 0))
        self.s_grad_i = ev.s_grad[iw] / sub.mu
        self.jw_t_r_i = ev.jw_t_r[iw]

    def solve_k(self, rhs):
        if not self._k_checked:
            # checked lazily: the active-set step never touches K
            _check_small(self.k)
            self._k_checked = True
        return np.linalg.solve(self.k, rhs) if self.k.size else np.zeros(0)

    def prolong_x(self, v):
        z = np.zeros(self.sub.fam.n ** 2)
        z[self.partition.inactive_x] = v
        return z

    def prolong_w(self, v):
        z = np.zeros(self.sub.fam.p)
        z[self.partition.inactive_w] = v
        return z


def reduced_matvec(v, ctx):
    """Action of the Schur complement on the inactive image coordinates."""
    sub = ctx.sub
    z = ctx.prolong_x(v)
    out = normal_apply(sub.fam, ctx.ev.w, z)
    if ctx.g.shape[1]:
        out -= ctx.g @ ctx.solve_k(ctx.g.T @ z)
    out += r_hessian_apply(z, sub.beta, sub.D) / sub.mu
    return out[ctx.partition.inactive_x]


def reduced_rhs(ctx):
    sub, ev = ctx.sub, ctx.ev
    b = -ev.a_t_r - ev.grad_r / sub.mu
    if ctx.g.shape[1]:
        b = b + ctx.g @ ctx.solve_k(ctx.jw_t_r_i + ctx.s_grad_i)
    return b[ctx.partition.inactive_x]


def solve_reduced(b, ctx, config):
    """CG on the reduced system; returns ``(dx_inactive, cg_info)``."""
    return conjugate_gradient(
        lambda v: reduced_matvec(v, ctx), b, config.cg_tol, config.cg_max_iter)


def eliminate_dw(dx_i, ctx):
    """Back-substitute the weight step on the inactive weights."""
    if not ctx.partition.inactive_w.any():
        return np.zeros(0)
    z = ctx.prolong_x(dx_i)
    return -ctx.solve_k(ctx.g.T @ z + ctx.jw_t_r_i + ctx.s_grad_i)


def active_step(ctx):
    """Negative gradient on the active coordinates, zero elsewhere."""
    ev, part = ctx.ev, ctx.partition
    dx = np.where(part.active_x, -ev.grad_x, 0.0)
    dw = np.where(part.active_w, -ev.grad_w, 0.0)
    return dx, dw


def combine_steps(dx_i, dw_i, dx_a, dw_a):
    """``[dx_i; dw_i] + gamma [dx_a; dw_a]`` with the inf-norm ratio ``gamma``.

    All four arguments are full length, zero off their own index set.
    """
    def inf(v):
        return float(np.max(np.abs(v))) if v.size else 0.0

    denom = max(inf(dx_a), inf(dw_a))
    gamma = 0.0 if denom == 0 else max(inf(dx_i), inf(dw_i)) / denom
    return dx_i + gamma * dx_a, dw_i + gamma * dw_a


@dataclass
class LineSearchResult:
    x: np.ndarray
    w: np.ndarray
    eta: float
    backtracks: int
    phi: float
    stagnated: bool = False


def projected_armijo(sub, ev, dx, dw, config, phi=None):
    """Backtracking on ``Phi(P(x + eta dx), P(w + eta dw))``.

    ``phi`` overrides the objective (used by the block solvers). A trial is
    accepted when it satisfies the sufficient-decrease test against the
    projected gradient and does not increase the objective.
    """
    phi = sub.phi if phi is None else phi
    qx, qw = projected_gradient(ev.x, ev.w, ev.grad_x, ev.grad_w)
    slope = float(qx @ dx + qw @ dw)
    eta = 1.0
    for k in range(config.armijo_max_backtracks + 1):
        x_new = np.maximum(ev.x + eta * dx, 0.0)
        w_new = np.maximum(ev.w + eta * dw, 0.0)
        val = phi(x_new, w_new)
        if not np.isfinite(val):
            raise NumericalError("non-finite objective during line search")
        if val <= ev.phi + config.armijo_c * eta * slope and val <= ev.phi:
            return LineSearchResult(x_new, w_new, eta, k, val)
        eta *= config.armijo_shrink
    return LineSearchResult(ev.x, ev.w, 0.0, config.armijo_max_backtracks,
                            ev.phi, stagnated=True)


def lap_step(sub, ev, config):
    """Search direction of one LAP iteration at the evaluated iterate."""
    part = partition_sets(ev.x, ev.w)
    ctx = LapContext(sub, ev, part)
    dx_i, cg_info = solve_reduced(reduced_rhs(ctx), ctx, config)
    dw_i = eliminate_dw(dx_i, ctx)
    dx_a, dw_a = active_step(ctx)
    dx, dw = combine_steps(ctx.prolong_x(dx_i), ctx.prolong_w(dw_i), dx_a, dw_a)
    return dx, dw, part, cg_info


@dataclass
class InnerResult:
    x: np.ndarray
    w: np.ndarray
    residual: float
    iterations: int
    stagnated: bool
    evaluation: Evaluation
    diagnostics: list = field(default_factory=list)
    phi_start: float = None


def _gradient_fallback(ev, scale):
    qx, qw = projected_gradient(ev.x, ev.w, ev.grad_x, ev.grad_w)
    norm = max(np.abs(qx).max(initial=0.0), np.abs(qw).max(initial=0.0))
    if norm == 0:
        return qx, qw
    return -qx * (scale / norm), -qw * (scale / norm)


def lap_solve_subproblem(sub, x0, w0, tol, config=None):
    """Projected LAP iterations until the projected gradient norm <= ``tol``.

    Returns an :class:`InnerResult`; ``diagnostics`` has one record per
    iteration (``phi``, ``residual``, ``eta``, ``cg_iterations``,
    ``active``, ``ffts``).
    """
    config = config or LapConfig()
    fam = sub.fam
    x = check_nonnegative(check_image(x0, fam.n).copy(), "x0")
    w = check_nonnegative(check_vector(w0, fam.p, "w0").copy(), "w0")
    ev = sub.evaluate(x, w)
    phi_start = ev.phi
    res = residual_norm(ev)
    diagnostics = []
    stagnated = False
    it = 0
    while it < config.inner_max_iter and res > tol:
        start = fam.fft_count
        dx, dw, part, cg_info = lap_step(sub, ev, config)
        ls = projected_armijo(sub, ev, dx, dw, config)
        if ls.stagnated:
            scale = max(np.abs(dx).max(initial=0.0), np.abs(dw).max(initial=0.0))
            gx, gw = _gradient_fallback(ev, scale or 1.0)
            ls = projected_armijo(sub, ev, gx, gw, config)
            if ls.stagnated:
                stagnated = True
        it += 1
        if not ls.stagnated:
            ev = sub.evaluate(ls.x, ls.w)
            res = residual_norm(ev)
        diagnostics.append({
            "iteration": it,
            "phi": ev.phi,
            "residual": res,
            "eta": ls.eta,
            "backtracks": ls.backtracks,
            "cg_iterations": cg_info["iterations"],
            "cg_rel_residual": cg_info["rel_residual"],
            "active": int(part.active.size),
            "ffts": fam.fft_count - start,
        })
        if stagnated:
            break
    return InnerResult(ev.x, ev.w, res, it, stagnated, ev, diagnostics, phi_start)
