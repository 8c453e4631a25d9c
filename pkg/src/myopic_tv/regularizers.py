"""Isotropic TV, its shrinkage operator, the ADMM coupling term and the weight penalty.

The coupling term is

    R(x, y, lam) = sum_i ||y_i|| - lam_i^T (y_i - D_i x) + beta/2 ||y_i - D_i x||^2

where ``y_i`` and ``lam_i`` are the per-pixel 2-vectors of the stacked
``[plane1; plane2]`` layout used by :func:`myopic_tv.linops.diff_apply`.
"""

import numpy as np

from ._validation import ParameterError, check_image, check_positive, check_vector
from .linops import diff_adjoint, diff_apply

__all__ = [
    "pixel_norms",
    "tv_value",
    "shrink_y",
    "r_value",
    "r_gradient",
    "r_hessian_apply",
    "s_value_grad_hess",
]


def pixel_norms(v):
    """Euclidean norm of each per-pixel pair of a stacked ``2 m`` vector."""
    m = v.shape[0] // 2
    return np.hypot(v[:m], v[m:])


def tv_value(D, x):
    return float(pixel_norms(diff_apply(D, x)).sum())


def shrink_y(Dx, lam, beta):
    """Closed-form minimizer of ``||y_i|| + beta/2 ||y_i - v_i||^2`` per pixel.

    ``v = Dx + lam / beta``. Pixels with ``v_i = 0`` map to ``y_i = 0``.
    """
    beta = check_positive(beta, "beta")
    Dx = np.asarray(Dx, dtype=float)
    if Dx.ndim != 1 or Dx.shape[0] % 2:
        raise ParameterError("Dx must be a flat vector of even length")
    lam = check_vector(lam, Dx.shape[0], "lambda")
    v = Dx + lam / beta
    norms = pixel_norms(v)
    scale = np.zeros_like(norms)
    keep = norms > 1.0 / beta
    scale[keep] = (norms[keep] - 1.0 / beta) / norms[keep]
    return v * np.concatenate([scale, scale])


def _split_checks(D, x, y, lam, beta):
    x = check_image(x, D.n)
    y = check_vector(y, 2 * D.n**2, "y")
    lam = check_vector(lam, 2 * D.n**2, "lambda")
    return x, y, lam, check_positive(beta, "beta")


def r_value(x, y, lam, beta, D):
    x, y, lam, beta = _split_checks(D, x, y, lam, beta)
    gap = y - diff_apply(D, x)
    return float(pixel_norms(y).sum() - lam @ gap + 0.5 * beta * (gap @ gap))


def r_gradient(x, y, lam, beta, D):
    """``D^T lam - beta D^T y + beta D^T D x``."""
    x, y, lam, beta = _split_checks(D, x, y, lam, beta)
    return diff_adjoint(D, lam - beta * (y - diff_apply(D, x)))


def r_hessian_apply(v, beta, D):
    beta = check_positive(beta, "beta")
    v = check_image(v, D.n, "v")
    return beta * diff_adjoint(D, diff_apply(D, v))


def s_value_grad_hess(w, xi):
    """Value, gradient and Hessian of ``xi/2 (sum(w) - 1)^2``."""
    xi = check_positive(xi, "xi")
    w = np.asarray(w, dtype=float)
    p = w.shape[0]
    excess = w.sum() - 1.0
    return 0.5 * xi * excess**2, np.full(p, xi * excess), np.full((p, p), xi)
