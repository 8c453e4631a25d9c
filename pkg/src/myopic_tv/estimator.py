"""scikit-learn style front end to the ADMM solvers."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ParameterError, as_grid
from .admm import SolverConfig, solve
from .bcd import BcdConfig
from .lap import LapConfig
from .linops import BlurFamily
from .psf import Psf, psf_from_spec

__all__ = ["MyopicTVDeconvolution"]


class MyopicTVDeconvolution(TransformerMixin, BaseEstimator):
    """Restore a blurred image and the mixing weights of known PSFs.

    The observed image ``X`` (an ``(n, n)`` array) is modelled as
    ``sum_j w_j h_j * x + noise``. :meth:`fit` estimates ``x >= 0`` and
    ``w >= 0`` by ADMM with isotropic TV.

    Parameters
    ----------
    psfs : sequence of str or Psf
        Kernel specs such as ``"gauss:2"`` or ``"gauss:2+defocus:4"``, or
        ready-made :class:`~myopic_tv.psf.Psf` objects.
    method : {"lap", "bcd"}
        Inner solver.
    mu, xi, epsilon, a, max_outer, seed
        See :class:`~myopic_tv.admm.SolverConfig`.
    beta : float or "auto"
        ADMM penalty.
    inner_max_iter : int
        LAP iterations per subproblem.
    bcd_cycles : int
        BCD sweeps per subproblem.
    w_init : array_like, optional
        Initial weights; uniform when omitted.

    Attributes
    ----------
    image_ : ndarray of shape (n, n)
    weights_ : ndarray of shape (p,)
    beta_ : float
        Penalty actually used.
    records_ : list of IterationRecord
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, psfs=("gauss:2",), method="lap", mu=5e4, beta="auto",
                 xi=100.0, epsilon=1e-2, a=1.0, max_outer=50, inner_max_iter=10,
                 bcd_cycles=3, seed=0, w_init=None):
        self.psfs = psfs
        self.method = method
        self.mu = mu
        self.beta = beta
        self.xi = xi
        self.epsilon = epsilon
        self.a = a
        self.max_outer = max_outer
        self.inner_max_iter = inner_max_iter
        self.bcd_cycles = bcd_cycles
        self.seed = seed
        self.w_init = w_init

    def _family(self, n):
        if isinstance(self.psfs, (str, Psf)):
            raise ParameterError("psfs must be a sequence, not a single kernel")
        kernels = [p if isinstance(p, Psf) else psf_from_spec(p, n) for p in self.psfs]
        return BlurFamily(kernels)

    def _config(self):
        if self.method == "bcd":
            inner = BcdConfig(inner_max_iter=self.inner_max_iter, bcd_cycles=self.bcd_cycles)
        else:
            inner = LapConfig(inner_max_iter=self.inner_max_iter)
        return SolverConfig(mu=self.mu, beta=self.beta, xi=self.xi, epsilon=self.epsilon,
                            a=self.a, max_outer=self.max_outer, inner_kind=self.method,
                            inner=inner, seed=self.seed)

    @staticmethod
    def _check_X(X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != X.shape[1]:
            raise ParameterError(f"X must be a square 2-D image, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ParameterError("X contains non-finite values")
        return X

    def _run(self, X, w0):
        X = self._check_X(X)
        fam = self._family(X.shape[0])
        return solve(fam, X, self._config(), w0=w0)

    def fit(self, X, y=None):
        result = self._run(X, self.w_init)
        n = np.asarray(X).shape[0]
        self.image_ = as_grid(result.x, n).copy()
        self.weights_ = result.w.copy()
        self.beta_ = result.beta
        self.records_ = result.records
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        return self

    def transform(self, X):
        """Restore ``X`` with the same kernels, starting from the fitted weights."""
        check_is_fitted(self, "weights_")
        result = self._run(X, self.weights_)
        return as_grid(result.x, np.asarray(X).shape[0]).copy()

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).image_.copy()
