"""TV-regularized myopic deconvolution with ADMM-LAP and ADMM-BCD solvers."""

__version__ = "0.1.0"
