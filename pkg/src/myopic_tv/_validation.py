"""Exceptions and input checking shared by every module."""

import numbers

import numpy as np


class ParameterError(ValueError):
    """Invalid argument value or shape."""


class ContractViolation(ValueError):
    """A documented precondition on the solver state does not hold."""


class NumericalError(ArithmeticError):
    """A numerical routine could not produce a usable result.

    Parameters
    ----------
    message : str
        Human readable description.
    condition : float, optional
        Condition number estimate of the offending matrix, when relevant.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_fraction(value, name):
    value = check_positive(value, name)
    if value >= 1:
        raise ParameterError(f"{name} must lie in (0, 1), got {value!r}")
    return value


def check_vector(v, size, name):
    """Return ``v`` as a 1-D float array of length ``size``."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != size:
        raise ParameterError(
            f"{name} must have {size} entries, got shape {np.shape(v)}")
    return arr


def check_image(x, n, name="x"):
    """Flat column-major image of ``n * n`` pixels.

    A 2-D ``(n, n)`` array is accepted and flattened in column-major order.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (n, n):
            raise ParameterError(f"{name} must be {n}x{n}, got {arr.shape}")
        arr = arr.ravel(order="F")
    return check_vector(arr, n * n, name)


def check_nonnegative(v, name):
    if np.any(v < 0):
        raise ContractViolation(f"{name} has negative entries (min {v.min():.3g})")
    return v


def as_grid(x, n):
    """View a flat column-major image as an ``(n, n)`` array."""
    return np.reshape(x, (n, n), order="F")


def flatten(grid):
    return np.ravel(grid, order="F")
