"""Normalized point-spread functions on a periodic n x n grid.

Arrays are indexed ``values[i, j]`` with ``i`` the row and ``j`` the column.
Each PSF remembers the pixel ``center`` it was built around; before a kernel
is turned into an operator it is circularly shifted so that ``center`` lands
on pixel ``(0, 0)`` (see :meth:`Psf.at_origin`).
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ParameterError, check_positive

__all__ = [
    "Psf",
    "gaussian_psf",
    "defocus_psf",
    "delta_psf",
    "convolve_psfs",
    "psf_from_spec",
    "recenter",
]


@dataclass(frozen=True)
class Psf:
    values: np.ndarray
    center: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ParameterError(f"PSF must be square, got shape {values.shape}")
        if np.any(values < 0):
            raise ParameterError("PSF entries must be nonnegative")
        k, l = (int(c) for c in self.center)
        _check_center((k, l), values.shape[0])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "center", (k, l))

    @property
    def n(self):
        return self.values.shape[0]

    def at_origin(self):
        """Kernel array rolled so that ``center`` sits at index (0, 0)."""
        k, l = self.center
        return np.roll(self.values, (-k, -l), axis=(0, 1))


def _check_center(center, n):
    k, l = center
    if not (0 <= k < n and 0 <= l < n):
        raise ParameterError(f"center {center} outside the {n}x{n} grid")


def _grid_sq_dist(n, center):
    k, l = center
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return (i - k) ** 2 + (j - l) ** 2


def _normalized(values, center):
    return Psf(values / values.sum(), center)


def gaussian_psf(n, sigma, center=None):
    """Isotropic Gaussian ``exp(-r^2 / (2 sigma^2))`` normalized to unit sum.

    ``center`` defaults to ``(n // 2, n // 2)``.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    sigma = check_positive(sigma, "sigma")
    center = (n // 2, n // 2) if center is None else tuple(center)
    _check_center(center, n)
    r2 = _grid_sq_dist(n, center)
    return _normalized(np.exp(-r2 / (2.0 * sigma**2)), center)


def defocus_psf(n, r, center=None):
    """Uniform disk of radius ``r`` (pixels with squared distance <= r^2)."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    r = check_positive(r, "r")
    center = (n // 2, n // 2) if center is None else tuple(center)
    _check_center(center, n)
    disk = (_grid_sq_dist(n, center) <= r * r).astype(float)
    return _normalized(disk, center)


def delta_psf(n, center=(0, 0)):
    values = np.zeros((n, n))
    values[tuple(center)] = 1.0
    return Psf(values, tuple(center))


def convolve_psfs(a, b):
    """Circular convolution of two kernels, renormalized to unit sum.

    The result is centered at ``a.center + b.center`` (mod n), so the
    operator it defines is the composition of the two blurs.
    """
    if a.n != b.n:
        raise ParameterError(f"PSF grid sizes differ: {a.n} vs {b.n}")
    n = a.n
    values = np.fft.ifft2(np.fft.fft2(a.values) * np.fft.fft2(b.values)).real
    values = np.clip(values, 0.0, None)
    center = ((a.center[0] + b.center[0]) % n, (a.center[1] + b.center[1]) % n)
    return _normalized(values, center)


def psf_from_spec(spec, n):
    """Build a PSF from a string such as ``"gauss:2"`` or ``"gauss:2+defocus:4"``.

    Components joined by ``+`` are convolved together. Every component is
    centered at ``(n // 2, n // 2)``.
    """
    parts = [p.strip() for p in str(spec).split("+") if p.strip()]
    if not parts:
        raise ParameterError(f"empty PSF spec {spec!r}")
    psf = None
    for part in parts:
        kind, _, arg = part.partition(":")
        try:
            value = float(arg)
        except ValueError:
            raise ParameterError(f"bad PSF parameter in {part!r}") from None
        if kind in ("gauss", "gaussian"):
            piece = gaussian_psf(n, value)
        elif kind == "defocus":
            piece = defocus_psf(n, value)
        else:
            raise ParameterError(f"unknown PSF kind {kind!r} in {spec!r}")
        psf = piece if psf is None else convolve_psfs(psf, piece)
    return recenter(psf, (n // 2, n // 2))


def recenter(psf, center):
    """Same operator, with the kernel array rolled to sit around ``center``."""
    _check_center(center, psf.n)
    shift = (center[0] - psf.center[0], center[1] - psf.center[1])
    return Psf(np.roll(psf.values, shift, axis=(0, 1)), center)
