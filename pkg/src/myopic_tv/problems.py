"""Synthetic myopic deblurring problems and restoration metrics."""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import ParameterError, flatten
from .linops import BlurFamily, blur_apply
from .psf import psf_from_spec

__all__ = [
    "Problem",
    "cells_phantom",
    "checkerboard_phantom",
    "make_problem",
    "rel_err",
    "snr",
]

PHANTOMS = ("cells", "checkerboard", "file")


@dataclass
class Problem:
    x_true: np.ndarray
    w_true: np.ndarray
    fam: BlurFamily
    d: np.ndarray
    noise_level: float
    seed: int
    psf_specs: tuple = ()
    kind: str = "cells"

    @property
    def n(self):
        return self.fam.n


def cells_phantom(n, rng):
    """Bright disks on a dim background, jittered on a hexagonal lattice.

    Returns an ``(n, n)`` array with values in ``[0, 1]``.
    """
    img = np.full((n, n), 0.1)
    spacing = max(n / 3.0, 3.0)
    radius = 0.38 * spacing
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    row = 0
    ci = spacing / 2
    while ci < n + spacing:
        offset = spacing / 2 if row % 2 else 0.0
        cj = spacing / 2 + offset
        while cj < n + spacing:
            ki = ci + rng.uniform(-0.15, 0.15) * spacing
            kj = cj + rng.uniform(-0.15, 0.15) * spacing
            rad = radius * rng.uniform(0.75, 1.0)
            # periodic distance so the mosaic tiles the torus
            di = np.minimum(np.abs(ii - ki) % n, n - np.abs(ii - ki) % n)
            dj = np.minimum(np.abs(jj - kj) % n, n - np.abs(jj - kj) % n)
            img[di**2 + dj**2 <= rad**2] = rng.uniform(0.55, 1.0)
            cj += spacing
        ci += spacing * math.sqrt(3) / 2
        row += 1
    return img


def checkerboard_phantom(n, block=None):
    block = block or max(n // 8, 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.where((ii // block + jj // block) % 2 == 0, 0.8, 0.2)


def make_problem(kind, n, psf_specs, w_true, noise_level, seed=0, image=None):
    """Blur a phantom with ``A(w_true)`` and add Gaussian noise.

    Parameters
    ----------
    kind : {"cells", "checkerboard", "file"}
        Phantom type; ``"file"`` uses ``image`` (an ``(n, n)`` array).
    n : int
        Grid side.
    psf_specs : sequence of str
        One spec per kernel, e.g. ``"gauss:2"`` or ``"gauss:2+defocus:4"``.
    w_true : sequence of float
        Nonnegative weights summing to one.
    noise_level : float
        Target ``||e|| / ||A(w_true) x_true||``; achieved exactly by
        rescaling the draw.
    seed : int
        Seeds both the phantom and the noise.
    """
    if kind not in PHANTOMS:
        raise ParameterError(f"unknown image kind {kind!r}; choose from {PHANTOMS}")
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    w_true = np.asarray(w_true, dtype=float)
    psf_specs = tuple(psf_specs)
    if w_true.ndim != 1 or w_true.shape[0] != len(psf_specs):
        raise ParameterError("need one true weight per PSF spec")
    if np.any(w_true < 0) or abs(w_true.sum() - 1.0) > 1e-9:
        raise ParameterError(f"true weights must be >= 0 and sum to 1, got {w_true}")
    if noise_level < 0 or not np.isfinite(noise_level):
        raise ParameterError(f"noise level must be >= 0, got {noise_level}")

    rng = np.random.default_rng(seed)
    if kind == "cells":
        grid = cells_phantom(n, rng)
    elif kind == "checkerboard":
        grid = checkerboard_phantom(n)
    else:
        if image is None:
            raise ParameterError("kind='file' requires an image array")
        grid = np.asarray(image, dtype=float)
        if grid.shape != (n, n):
            raise ParameterError(f"image must be {n}x{n}, got {grid.shape}")
    x_true = flatten(grid)
    fam = BlurFamily([psf_from_spec(s, n) for s in psf_specs])
    clean = blur_apply(fam, w_true, x_true)
    d = clean.copy()
    if noise_level > 0:
        e = rng.standard_normal(n * n)
        e *= noise_level * np.linalg.norm(clean) / np.linalg.norm(e)
        d = clean + e
    return Problem(x_true, w_true, fam, d, float(noise_level), int(seed), psf_specs, kind)


def rel_err(v, v_ref):
    v = np.asarray(v, dtype=float).ravel()
    v_ref = np.asarray(v_ref, dtype=float).ravel()
    ref = np.linalg.norm(v_ref)
    if ref == 0:
        raise ParameterError("relative error against a zero reference")
    return float(np.linalg.norm(v - v_ref) / ref)


def snr(x, x_true):
    """Restoration SNR in dB against the true image and its mean.

    Returns ``inf`` when ``x`` equals ``x_true`` exactly.
    """
    x_true = np.asarray(x_true, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != x_true.shape:
        raise ParameterError(f"size mismatch: {x.shape} vs {x_true.shape}")
    num = np.sum((x_true - x_true.mean()) ** 2)
    den = np.sum((x_true - x) ** 2)
    if den == 0:
        return math.inf
    return float(10.0 * math.log10(num / den))
