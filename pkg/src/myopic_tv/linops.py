"""FFT-based actions of the weighted blur operator and the difference operator.

Images are flat column-major vectors of length ``n * n``. Under periodic
boundary conditions every kernel ``A_j`` is diagonalized by the 2-D DFT, so

    A(w) x = ifft2( sum_j w_j H_j * fft2(x) )

with ``H_j`` the transform of kernel ``j`` shifted to the origin. The
difference operator ``D`` stacks horizontal (along columns, axis 1) and
vertical (along rows, axis 0) forward differences with periodic wrap:
``D x = [D1 x; D2 x]`` of length ``2 n^2``.
"""

import numpy as np

from ._validation import (
    ParameterError,
    as_grid,
    check_image,
    check_vector,
    flatten,
)

__all__ = [
    "FFTCounter",
    "BlurFamily",
    "DiffOperator",
    "blur_apply",
    "blur_adjoint",
    "normal_apply",
    "jw_apply",
    "jw_adjoint",
    "jw_columns",
    "diff_apply",
    "diff_adjoint",
    "dense_oracle",
]

DENSE_ORACLE_MAX_N = 16


class FFTCounter:
    """Tally of 2-D FFTs (forward and inverse) performed on a family."""

    def __init__(self):
        self.count = 0

    def add(self, k=1):
        self.count += k


class BlurFamily:
    """The known kernels ``A_1 ... A_p`` in frequency form.

    Parameters
    ----------
    psfs : sequence of Psf
        Unit-sum kernels on a common ``n x n`` grid.
    counter : FFTCounter, optional
        When given, every FFT executed by the operators in this module is
        tallied on it.
    """

    def __init__(self, psfs, counter=None):
        psfs = list(psfs)
        if len(psfs) < 1:
            raise ParameterError("a blur family needs at least one PSF")
        n = psfs[0].n
        if any(p.n != n for p in psfs):
            raise ParameterError("all PSFs must share the grid size")
        self.psfs = tuple(psfs)
        self.n = n
        self.p = len(psfs)
        self.kernels = np.stack([p.at_origin() for p in psfs])
        self.kernels.setflags(write=False)
        self.transforms = np.fft.fft2(self.kernels, axes=(1, 2))
        self.transforms.setflags(write=False)
        self.counter = counter

    def instrumented(self):
        """Copy sharing the cached transforms with a fresh FFT counter."""
        fam = object.__new__(BlurFamily)
        fam.__dict__.update(self.__dict__)
        fam.counter = FFTCounter()
        return fam

    @property
    def fft_count(self):
        return 0 if self.counter is None else self.counter.count

    def fft(self, x):
        if self.counter is not None:
            self.counter.add()
        return np.fft.fft2(as_grid(x, self.n))

    def ifft(self, spectrum):
        if self.counter is not None:
            self.counter.add()
        return flatten(np.fft.ifft2(spectrum).real)

    def transfer(self, w):
        """Frequency response ``sum_j w_j H_j`` of ``A(w)``."""
        w = check_vector(w, self.p, "w")
        return np.tensordot(w, self.transforms, axes=1)


class DiffOperator:
    """Periodic forward differences on an ``n x n`` grid."""

    boundary = "periodic"

    def __init__(self, n):
        if n < 1:
            raise ParameterError(f"n must be >= 1, got {n}")
        self.n = n

    def pairs(self, y):
        """Per-pixel 2-vectors of a length ``2 n^2`` vector, shape ``(n^2, 2)``."""
        y = check_vector(y, 2 * self.n**2, "y")
        return y.reshape(2, -1).T


def blur_apply(fam, w, x):
    """``A(w) x`` via one forward and one inverse FFT."""
    x = check_image(x, fam.n)
    return fam.ifft(fam.transfer(w) * fam.fft(x))


def blur_adjoint(fam, w, r):
    """``A(w)^T r``."""
    r = check_image(r, fam.n, "r")
    return fam.ifft(np.conj(fam.transfer(w)) * fam.fft(r))


def normal_apply(fam, w, v):
    """``A(w)^T A(w) v`` fused into a single FFT pair."""
    v = check_image(v, fam.n, "v")
    h = fam.transfer(w)
    return fam.ifft((h.real**2 + h.imag**2) * fam.fft(v))


def jw_apply(fam, x, dw):
    """``J_w dw = sum_j dw_j A_j x``."""
    return blur_apply(fam, dw, x)


def jw_adjoint(fam, x, r):
    """``J_w^T r = [<A_1 x, r>, ..., <A_p x, r>]``, evaluated spectrally."""
    x = check_image(x, fam.n)
    r = check_image(r, fam.n, "r")
    xh = fam.fft(x)
    rh = fam.fft(r)
    # Parseval: <u, v> = sum(U conj(V)) / n^2 for real u, v.
    cross = xh * np.conj(rh)
    return np.real(np.einsum("jab,ab->j", fam.transforms, cross)) / fam.n**2


def jw_columns(fam, x):
    """Dense ``J_w`` of shape ``(n^2, p)``; column ``j`` is ``A_j x``."""
    x = check_image(x, fam.n)
    xh = fam.fft(x)
    return np.column_stack([fam.ifft(h * xh) for h in fam.transforms])


def diff_apply(D, x):
    x = check_image(x, D.n)
    g = as_grid(x, D.n)
    horiz = np.roll(g, -1, axis=1) - g
    vert = np.roll(g, -1, axis=0) - g
    return np.concatenate([flatten(horiz), flatten(vert)])


def diff_adjoint(D, y):
    n = D.n
    y = check_vector(y, 2 * n * n, "y")
    h = as_grid(y[: n * n], n)
    v = as_grid(y[n * n:], n)
    out = (np.roll(h, 1, axis=1) - h) + (np.roll(v, 1, axis=0) - v)
    return flatten(out)


def dense_oracle(fam, w):
    """Explicit ``n^2 x n^2`` matrix of ``A(w)`` built from kernel shifts.

    Column ``i`` is the kernel (rolled to the origin) circularly shifted to
    pixel ``i``. No FFTs are involved, so it checks the fast path
    independently. Only for small grids.
    """
    n = fam.n
    if n > DENSE_ORACLE_MAX_N:
        raise ParameterError(
            f"dense oracle refused for n={n} > {DENSE_ORACLE_MAX_N}")
    w = check_vector(w, fam.p, "w")
    kernel = np.tensordot(w, fam.kernels, axes=1)
    mat = np.empty((n * n, n * n))
    for b in range(n):
        for a in range(n):
            mat[:, a + b * n] = flatten(np.roll(kernel, (a, b), axis=(0, 1)))
    return mat
