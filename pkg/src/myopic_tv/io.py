"""On-disk formats: 16-bit PGM previews, exact ``.npy`` arrays and ``key = value`` metadata.

A problem bundle is a directory holding

    meta.txt        n, psf specs, true weights, noise level, seed, phantom kind
    x_true.npy      exact phantom, (n, n)
    d.npy           exact observed data, (n, n)
    psfs.npy        exact kernels, (p, n, n), with their centers in meta.txt
    x_true.pgm, d.pgm   16-bit previews (min/max recorded in meta.txt)
"""

import os

import numpy as np

from ._validation import ParameterError, as_grid
from .linops import BlurFamily
from .problems import Problem
from .psf import Psf

__all__ = [
    "write_pgm",
    "read_pgm",
    "write_meta",
    "read_meta",
    "save_problem",
    "load_problem",
]

PGM_MAX = 65535


def write_pgm(path, grid):
    """Write a 2-D float array as binary 16-bit PGM with min/max scaling.

    Returns ``(lo, hi)``, needed by :func:`read_pgm` to undo the scaling.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ParameterError(f"PGM needs a 2-D array, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise ParameterError("cannot write non-finite values to PGM")
    lo, hi = float(grid.min()), float(grid.max())
    span = hi - lo if hi > lo else 1.0
    levels = np.rint((grid - lo) / span * PGM_MAX).astype(">u2")
    rows, cols = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{PGM_MAX}\n".encode("ascii"))
        fh.write(levels.tobytes())
    return lo, hi


def read_pgm(path, lo=0.0, hi=1.0):
    """Read a binary PGM (8- or 16-bit) and map ``[0, maxval]`` onto ``[lo, hi]``."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParameterError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace before the raster
    if tokens[0] != b"P5":
        raise ParameterError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    count = rows * cols
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    grid = raster.reshape(rows, cols).astype(float) / maxval
    return lo + grid * (hi - lo) if hi > lo else np.full((rows, cols), lo)


def _format_value(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_meta(path, items):
    """Write ordered ``key = value`` lines (UTF-8, LF)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in items.items():
            text = _format_value(value)
            if "\n" in text:
                raise ParameterError(f"metadata value for {key!r} spans lines")
            fh.write(f"{key} = {text}\n")


def read_meta(path):
    """Parse ``key = value`` lines into a dict of strings, keeping file order."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition(" = ")
            if not sep:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip()] = value
    return out


def _floats(text):
    return [float(v) for v in text.split(",")] if text else []


def save_problem(problem, directory):
    """Write ``problem`` as a bundle directory (created if needed)."""
    os.makedirs(directory, exist_ok=True)
    n = problem.n
    x_grid = as_grid(problem.x_true, n)
    d_grid = as_grid(problem.d, n)
    np.save(os.path.join(directory, "x_true.npy"), x_grid)
    np.save(os.path.join(directory, "d.npy"), d_grid)
    np.save(os.path.join(directory, "psfs.npy"),
            np.stack([psf.values for psf in problem.fam.psfs]))
    x_lo, x_hi = write_pgm(os.path.join(directory, "x_true.pgm"), x_grid)
    d_lo, d_hi = write_pgm(os.path.join(directory, "d.pgm"), d_grid)
    centers = [f"{psf.center[0]}:{psf.center[1]}" for psf in problem.fam.psfs]
    write_meta(os.path.join(directory, "meta.txt"), {
        "format": "myopic-tv-bundle-1",
        "n": n,
        "p": problem.fam.p,
        "kind": problem.kind,
        "psf": ";".join(problem.psf_specs),
        "psf_centers": ";".join(centers),
        "w_true": list(problem.w_true),
        "noise": problem.noise_level,
        "seed": problem.seed,
        "x_true_min": x_lo,
        "x_true_max": x_hi,
        "d_min": d_lo,
        "d_max": d_hi,
    })


def load_problem(directory):
    """Inverse of :func:`save_problem`; arrays come back bit-exactly.

    Raises ``FileNotFoundError`` for a missing bundle and
    :class:`ParameterError` for an inconsistent one.
    """
    meta_path = os.path.join(directory, "meta.txt")
    if not os.path.isfile(meta_path):
        raise FileNotFoundError(f"no problem bundle at {directory!r} (missing meta.txt)")
    meta = read_meta(meta_path)
    try:
        n = int(meta["n"])
        centers = [tuple(int(c) for c in s.split(":"))
                   for s in meta["psf_centers"].split(";")]
        w_true = np.array(_floats(meta["w_true"]))
        noise = float(meta["noise"])
        seed = int(meta["seed"])
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"{meta_path}: bad or missing field ({exc})") from None
    x_true = np.load(os.path.join(directory, "x_true.npy"))
    d = np.load(os.path.join(directory, "d.npy"))
    kernels = np.load(os.path.join(directory, "psfs.npy"))
    if x_true.shape != (n, n) or d.shape != (n, n) or kernels.shape[1:] != (n, n):
        raise ParameterError(f"{directory}: array shapes disagree with n={n}")
    if kernels.shape[0] != len(centers) or w_true.shape[0] != len(centers):
        raise ParameterError(f"{directory}: PSF count disagrees with metadata")
    fam = BlurFamily([Psf(k, c) for k, c in zip(kernels, centers)])
    specs = tuple(meta.get("psf", "").split(";")) if meta.get("psf") else ()
    return Problem(
        x_true.ravel(order="F"), w_true, fam, d.ravel(order="F"),
        noise, seed, specs, meta.get("kind", "file"))
