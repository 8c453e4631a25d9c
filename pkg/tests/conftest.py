"""Shared fixtures and independent reference implementations."""

import numpy as np
import pytest
from hypothesis import settings

from myopic_tv.linops import BlurFamily
from myopic_tv.psf import Psf

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def random_psf(rng, n, center=None):
    vals = rng.uniform(0.0, 1.0, (n, n))
    vals /= vals.sum()
    center = center if center is not None else tuple(int(c) for c in rng.integers(0, n, 2))
    return Psf(vals, center)


def random_family(rng, n, p=2):
    return BlurFamily([random_psf(rng, n) for _ in range(p)])


def naive_circular_conv(kernel, center, x_grid):
    """Direct O(n^4) ``out[i, j] = sum_{k, l} h[k, l] x[i - k + c0, j - l + c1]``."""
    n = x_grid.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                for l in range(n):
                    acc += kernel[k, l] * x_grid[(i - k + center[0]) % n, (j - l + center[1]) % n]
            out[i, j] = acc
    return out


def dense_diff(n):
    """Column-major periodic forward differences as an explicit ``2n^2 x n^2`` matrix."""
    m = n * n
    D = np.zeros((2 * m, m))

    def idx(i, j):
        return (i % n) + (j % n) * n

    for j in range(n):
        for i in range(n):
            row = idx(i, j)
            D[row, idx(i, j + 1)] += 1.0
            D[row, idx(i, j)] -= 1.0
            D[m + row, idx(i + 1, j)] += 1.0
            D[m + row, idx(i, j)] -= 1.0
    return D


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
