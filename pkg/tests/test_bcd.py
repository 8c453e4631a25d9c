import numpy as np
import pytest

from myopic_tv.bcd import (
    BcdConfig, bcd_solve_subproblem, bcd_w_step, bcd_x_step, w_direction, x_system_matvec)
from myopic_tv.lap import LapConfig, Subproblem, lap_solve_subproblem
from myopic_tv.linops import BlurFamily, DiffOperator, blur_apply, dense_oracle, diff_apply, jw_columns
from myopic_tv.problems import make_problem
from myopic_tv.psf import gaussian_psf

from conftest import dense_diff, random_family


def make_sub(rng, n=8, mu=50.0, beta=3.0, xi=10.0):
    fam = random_family(rng, n)
    return Subproblem(fam, rng.uniform(0, 1, n * n), rng.standard_normal(2 * n * n) * 0.1,
                      rng.standard_normal(2 * n * n) * 0.1, beta, mu, xi)


def test_x_system_matches_dense(rng):
    sub = make_sub(rng)
    w = rng.uniform(0.1, 1, 2)
    A, M = dense_oracle(sub.fam, w), dense_diff(8)
    v = rng.standard_normal(64)
    H = sub.mu * A.T @ A + sub.beta * M.T @ M
    assert np.allclose(x_system_matvec(sub, w, np.ones(64, bool), v), H @ v, atol=1e-9)


def test_x_step_matches_dense_newton(rng):
    # with a tiny Newton step the first Armijo trial is accepted, so x+ - x is the dense solve
    sub = make_sub(rng)
    x, w = rng.uniform(5.0, 6.0, 64), rng.uniform(0.1, 1, 2)
    cfg = BcdConfig(cg_tol=1e-12, cg_max_iter=500)
    x_new, info = bcd_x_step(sub, x, w, cfg)
    A, M = dense_oracle(sub.fam, w), dense_diff(8)
    H = sub.mu * A.T @ A + sub.beta * M.T @ M
    ev = sub.evaluate_x(x, w)
    ref = np.linalg.solve(H, -ev.grad_x)
    assert info.eta == 1.0
    assert np.allclose(x_new - x, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


def test_x_step_stationary():
    n = 8
    fam = BlurFamily([gaussian_psf(n, 1.0), gaussian_psf(n, 2.0)])
    x = np.full(n * n, 0.4)
    w = np.array([0.3, 0.7])
    D = DiffOperator(n)
    sub = Subproblem(fam, blur_apply(fam, w, x), diff_apply(D, x), np.zeros(2 * n * n),
                     1.0, 10.0, 5.0)
    x_new, _ = bcd_x_step(sub, x, w)
    assert np.allclose(x_new, x, atol=1e-12)


def test_w_direction_two_by_two(rng):
    sub = make_sub(rng)
    x, w = rng.uniform(0.1, 1, 64), rng.uniform(0.1, 1, 2)
    cols = jw_columns(sub.fam, x)
    r = cols @ w - sub.d
    xi = 7.0
    a, b, c = cols[:, 0] @ cols[:, 0] + xi, cols[:, 0] @ cols[:, 1] + xi, cols[:, 1] @ cols[:, 1] + xi
    g = cols.T @ r + xi * (w.sum() - 1)
    inv = np.array([[c, -b], [-b, a]]) / (a * c - b * b)
    assert np.allclose(w_direction(cols, r, w, xi), -inv @ g, rtol=1e-10)


def test_w_step_stationary_and_feasible(rng):
    n = 8
    fam = BlurFamily([gaussian_psf(n, 1.0), gaussian_psf(n, 2.0)])
    x = rng.uniform(0.2, 1, n * n)
    w = np.array([0.3, 0.7])
    sub = Subproblem(fam, blur_apply(fam, w, x), np.zeros(2 * n * n), np.zeros(2 * n * n),
                     1.0, 10.0, 5.0)
    cols = jw_columns(fam, x)
    assert np.allclose(w_direction(cols, cols @ w - sub.d, w, 5.0), 0, atol=1e-12)
    sub2 = make_sub(rng)
    for _ in range(5):
        w_new, _ = bcd_w_step(sub2, rng.uniform(0, 1, 64), rng.uniform(0, 1, 2))
        assert np.all(w_new >= 0)


def test_w_step_costs_no_line_search_ffts(rng):
    sub = make_sub(rng)
    sub.fam = sub.fam.instrumented()
    bcd_w_step(sub, rng.uniform(0.1, 1, 64), rng.uniform(0.1, 1, 2))
    assert sub.fam.fft_count == 1 + sub.fam.p


def test_steps_do_not_increase_objective(rng):
    sub = make_sub(rng)
    x, w = rng.uniform(0.1, 1, 64), rng.uniform(0.1, 1, 2)
    for _ in range(4):
        before = sub.phi(x, w)
        x, _ = bcd_x_step(sub, x, w)
        mid = sub.phi(x, w)
        w, _ = bcd_w_step(sub, x, w)
        assert mid <= before + 1e-12 * abs(before)
        assert sub.phi(x, w) <= mid + 1e-12 * abs(mid)


def test_zero_cycles_is_identity(rng):
    sub = make_sub(rng)
    x, w = rng.uniform(0.1, 1, 64), rng.uniform(0.1, 1, 2)
    res = bcd_solve_subproblem(sub, x, w, 0.0, BcdConfig(bcd_cycles=0))
    assert res.iterations == 0 and np.array_equal(res.x, x) and np.array_equal(res.w, w)


def test_stationary_start_returns_immediately():
    n = 8
    fam = BlurFamily([gaussian_psf(n, 1.0), gaussian_psf(n, 2.0)])
    x = np.random.default_rng(2).uniform(0.2, 1, n * n)
    w = np.array([0.3, 0.7])
    sub = Subproblem(fam, blur_apply(fam, w, x), diff_apply(DiffOperator(n), x),
                     np.zeros(2 * n * n), 1.0, 10.0, 5.0)
    assert bcd_solve_subproblem(sub, x, w, 1e-8).iterations == 0


def test_same_instance_as_lap_reaches_tolerance():
    prob = make_problem("cells", 16, ["gauss:1.5", "gauss:2.5"], [0.4, 0.6], 0.01, seed=3)
    n = 16
    x0 = np.random.default_rng(0).uniform(0.2, 0.8, n * n)
    w0 = np.array([0.5, 0.5])
    sub = Subproblem(prob.fam.instrumented(), prob.d, diff_apply(DiffOperator(n), x0),
                     np.zeros(2 * n * n), 10.0, 100.0, 10.0)
    lap = lap_solve_subproblem(sub, x0, w0, 1e-3,
                               LapConfig(inner_max_iter=500, cg_tol=1e-6, cg_max_iter=300))
    lap_ffts = sub.fam.fft_count
    sub.fam = sub.fam.instrumented()
    bcd = bcd_solve_subproblem(sub, x0, w0, 1e-3,
                               BcdConfig(bcd_cycles=3000, cg_tol=1e-6, cg_max_iter=300))
    assert lap.residual <= 1e-3 and bcd.residual <= 1e-3
    phis = [d["phi"] for d in bcd.diagnostics]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(phis, phis[1:]))
    print(f"LAP {lap.iterations} it / {lap_ffts} FFTs, BCD {bcd.iterations} it / "
          f"{sub.fam.fft_count} FFTs")


def test_config_validation():
    with pytest.raises(ValueError):
        BcdConfig(bcd_cycles=-1)
