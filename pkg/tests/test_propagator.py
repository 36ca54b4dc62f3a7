import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wflab import propagator as pr
from wflab.dyadic import bump
from wflab.errors import ParameterError, PreconditionError
from wflab.spectral import MetricModel, solve


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(1.0, 300.0), lag=st.integers(-400, 400), dt=st.floats(1e-3, 0.1))
def test_time_factors_closed_forms(lam, lag, dt):
    tau = lag * dt
    lam_a = np.array([lam])
    G = pr.time_factors(lam_a, [lag], dt, "K_G")[0, 0]
    A = pr.time_factors(lam_a, [lag], dt, "K_A")[0, 0]
    D = pr.time_factors(lam_a, [lag], dt, "dt_K_A")[0, 0]
    assert G == pytest.approx(-np.sin(lam * tau) / lam, abs=1e-13)
    assert A == pytest.approx(np.cos(lam * tau) / lam ** 2, abs=1e-13)
    assert abs(D - G) <= 1e-14


def test_time_factors_odd_bit_for_bit():
    lags = np.arange(-50, 51)
    G = pr.time_factors(np.linspace(1, 90, 40), lags, 0.037, "K_G")
    assert np.array_equal(G, -G[::-1])
    with pytest.raises(ParameterError):
        pr.time_factors([1.0], [0], 0.1, "K_X")


@pytest.fixture(scope="module")
def rough_basis():
    return solve(MetricModel.weierstrass(2.7, 0.15, 6, seed=3), 512, 96)


def test_kernel_symmetries_rough(rough_basis):
    grid = pr.KernelGrid.symmetric(0.05, 15, np.arange(0, 512, 32))
    K = pr.build_kernel(rough_basis, "K_G", 96, grid)
    assert K.antisymmetry_defect() <= 1e-12
    assert K.translation_defect() <= 1e-12
    D = pr.build_kernel(rough_basis, "dt_K_A", 96, grid)
    assert np.max(np.abs(D.values - K.values)) <= 1e-12


def test_kernel_matches_mode_sum(flat_basis_512):
    grid = pr.KernelGrid.symmetric(0.1, 5, np.array([0, 100, 300]))
    K = pr.build_kernel(flat_basis_512, "K_G", 40, grid).values
    b = flat_basis_512
    ph = b.modes[:40]
    t = grid.t * 1.0
    for a, ia in enumerate(grid.x_index):
        for c, ic in enumerate(grid.y_index):
            ref = -(np.sin(np.outer(t[:, None] - t[None, :], b.lambdas[:40]).reshape(5, 5, 40)) / b.lambdas[:40]
                    ) @ (ph[:, ia] * ph[:, ic])
            np.testing.assert_allclose(K[:, a, :, c], ref, atol=1e-13)


def test_column_kernel_agrees_with_table(flat_basis_512):
    grid = pr.KernelGrid.symmetric(0.05, 9, np.arange(512))
    K = pr.build_kernel(flat_basis_512, "K_G", 64, grid)
    t = grid.t
    col = pr.column_kernel(flat_basis_512, 64, t[4], 7, t)
    np.testing.assert_allclose(col, K.values[:, :, 4, 7], atol=1e-13)


def test_kernel_rejects_untrusted_modes(rough_basis):
    with pytest.raises(PreconditionError):
        pr.column_kernel(rough_basis, 10 ** 4, 0.0, 0, np.zeros(1))


def _closed_bump(s, r=1.5):
    return np.exp(-1.0 / (1.0 - (s / r) ** 2)) if abs(s) < r else 0.0


def test_apply_retarded_matches_duhamel_quadrature(flat_basis_512):
    t = np.linspace(-3, 6, 1801)
    x = flat_basis_512.coords()
    f = np.array([_closed_bump(s) for s in t])
    k = 3
    u = pr.apply_G(flat_basis_512, f[:, None] * np.cos(k * x)[None, :], t, "retarded")
    lam = np.sqrt(k * k + 1.0)
    sel = slice(None, None, 60)
    ref = np.array([quad(lambda s: np.sin(lam * (tt - s)) / lam * _closed_bump(s), -1.5, min(tt, 1.5))[0]
                    if tt > -1.5 else 0.0 for tt in t[sel]])
    # cumulative trapezoid in time, dt = 5e-3
    assert np.max(np.abs(u[sel, 0] - ref)) <= 5e-5 * np.max(np.abs(ref))


def test_green_operators_solve_kg(flat_basis_512):
    t = np.linspace(-2, 4, 3001)
    x = flat_basis_512.coords()
    v = bump(np.sqrt((t[:, None] / 0.8) ** 2 + ((x[None, :] - np.pi) / 0.8) ** 2))
    b = flat_basis_512.truncated(40)
    v = b.synthesize(b.project(v))  # keep the source in the retained modes
    for sign in ("retarded", "advanced"):
        u = pr.apply_G(b, v, t, sign)
        r = pr.apply_kg(b, u, t)
        assert np.nanmax(np.abs(r - v)) <= 1e-4 * np.max(np.abs(v))
    caus = pr.apply_G(b, v, t, "causal")
    diff = pr.apply_G(b, v, t, "retarded") - pr.apply_G(b, v, t, "advanced")
    np.testing.assert_allclose(caus, diff, atol=1e-10 * np.max(np.abs(caus)))


def test_retarded_vanishes_before_source(flat_basis_512):
    t = np.linspace(-2, 4, 1201)
    x = flat_basis_512.coords()
    v = bump(np.sqrt((t[:, None] / 0.5) ** 2 + ((x[None, :] - np.pi) / 0.5) ** 2))
    u = pr.apply_G(flat_basis_512, v, t, "retarded", N=64)
    assert np.max(np.abs(u[t < -0.5])) == 0.0
    with pytest.raises(PreconditionError):
        pr.apply_G(flat_basis_512, np.ones_like(v), t)


def test_apply_kg_spectral_and_symbol_agree_on_retained_modes(flat_basis_512):
    t = np.linspace(0, 1, 11)
    b = flat_basis_512.truncated(30)
    coef = np.random.default_rng(0).standard_normal((11, 30))
    u = b.synthesize(coef)
    a = pr.apply_kg(b, u, t, "symbol")
    s = pr.apply_kg(b, u, t, "spectral")
    np.testing.assert_allclose(a[1:-1], s[1:-1], atol=1e-8)


def _brute_mode_energy(lam, window, s_order, which, L=8.0, M=2048):
    # zero padding to [-L, L] keeps the frequency Riemann sum fine enough for small lambda
    dt = 2 * L / M
    t = -L + dt * np.arange(M)
    T, S = np.meshgrid(t, t, indexing="ij")
    f = -np.sin(lam * (T - S)) / lam if which == "K_G" else np.cos(lam * (T - S)) / lam ** 2
    u = window.psi1(T) * window.psi2(S) * f
    F = np.fft.fft2(u) * dt * dt / (2 * np.pi)
    xi = 2 * np.pi * np.fft.fftfreq(M, d=dt)
    dm = (2 * np.pi / (M * dt)) ** 2
    w = (xi[:, None] ** 2 + xi[None, :] ** 2 + 2 * lam * lam) ** s_order
    return float(np.sum(w * np.abs(F) ** 2) * dm)


@pytest.mark.parametrize("which", ["K_G", "K_A"])
@pytest.mark.parametrize("s_order", [-0.75, 0.25])
def test_mode_terms_match_direct_transform(which, s_order):
    window = pr.WindowFunction(0.0, 1.0, 0.0, 1.0)
    lams = np.array([1.0, 3.0, 7.5])
    fast = pr.kernel_mode_terms(lams, window, s_order, which)
    brute = [_brute_mode_energy(lam, window, s_order, which) for lam in lams]
    np.testing.assert_allclose(fast, brute, rtol=1e-8)


def test_norm_experiment_validation():
    window = pr.WindowFunction()
    lam = np.sqrt(np.arange(1, 200) ** 2 + 1.0)
    with pytest.raises(ParameterError):
        pr.kernel_norm_experiment(lam, window, 0.0, [64, 32, 128])
    with pytest.raises(ParameterError):
        pr.kernel_norm_experiment(lam, window, 3.0, [16, 32, 64])
    with pytest.raises(ParameterError):
        pr.kernel_norm_experiment(lam, window, 0.0, [16, 32, 400])


def test_window_is_smooth_at_its_edge():
    assert pr.WindowFunction().edge_defect() <= 1e-12


def test_windowed_kernel_is_diagonal_in_modes(flat_basis_512):
    t = np.linspace(-0.9, 0.9, 9)
    b = solve(MetricModel.flat(1), 64, 12)
    assert pr.offdiagonal_defect(b, 12, pr.WindowFunction(), t) <= 1e-12


def test_spectral_norm_of_single_mode_product():
    b = solve(MetricModel.flat(1), 32, 9)
    nt = 64
    dt = 6.0 / nt
    t = (np.arange(nt) - nt // 2) * dt
    wt = bump(t / 2.5)
    u = (wt[:, None] * wt[None, :])[:, :, None, None] * (b.modes[2][:, None] * b.modes[4][None, :])[None, None]
    a = pr.sobolev_norm_spectral(u, b, dt, dt, 0.0)
    ref = np.sum(wt ** 2) ** 2 * dt * dt
    assert a == pytest.approx(ref, rel=1e-10)


def test_norm_equivalence_on_rough_p1_basis_is_consistent():
    # the direct route uses the quantized symbol, the spectral one the P1 eigenbasis:
    # they agree to discretization error, not to rounding
    b = solve(MetricModel.weierstrass(2.7, 0.15, 3, seed=2), 64, 16)
    x = b.coords()
    nt = 16
    dt = 6.0 / nt
    t = (np.arange(nt) - nt // 2) * dt
    wt = bump(t / 2.5)
    u = (wt[:, None] * wt[None, :])[:, :, None, None] * (np.cos(x)[:, None] * np.cos(x)[None, :])[None, None]
    a = pr.sobolev_norm_spectral(u, b, dt, dt, 2.0)
    d = pr.direct_h2_norm(u, b, dt, dt)
    assert abs(a - d) / d < 0.05


def test_diagonal_restriction_flat_line(flat_basis_512):
    dr = pr.diagonal_restriction(flat_basis_512, 64)
    k, prof = dr.antidiagonal_profile()
    inside = np.abs(k) <= 31
    assert np.ptp(prof[inside]) <= 1e-9 * prof[inside].max()
