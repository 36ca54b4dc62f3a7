"""Acceptance suite: one test per numbered criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from wflab import microlocal as ml
from wflab import propagator as pr
from wflab.config import WavefrontSection
from wflab.dyadic import bump, psi, weierstrass_field
from wflab.pipeline import flat_spectrum
from wflab.spectral import MetricModel, solve, weyl_check
from wflab.symbols import SymbolGrid, decay_exponent, dyadic_ladder, smooth_symbol


@pytest.fixture(scope="module")
def c11():
    return MetricModel.weierstrass(2.0, 0.15, 8, seed=1)


@pytest.fixture(scope="module")
def tau27():
    return MetricModel.weierstrass(2.7, 0.15, 8, seed=1)


@pytest.fixture(scope="module")
def flat_basis_1024(flat1):
    return solve(flat1, 1024, 256)


def _column_scan(metric):
    basis = solve(metric, 1024, 128)
    return ml.wavefront_scan_column(basis, 128, 0.0, 0, (1.0, 1.25, 1.5, 1.75, 2.0), n_directions=64,
                                    half_angle=math.radians(10), radius=0.75, alpha=8.0, shells=(2, 3, 4, 5))


@pytest.fixture(scope="module")
def c11_scan(c11):
    return _column_scan(c11)


@pytest.fixture(scope="module")
def tau27_scan(tau27):
    return _column_scan(tau27)


# 1 ------------------------------------------------------------------------------------------

def test_c01_flat_spectrum_exact(flat1, criterion):
    t0 = time.perf_counter()
    b = solve(flat1, 512, 255)
    elapsed = time.perf_counter() - t0
    k = np.arange(256)
    exact = np.sort(np.concatenate([k ** 2, k[1:] ** 2]))[:255] + 1.0
    sel = b.lambdas <= 512 / 4
    err = np.max(np.abs(b.lambdas[sel] ** 2 - exact[sel]) / exact[sel])
    ok = err <= 1e-10 and elapsed < 10 and sel.sum() == 255
    criterion(1, ok, "max rel err %.2e over %d modes, %.2f s" % (err, sel.sum(), elapsed))
    assert ok


# 2 ------------------------------------------------------------------------------------------

def test_c02_weyl_exponents(criterion):
    t0 = time.perf_counter()
    cases = [("flat d=1", MetricModel.flat(1), 512, 1), ("flat d=2", MetricModel.flat(2), 64, 2),
             ("weierstrass d=1", MetricModel.weierstrass(2.0, 0.15, 8, seed=1), 1024, 1)]
    parts, ok = [], True
    for name, metric, n, d in cases:
        fit = weyl_check(solve(metric, n, 200), d, (20, 200))
        rel = abs(fit.slope - 1.0 / d) * d
        ok &= rel <= 0.1
        parts.append("%s slope %.4f (%.1f%%)" % (name, fit.slope, 100 * rel))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    criterion(2, ok, ", ".join(parts) + ", %.1f s" % elapsed)
    assert ok


# 3 ------------------------------------------------------------------------------------------

N_LIST = (64, 128, 256, 512, 1024)


@pytest.fixture(scope="module")
def flat_lambdas_4096():
    return np.sqrt(flat_spectrum(1, 4096, 1.0, max(N_LIST)))


def test_c03_kernel_norm_tail(flat_lambdas_4096, criterion):
    t0 = time.perf_counter()
    w = pr.WindowFunction()
    tail = pr.kernel_norm_experiment(flat_lambdas_4096, w, -0.75, N_LIST, "K_G").tail_exponent
    ka = pr.kernel_norm_experiment(flat_lambdas_4096, w, 0.25, N_LIST, "K_A")
    ka_growth = ka.growth(256, 512)
    elapsed = time.perf_counter() - t0
    rel = abs(tail + 2.5) / 2.5
    ok = rel <= 0.2 and ka.tail_exponent < 0 and ka_growth < 0.05 and elapsed < 180
    criterion(3, ok, "K_G tail %.3f vs -2.5 (%.1f%%); K_A s=1/4 tail %.2f growth %.2e" % (
        tail, 100 * rel, ka.tail_exponent, ka_growth))
    assert ok


@pytest.mark.xfail(strict=True, reason=(
    "d = 1 sums of l^(2s-2) converge for s < 1/2, so s = +1/4 is Cauchy: predicted increments "
    "~ N^-0.5 and the measured 256 -> 512 growth is about 2.5%. Divergence starts at s > 1 - d/2."))
def test_c03_non_cauchy_clause_in_d1(flat_lambdas_4096, criterion):
    tab = pr.kernel_norm_experiment(flat_lambdas_4096, pr.WindowFunction(), 0.25, N_LIST, "K_G")
    growth = tab.growth(256, 512)
    criterion(3, growth >= 0.05, "d=1 K_G s=1/4 growth %.2f%% (needs >= 5%%, unattainable in d=1)" % (100 * growth))
    assert growth >= 0.05


def test_c03_non_cauchy_above_threshold_in_d2(criterion):
    # supplement: the same clause where s = 1/4 lies above the Cauchy threshold 1 - d/2 = 0
    lam = np.sqrt(flat_spectrum(2, 64, 1.0, 1024))
    tab = pr.kernel_norm_experiment(lam, pr.WindowFunction(), 0.25, (128, 256, 512, 1024), "K_G")
    growth = tab.growth(256, 512)
    print("d=2 K_G s=1/4 growth %.1f%%, tail %.2f (predicted 0.25)" % (100 * growth, tab.tail_exponent))
    assert growth >= 0.05
    assert tab.tail_exponent > 0


# 4 ------------------------------------------------------------------------------------------

CORPUS = {
    "separable": lambda X, Y: np.cos(X) * np.sin(2 * Y),
    "gaussian": lambda X, Y: np.exp(np.cos(X - Y)),
    "mixed": lambda X, Y: np.sin(X + 2 * Y) + 0.5 * np.cos(3 * X),
    "product": lambda X, Y: np.exp(np.sin(X)) * np.exp(np.cos(2 * Y)),
    "constant": lambda X, Y: 1.0 + 0 * X,
}


def test_c04_norm_equivalence(criterion):
    n = 64
    xs = np.arange(n) * 2 * np.pi / n
    metric = MetricModel.tabulated((1 + 0.2 * np.cos(xs)) ** 2)
    b = solve(metric, n, n - 1)
    nt = 32
    dt = 6.0 / nt
    t = (np.arange(nt) - nt // 2) * dt
    wt = bump(t / 2.5)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    worst, name = 0.0, ""
    for key, g in CORPUS.items():
        u = (wt[:, None] * wt[None, :])[:, :, None, None] * g(X, Y)[None, None]
        a = pr.sobolev_norm_spectral(u, b, dt, dt, 2.0)
        d = pr.direct_h2_norm(u, b, dt, dt)
        rel = abs(a - d) / d
        if rel >= worst:
            worst, name = rel, key
    ok = worst <= 0.01
    criterion(4, ok, "worst relative gap %.2e (%s) over %d functions" % (worst, name, len(CORPUS)))
    assert ok


# 5 ------------------------------------------------------------------------------------------

def test_c05_dt_KA_equals_KG(flat_basis_512, criterion):
    grid = pr.KernelGrid.symmetric(0.05, 21, np.arange(0, 512, 16))
    KG = pr.build_kernel(flat_basis_512, "K_G", 256, grid)
    KD = pr.build_kernel(flat_basis_512, "dt_K_A", 256, grid)
    dev = float(np.max(np.abs(KG.values - KD.values)))
    ok = dev <= 1e-10
    criterion(5, ok, "max |d_t K_A - K_G| = %.2e at N = 256" % dev)
    assert ok


# 6 ------------------------------------------------------------------------------------------

def test_c06_causal_support(flat1, flat_basis_512, criterion):
    b = flat_basis_512
    x = b.coords()
    t = np.linspace(-1.0, 2.5, 701)
    v = bump(np.sqrt((t[:, None] / 0.3) ** 2 + ((x[None, :] - np.pi) / 0.3) ** 2))
    mask = ml.causal_future_mask(flat1, t, x, v > 0)
    leaks = []
    for N in (64, 128, 256):
        u = pr.apply_G(b, v, t, "retarded", N=N)
        leaks.append(float(np.sqrt(np.sum(u[~mask] ** 2) / np.sum(u ** 2))))
    mono = leaks[0] > leaks[1] > leaks[2]
    col = pr.column_kernel(b, 256, 0.0, 0, np.array([1.0]))[0]
    dist = flat1.optical_distance(x, x[0])
    cone = np.max(np.abs(col[np.abs(dist - 1.0) <= 2 * b.spacing]))
    far = np.max(np.abs(col[dist >= 1.5]))
    ratio = far / cone
    ok = leaks[-1] <= 1e-2 and mono and ratio <= 1e-2
    criterion(6, ok, "leak %s, unrelated/cone %.2e" % (" > ".join("%.1e" % v for v in leaks), ratio))
    assert ok


# 7, 8 ---------------------------------------------------------------------------------------

def test_c07_flat_wavefront_inclusions(flat_basis_1024, criterion):
    t0 = time.perf_counter()
    w = WavefrontSection()
    rep = ml.wavefront_scan_flat(flat_basis_1024, 256, w.bases, half_angle=math.radians(8))
    summ = ml.compare_to_C(rep)
    elapsed = time.perf_counter() - t0
    sing = rep.singular()
    swapped_in_C = all(ml.oracle_C(flat_basis_1024.metric, _swap(e)) for e in sing)
    ok = (summ["precision"] == 1.0 and summ["recall"] >= 0.9 and summ["time_law"] and summ["char_law"]
          and swapped_in_C and elapsed < 300)
    criterion(7, ok, "precision %.3f recall %.3f over %d singular / %d C-directions, %.0f s" % (
        summ["precision"], summ["recall"], summ["n_singular"], summ["n_C_directions"], elapsed))
    assert ok


def _swap(entry):
    # (t, x, s, y; xi0, xi, eta0, eta) -> ((t, x), (xi0, xi)) ~ ((s, y), (-eta0, -eta))
    t, x, s, y = entry.base
    d = np.asarray(entry.direction)
    return (t, x), (d[0], d[1]), (s, y), (-d[2], -d[3])


def test_c08_diagonal_non_decay(flat_basis_1024, criterion):
    diag = ml.diagonal_scan(flat_basis_1024, 256)
    ok = diag.ray_spread <= 2.0 and diag.transverse.saturated
    criterion(8, ok, "anti-diagonal shell spread %.4f, transverse saturated=%s" % (
        diag.ray_spread, diag.transverse.saturated))
    assert ok


# 9, 10 --------------------------------------------------------------------------------------

def _reference_branches(metric, y0, times):
    """Null geodesics from (0, y0) integrated with an independent adaptive solver."""
    out = []
    for sgn in (1.0, -1.0):
        xi_start = -sgn * float(metric.c(y0))

        def rhs(_, z):
            c = float(metric.c(z[0]))
            g = float(metric.grad_c(z[0])[0])
            return [-z[1] / (c * c), -g * z[1] ** 2 / c ** 3]

        sol = solve_ivp(rhs, (0.0, max(times)), [y0, xi_start], method="DOP853", rtol=1e-12, atol=1e-13,
                        dense_output=True)
        out.append(sol.sol)
    return out


def test_c09_c11_column_scan(c11, c11_scan, criterion):
    rep = c11_scan
    summ = ml.compare_to_C(rep, c11)
    h = 2 * np.pi / 1024
    branches = _reference_branches(c11, 0.0, (2.0,))
    worst_cells, worst_angle = 0.0, 0.0
    for e in rep.singular():
        t, x = e.base
        best = None
        for br in branches:
            xb, xib = br(t)
            gap = abs((x - xb + np.pi) % (2 * np.pi) - np.pi) / h
            cov = np.array([1.0, xib])
            cosang = abs(cov @ np.asarray(e.direction)) / np.linalg.norm(cov) / np.linalg.norm(e.direction)
            ang = math.degrees(math.acos(min(1.0, cosang)))
            if best is None or gap < best[0]:
                best = (gap, ang)
        worst_cells, worst_angle = max(worst_cells, best[0]), max(worst_angle, best[1])
    p2 = rep.meta["p2_max"]
    ok = summ["n_singular"] > 0 and summ["precision"] == 1.0 and worst_cells <= 1.0 and worst_angle <= 5.0 \
        and p2 <= 1e-7
    criterion(9, ok, "%d singular, precision %.2f, off-cone <= %.2f cells / %.2f deg, max|p2| %.1e" % (
        summ["n_singular"], summ["precision"], worst_cells, worst_angle, p2))
    assert ok


def test_c10_tau_ordering(c11_scan, tau27_scan, criterion):
    res = ml.tau_ordering(c11_scan, tau27_scan, margin=0.5)
    ok = res["holds"] and res["matched"] >= 16
    criterion(10, ok, "%d matched C-directions, min(s_2.7 - s_C11) = %.4f >= -0.5" % (
        res["matched"], res["min_difference"]))
    assert ok


# 11 -----------------------------------------------------------------------------------------

def test_c11_symbol_smoothing_exponents(criterion):
    lad = dyadic_ladder(10)
    weight = (1 + lad ** 2)[None, :]
    parts, ok = [], True
    for tau, gamma in ((0.7, 0.9), (1.2, 0.9)):
        W = weierstrass_field(tau, 1.0, 11, 8192)
        p = SymbolGrid(W.values[:, None] * weight, lad, 2.0, tau=tau)
        sm = smooth_symbol(p, gamma)
        slope, _ = decay_exponent(sm)
        pred = 2 - tau * gamma
        rel = abs(slope - pred) / pred
        # reconstruction measured in the order-2 symbol norm sup |p| / <xi>^2
        rec = np.max(np.abs(sm.sharp.values + sm.flat.values - p.values) / weight)
        ok &= rel <= 0.15 and rec <= 1e-12
        parts.append("(%.1f, %.1f) slope %.3f vs %.2f (%.1f%%), recon %.1e" % (tau, gamma, slope, pred,
                                                                              100 * rel, rec))
    criterion(11, ok, "; ".join(parts))
    assert ok


# 12 -----------------------------------------------------------------------------------------

def test_c12_property_suites(c11, flat_basis_512, criterion):
    r = np.linspace(0, 2.0 ** 12, 20001)
    pu = float(np.max(np.abs(sum(psi(None, j, r) for j in range(13)) - 1.0)))

    b = solve(c11, 1024, 128)
    grid = pr.KernelGrid.symmetric(0.05, 17, np.arange(0, 1024, 32))
    K = pr.build_kernel(b, "K_G", 128, grid)
    anti, trans = K.antisymmetry_defect(), K.translation_defect()

    x0 = 2.3
    c = float(c11.c(x0))
    fwd = ml.hamiltonian_flow(c11, ((0.0, x0), (1.0, c)), 2.0)
    t1, x1, xi1 = fwd.end
    back = ml.hamiltonian_flow(c11, ((t1, x1[0]), (1.0, xi1[0])), -2.0, tol_char=1e-7)
    rev = max(abs(back.end[1][0] - x0), abs(back.end[2][0] - c))

    b2 = solve(c11, 1024, 128)
    K2 = pr.build_kernel(b2, "K_G", 128, grid)
    fwd2 = ml.hamiltonian_flow(c11, ((0.0, x0), (1.0, c)), 2.0)
    same = (b.modes.tobytes() == b2.modes.tobytes() and K.values.tobytes() == K2.values.tobytes()
            and fwd.x.tobytes() == fwd2.x.tobytes())

    ok = pu <= 1e-12 and anti <= 1e-12 and trans <= 1e-12 and rev <= 1e-6 and same
    criterion(12, ok, "unity %.1e, antisym %.1e, transl %.1e, reversibility %.1e, bit-identical=%s" % (
        pu, anti, trans, rev, same))
    assert ok
