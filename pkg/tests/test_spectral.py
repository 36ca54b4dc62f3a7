import numpy as np
import pytest

from wflab.errors import CacheMismatchError, ConstructionError, ParameterError
from wflab.spectral import (MetricModel, _assemble_p1_1d, assemble, eigensolve, load_basis, residuals, save_basis,
                            selfadjoint_check, solve, weyl_check)


def _flat_levels(count):
    ks = [0] + [k for k in range(1, count) for _ in (0, 1)]
    return np.array(ks[:count], dtype=float)


def test_flat_trig_spectrum_exact(flat1):
    b = solve(flat1, 128, 101)
    np.testing.assert_allclose(b.lambdas ** 2, _flat_levels(101) ** 2 + 1, rtol=1e-13)
    assert b.orthonormality_defect() <= 1e-12


def test_p1_flat_matches_discrete_dispersion(flat1):
    # consistent-mass P1: lambda^2 = (6 / h^2) (1 - cos kh) / (2 + cos kh) + m^2
    n = 64
    h = 2 * np.pi / n
    b = eigensolve(_assemble_p1_1d(flat1, n), 16)
    k = _flat_levels(16)
    exact = 6 / h ** 2 * (1 - np.cos(k * h)) / (2 + np.cos(k * h)) + 1
    np.testing.assert_allclose(b.lambdas ** 2, exact, rtol=1e-12)


def test_constant_tabulated_metric_scales_speed():
    met = MetricModel.tabulated(np.full(32, 4.0), mass=0.5)
    b = solve(met, 32, 21)
    np.testing.assert_allclose(b.lambdas ** 2, _flat_levels(21) ** 2 / 4 + 0.25, rtol=1e-12)


def test_weierstrass_basis_is_orthonormal_with_small_residuals(rough_c11):
    pair = assemble(rough_c11, 512)
    b = eigensolve(pair, 128)
    assert b.method == "p1"
    assert b.orthonormality_defect() <= 1e-8
    assert residuals(pair, b).max() <= 1e-8
    assert np.all(np.diff(b.lambdas) >= -1e-12)
    assert b.lambdas[0] ** 2 >= rough_c11.mass ** 2 * (1 - 1e-9)
    chk = selfadjoint_check(pair)
    assert chk["sym_S"] <= 1e-12 and chk["sym_M"] <= 1e-12 and chk["min_eig_M"] > 0


def test_rayleigh_quotients_bounded_below_by_mass(rough_c11):
    chk = selfadjoint_check(assemble(rough_c11, 256))
    assert chk["min_rayleigh"] >= rough_c11.mass ** 2 * (1 - 1e-10)


def test_weyl_fit_range_rules(flat_basis_512):
    with pytest.raises(ParameterError):
        weyl_check(flat_basis_512, 1, (10, 200))
    with pytest.raises(ParameterError):
        weyl_check(flat_basis_512, 1, (30, 40))
    fit = weyl_check(flat_basis_512, 1, (26, 256))
    assert abs(fit.slope - 1) < 0.1
    idx = np.arange(1, flat_basis_512.N + 1)
    assert np.all(idx ** 2 <= fit.constant * flat_basis_512.lambdas ** 2 * (1 + 1e-12))


def test_too_many_modes(flat1, rough_c11):
    with pytest.raises(ParameterError):
        solve(rough_c11, 64, 17)
    with pytest.raises(ParameterError):
        solve(flat1, 64, 64)
    with pytest.raises(ParameterError):
        assemble(flat1, 48)


def test_metric_positivity():
    with pytest.raises(ConstructionError):
        MetricModel.weierstrass(0.3, 2.0, 6, seed=0)
    with pytest.raises(ConstructionError):
        MetricModel.tabulated(np.array([1.0, -1.0, 1.0, 1.0]))


def test_optical_distance_flat_and_scaled():
    flat = MetricModel.flat(1)
    assert flat.optical_distance(0.5, 6.0) == pytest.approx(2 * np.pi - 5.5)
    h4 = MetricModel.tabulated(np.full(16, 4.0))
    assert h4.optical_distance(0.0, 1.0) == pytest.approx(2.0)


def test_optical_coordinate_matches_quadrature(rough_c11):
    from scipy.integrate import quad

    for x in (0.3, 2.0, 5.5):
        ref, _ = quad(lambda s: float(rough_c11.c(s)), 0, x, limit=400)
        assert rough_c11.optical_coordinate(x) == pytest.approx(ref, rel=1e-10)


def test_project_synthesize_roundtrip(flat_basis_512, rng):
    coef = rng.standard_normal((3, flat_basis_512.N))
    u = flat_basis_512.synthesize(coef)
    np.testing.assert_allclose(flat_basis_512.project(u), coef, atol=1e-11)


def test_basis_cache_roundtrip_and_mismatch(tmp_path, rough_c11):
    b = solve(rough_c11, 128, 32)
    path = tmp_path / "basis.bin"
    save_basis(path, b, "abc")
    back = load_basis(path, rough_c11, "abc")
    np.testing.assert_array_equal(back.lambdas, b.lambdas)
    np.testing.assert_array_equal(back.modes, b.modes)
    with pytest.raises(CacheMismatchError):
        load_basis(path, rough_c11, "abd")
    other = MetricModel.weierstrass(2.0, 0.15, 5, seed=2)
    with pytest.raises(CacheMismatchError):
        load_basis(path, other, "abc")


def test_two_dimensional_flat_levels():
    b = solve(MetricModel.flat(2), 16, 21)
    k = np.arange(-7, 8)
    levels = np.sort((k[:, None] ** 2 + k[None, :] ** 2).ravel())[:21] + 1.0
    np.testing.assert_allclose(b.lambdas ** 2, levels, rtol=1e-13)


def test_solve_is_deterministic(rough_c11):
    a = solve(rough_c11, 128, 24)
    b = solve(rough_c11, 128, 24)
    assert a.lambdas.tobytes() == b.lambdas.tobytes()
    assert a.modes.tobytes() == b.modes.tobytes()


def test_rough_eigenvalue_self_convergence():
    # no exact oracle below C^2: Richardson ratio of successive grid doublings
    metric = MetricModel.weierstrass(1.2, 0.15, 8, seed=1)
    lam = [solve(metric, n, 32).lambdas[9] for n in (512, 1024, 2048)]
    rate = np.log2(abs(lam[1] - lam[0]) / abs(lam[2] - lam[1]))
    assert rate >= 1.5
