import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wflab import kernels
from wflab._jit import use_numba


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 200), alpha=st.floats(0.05, 1.0), seed=st.integers(0, 2 ** 16))
def test_difference_quotient_paths_agree(n, alpha, seed):
    f = np.random.default_rng(seed).standard_normal(n)
    h = 2 * np.pi / n
    a = kernels.sup_difference_quotient_numpy(f, alpha, h)
    b = kernels.sup_difference_quotient_jit(f, alpha, h)
    assert a == pytest.approx(b, rel=1e-13)


@pytest.mark.parametrize("sgn,shift,s", [(-1.0, 1.0, -0.75), (1.0, 3.0, 0.25), (-1.0, 0.0, 0.0)])
def test_mode_energy_paths_agree(rng, sgn, shift, s):
    m = 64
    A1, A2, B1, B2 = (rng.standard_normal(m) + 1j * rng.standard_normal(m) for _ in range(4))
    xi = np.fft.fftfreq(m, 1.0 / m)
    ia = rng.permutation(m).astype(np.int64)
    ib = rng.permutation(m).astype(np.int64)
    a = kernels.separable_mode_energy_numpy(A1, A2, B1, B2, sgn, xi, xi, shift, s, ia, ib)
    b = kernels.separable_mode_energy_jit(A1, A2, B1, B2, sgn, xi, xi, shift, s, ia, ib)
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("dim", [1, 2])
def test_null_flow_paths_agree(rng, dim):
    K = 6
    omega = np.tile(2.0 ** np.arange(1, K + 1), (dim, 1))
    ca = 0.1 * rng.random((dim, K)) * 2.0 ** (-2.0 * np.arange(1, K + 1))
    sa = 0.1 * rng.random((dim, K)) * 2.0 ** (-2.0 * np.arange(1, K + 1))
    x0 = rng.uniform(0, 6, dim)
    xi = rng.standard_normal(dim)
    a = kernels.null_flow_numpy(x0, xi, 1.3, 1e-3, 500, 1.0, omega, ca, sa)
    b = kernels.null_flow_jit(x0, xi, 1.3, 1e-3, 500, 1.0, omega, ca, sa)
    assert a.shape == (501, 2 * dim)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


def test_cone_sample_energy_paths_agree(rng):
    Fa2 = rng.random((128, 128))
    pts = rng.standard_normal((5000, 4)) * 30
    a = kernels.cone_sample_energy_numpy(pts, Fa2, 1.0, 1.0)
    b = kernels.cone_sample_energy_jit(pts, Fa2, 1.0, 1.0)
    assert a == pytest.approx(b, rel=1e-12)


def test_dispatch_follows_environment():
    code = "from wflab._jit import use_numba; print(use_numba())"
    env = dict(os.environ, WFLAB_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    if use_numba():
        env["WFLAB_DISABLE_NUMBA"] = ""
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "True"
