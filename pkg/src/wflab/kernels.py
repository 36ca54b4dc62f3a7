"""Hot loops with a numba implementation and a pure-numpy fallback.

Each kernel exists twice: ``<name>_numpy`` (vectorized numpy) and
``<name>_jit`` (explicit loops compiled by numba when available). The public
``<name>`` picks the jitted version unless numba is missing or disabled via
``WFLAB_DISABLE_NUMBA``. Both versions are tested for agreement and timed in
``benchmarks/bench_kernels.py``.
"""

import numpy as np

from ._jit import njit, use_numba


# --- Hoelder difference quotients -------------------------------------------

def sup_difference_quotient_numpy(f, alpha, h):
    n = f.shape[0]
    best = 0.0
    for lag in range(1, n // 2 + 1):
        diff = np.abs(np.roll(f, -lag) - f).max()
        best = max(best, diff / (lag * h) ** alpha)
    return best


@njit(cache=True)
def sup_difference_quotient_jit(f, alpha, h):
    n = f.shape[0]
    best = 0.0
    for lag in range(1, n // 2 + 1):
        scale = (lag * h) ** alpha
        m = 0.0
        for i in range(n):
            d = abs(f[(i + lag) % n] - f[i])
            if d > m:
                m = d
        if m / scale > best:
            best = m / scale
    return best


def sup_difference_quotient(f, alpha, h):
    """Sup over periodic lags of ``max |f(x+l) - f(x)| / (l h)^alpha``."""
    if use_numba():
        return sup_difference_quotient_jit(f, alpha, h)
    return sup_difference_quotient_numpy(f, alpha, h)


# --- weighted Sobolev energy of one separable kernel mode --------------------

def separable_mode_energy_numpy(A1, A2, B1, B2, sgn, xi, eta, shift, s, ia, ib):
    F = np.outer(A1[ia], B1[ib]) + sgn * np.outer(A2[ia], B2[ib])
    w = (xi[ia, None] ** 2 + eta[None, ib] ** 2 + shift) ** s
    return float(np.sum(w * (F.real ** 2 + F.imag ** 2)))


@njit(cache=True)
def separable_mode_energy_jit(A1, A2, B1, B2, sgn, xi, eta, shift, s, ia, ib):
    total = 0.0
    for p in range(ia.shape[0]):
        i = ia[p]
        a1 = A1[i]
        a2 = A2[i]
        x2 = xi[i] * xi[i] + shift
        for q in range(ib.shape[0]):
            k = ib[q]
            f = a1 * B1[k] + sgn * a2 * B2[k]
            total += (x2 + eta[k] * eta[k]) ** s * (f.real * f.real + f.imag * f.imag)
    return total


def separable_mode_energy(A1, A2, B1, B2, sgn, xi, eta, shift, s, ia, ib):
    """``sum_{i in ia, k in ib} (xi_i^2 + eta_k^2 + shift)^s |A1_i B1_k + sgn A2_i B2_k|^2``.

    This is the weighted energy of the 2-D transform of
    ``a1(t) b1(s) + sgn a2(t) b2(s)`` restricted to the index sets where the
    factors are non-negligible.
    """
    args = (A1, A2, B1, B2, float(sgn), xi, eta, float(shift), float(s), ia, ib)
    if use_numba():
        return separable_mode_energy_jit(*args)
    return separable_mode_energy_numpy(*args)


# --- null bicharacteristic flow (RK4 in coordinate time) ----------------------

def _conformal_numpy(x, c0, omega, ca, sa):
    c = c0
    g = np.zeros(x.shape[0])
    for ax in range(x.shape[0]):
        arg = omega[ax] * x[ax]
        c += np.sum(ca[ax] * np.cos(arg) + sa[ax] * np.sin(arg))
        g[ax] = np.sum(omega[ax] * (-ca[ax] * np.sin(arg) + sa[ax] * np.cos(arg)))
    return c, g


def _rhs_numpy(x, xi, xi0, c0, omega, ca, sa):
    c, g = _conformal_numpy(x, c0, omega, ca, sa)
    q = np.sum(xi * xi)
    return -xi / (c * c * xi0), -g * q / (c ** 3 * xi0)


def null_flow_numpy(x0, xi_init, xi0, dt, nsteps, c0, omega, ca, sa):
    d = x0.shape[0]
    out = np.empty((nsteps + 1, 2 * d))
    x = x0.astype(float).copy()
    xi = xi_init.astype(float).copy()
    out[0, :d] = x
    out[0, d:] = xi
    for k in range(nsteps):
        k1x, k1p = _rhs_numpy(x, xi, xi0, c0, omega, ca, sa)
        k2x, k2p = _rhs_numpy(x + 0.5 * dt * k1x, xi + 0.5 * dt * k1p, xi0, c0, omega, ca, sa)
        k3x, k3p = _rhs_numpy(x + 0.5 * dt * k2x, xi + 0.5 * dt * k2p, xi0, c0, omega, ca, sa)
        k4x, k4p = _rhs_numpy(x + dt * k3x, xi + dt * k3p, xi0, c0, omega, ca, sa)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        xi = xi + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        out[k + 1, :d] = x
        out[k + 1, d:] = xi
    return out


@njit(cache=True)
def _rhs_jit(x, xi, xi0, c0, omega, ca, sa, dx, dp):
    d = x.shape[0]
    c = c0
    for ax in range(d):
        g = 0.0
        for k in range(omega.shape[1]):
            arg = omega[ax, k] * x[ax]
            cs = np.cos(arg)
            sn = np.sin(arg)
            c += ca[ax, k] * cs + sa[ax, k] * sn
            g += omega[ax, k] * (-ca[ax, k] * sn + sa[ax, k] * cs)
        dp[ax] = g
    q = 0.0
    for ax in range(d):
        q += xi[ax] * xi[ax]
    for ax in range(d):
        dx[ax] = -xi[ax] / (c * c * xi0)
        dp[ax] = -dp[ax] * q / (c * c * c * xi0)


@njit(cache=True)
def null_flow_jit(x0, xi_init, xi0, dt, nsteps, c0, omega, ca, sa):
    d = x0.shape[0]
    out = np.empty((nsteps + 1, 2 * d))
    x = x0.astype(np.float64).copy()
    xi = xi_init.astype(np.float64).copy()
    k1x = np.empty(d)
    k1p = np.empty(d)
    k2x = np.empty(d)
    k2p = np.empty(d)
    k3x = np.empty(d)
    k3p = np.empty(d)
    k4x = np.empty(d)
    k4p = np.empty(d)
    tx = np.empty(d)
    tp = np.empty(d)
    for i in range(d):
        out[0, i] = x[i]
        out[0, d + i] = xi[i]
    for k in range(nsteps):
        _rhs_jit(x, xi, xi0, c0, omega, ca, sa, k1x, k1p)
        for i in range(d):
            tx[i] = x[i] + 0.5 * dt * k1x[i]
            tp[i] = xi[i] + 0.5 * dt * k1p[i]
        _rhs_jit(tx, tp, xi0, c0, omega, ca, sa, k2x, k2p)
        for i in range(d):
            tx[i] = x[i] + 0.5 * dt * k2x[i]
            tp[i] = xi[i] + 0.5 * dt * k2p[i]
        _rhs_jit(tx, tp, xi0, c0, omega, ca, sa, k3x, k3p)
        for i in range(d):
            tx[i] = x[i] + dt * k3x[i]
            tp[i] = xi[i] + dt * k3p[i]
        _rhs_jit(tx, tp, xi0, c0, omega, ca, sa, k4x, k4p)
        for i in range(d):
            x[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
            xi[i] += dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])
            out[k + 1, i] = x[i]
            out[k + 1, d + i] = xi[i]
    return out


def null_flow(x0, xi_init, xi0, dt, nsteps, c0, omega, ca, sa):
    """RK4 trajectory of ``dx/dt = -c^-2 xi / xi0``, ``dxi/dt = -c^-3 grad(c) |xi|^2 / xi0``.

    The conformal factor is ``c0 + sum_ax sum_k ca cos(omega x_ax) + sa sin(omega x_ax)``
    with per-axis coefficient rows (zero padded). Returns ``(nsteps+1, 2d)``
    rows ``(x, xi)``.
    """
    args = (np.asarray(x0, dtype=float), np.asarray(xi_init, dtype=float), float(xi0), float(dt), int(nsteps),
            float(c0), omega, ca, sa)
    if use_numba():
        return null_flow_jit(*args)
    return null_flow_numpy(*args)


# --- doubled-space cone sampling -----------------------------------------------

def cone_sample_energy_numpy(points, Fa2, dk, sigma_b):
    a0 = 0.5 * (points[:, 0] - points[:, 2]) / dk
    a1 = 0.5 * (points[:, 1] - points[:, 3]) / dk
    P, Q = Fa2.shape
    i0 = np.floor(a0).astype(np.int64)
    j0 = np.floor(a1).astype(np.int64)
    f0 = a0 - i0
    f1 = a1 - j0
    v = ((1 - f0) * (1 - f1) * Fa2[i0 % P, j0 % Q] + f0 * (1 - f1) * Fa2[(i0 + 1) % P, j0 % Q]
         + (1 - f0) * f1 * Fa2[i0 % P, (j0 + 1) % Q] + f0 * f1 * Fa2[(i0 + 1) % P, (j0 + 1) % Q])
    b2 = (points[:, 0] + points[:, 2]) ** 2 + (points[:, 1] + points[:, 3]) ** 2
    return float(np.mean(v * sigma_b ** 4 * np.exp(-sigma_b ** 2 * b2)))


@njit(cache=True)
def cone_sample_energy_jit(points, Fa2, dk, sigma_b):
    P, Q = Fa2.shape
    total = 0.0
    s4 = sigma_b ** 4
    s2 = sigma_b ** 2
    for m in range(points.shape[0]):
        a0 = 0.5 * (points[m, 0] - points[m, 2]) / dk
        a1 = 0.5 * (points[m, 1] - points[m, 3]) / dk
        i0 = np.int64(np.floor(a0))
        j0 = np.int64(np.floor(a1))
        f0 = a0 - i0
        f1 = a1 - j0
        v = ((1 - f0) * (1 - f1) * Fa2[i0 % P, j0 % Q] + f0 * (1 - f1) * Fa2[(i0 + 1) % P, j0 % Q]
             + (1 - f0) * f1 * Fa2[i0 % P, (j0 + 1) % Q] + f0 * f1 * Fa2[(i0 + 1) % P, (j0 + 1) % Q])
        b0 = points[m, 0] + points[m, 2]
        b1 = points[m, 1] + points[m, 3]
        total += v * s4 * np.exp(-s2 * (b0 * b0 + b1 * b1))
    return total / points.shape[0]


def cone_sample_energy(points, Fa2, dk, sigma_b):
    """Mean of ``|F_a((xi - eta)/2)|^2 |F_b(xi + eta)|^2`` over 4-D sample points.

    ``Fa2`` is ``|F_a|^2`` on a square DFT grid with frequency step ``dk``
    (FFT index order); values between nodes are bilinear. ``F_b`` is the
    transform of the Gaussian window ``exp(-|z|^2 / (2 sigma_b^2))``.
    """
    if use_numba():
        return cone_sample_energy_jit(points, Fa2, float(dk), float(sigma_b))
    return cone_sample_energy_numpy(points, Fa2, float(dk), float(sigma_b))
