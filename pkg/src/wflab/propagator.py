"""Truncated spectral kernels of the Klein-Gordon causal propagator.

Conventions
-----------
``K_G(t,x;s,y) = -sum_j lambda_j^-1 sin(lambda_j (t-s)) phi_j(x) phi_j(y)``
and ``K_A(t,x;s,y) = +sum_j lambda_j^-2 cos(lambda_j (t-s)) phi_j(x) phi_j(y)``,
so that ``d_t K_A = K_G`` term by term. Time differences are evaluated on an
integer lag lattice (``t - s = dt * lag``), which makes antisymmetry and
time-translation invariance exact properties of the sampled arrays.

The Green operators act on sources ``v(t, x)``: the retarded ``G+`` solves
``P u = v`` with support in the causal future, the advanced ``G-`` with
support in the past, and ``causal = G+ - G-``.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .dyadic import TWO_PI, bump, regression_slope
from .errors import ParameterError, PreconditionError
from .spectral import SpectralBasis
from .symbols import kg_symbol, quantization_matrix

WHICH = ("K_G", "K_A", "dt_K_A")


def time_factors(lambdas, lags, dt: float, which: str) -> np.ndarray:
    """Per-mode time dependence on integer lags, shape ``(len(lags), N)``.

    Odd factors are computed for non-negative lags and reflected, so
    ``f(-l) = -f(l)`` holds bit for bit.
    """
    lags = np.asarray(lags, dtype=np.int64)
    lam = np.asarray(lambdas, dtype=float)
    arg = dt * np.abs(lags).astype(float)[:, None] * lam[None, :]
    sign = np.where(lags < 0, -1.0, 1.0)[:, None]
    if which == "K_G":
        return -sign * np.sin(arg) / lam
    if which == "K_A":
        return np.cos(arg) / lam ** 2
    if which == "dt_K_A":
        # complex-step derivative of the K_A factor: Im f(tau + i e) / e
        step = 1e-30
        z = np.cos((dt * np.abs(lags).astype(float)[:, None] + 1j * step) * lam[None, :])
        return sign * z.imag / step / lam ** 2
    raise ParameterError("which must be one of %s" % (WHICH,))


@dataclass(frozen=True)
class KernelGrid:
    """Space-time sampling for a kernel: times on a common lattice ``dt * index``.

    Attributes
    ----------
    dt : float
    t_index, s_index : ndarray of int
        Lattice indices of the ``t`` and ``s`` samples.
    x_index, y_index : ndarray of int
        Flat indices of basis grid points for ``x`` and ``y``.
    """

    dt: float
    t_index: np.ndarray
    s_index: np.ndarray
    x_index: np.ndarray
    y_index: np.ndarray

    @property
    def t(self):
        return self.dt * self.t_index

    @property
    def s(self):
        return self.dt * self.s_index

    @property
    def shape(self):
        return (self.t_index.size, self.x_index.size, self.s_index.size, self.y_index.size)

    @classmethod
    def symmetric(cls, dt: float, nt: int, x_index):
        """Same samples for ``(t, x)`` and ``(s, y)``: ``t = dt * (0..nt-1 - nt//2)``."""
        idx = np.arange(nt) - nt // 2
        x_index = np.asarray(x_index, dtype=np.int64)
        return cls(dt, idx, idx.copy(), x_index, x_index.copy())


@dataclass(eq=False)
class SampledKernel:
    """Truncated kernel stored by time lag.

    ``table[l - lag_min, a, b]`` is the kernel at ``t - s = dt * l``,
    ``x = x_index[a]``, ``y = y_index[b]``.
    """

    which: str
    N: int
    grid: KernelGrid
    table: np.ndarray
    lag_min: int
    basis: SpectralBasis

    @property
    def values(self) -> np.ndarray:
        """Expanded samples with axes ``(t, x, s, y)``."""
        lag = self.grid.t_index[:, None] - self.grid.s_index[None, :] - self.lag_min
        return np.transpose(self.table[lag], (0, 2, 1, 3))

    def antisymmetry_defect(self) -> float:
        """``max |K(t,x;s,y) + K(s,y;t,x)|`` (needs identical t/s and x/y samples)."""
        g = self.grid
        if not (np.array_equal(g.t_index, g.s_index) and np.array_equal(g.x_index, g.y_index)):
            raise PreconditionError("antisymmetry needs identical (t,x) and (s,y) samples")
        V = self.values
        return float(np.max(np.abs(V + V.transpose(2, 3, 0, 1))))

    def translation_defect(self, shift: int = 1) -> float:
        """``max |K(t+h,x;s+h,y) - K(t,x;s,y)|`` for a lattice shift ``h``."""
        V = self.values
        return float(np.max(np.abs(V[shift:, :, shift:, :] - V[:-shift, :, :-shift, :])))


def _spatial_outer(basis: SpectralBasis, N: int, xi, yi):
    flat = basis.modes[:N].reshape(N, -1)
    Px = flat[:, xi]
    Py = flat[:, yi]
    return (Px[:, :, None] * Py[:, None, :]).reshape(N, -1)


def build_kernel(basis: SpectralBasis, which: str, N: int, grid: KernelGrid,
                 memory_budget: float = 2e9) -> SampledKernel:
    """Sum the truncated kernel series on ``grid``.

    Parameters
    ----------
    which : {"K_G", "K_A", "dt_K_A"}
        ``dt_K_A`` is the term-wise time derivative of the ``K_A`` series.
    N : int
        Number of modes, at most ``basis.trusted_count()``.
    memory_budget : float
        Bytes allowed for the expanded table.

    Raises
    ------
    PreconditionError
        ``N`` exceeds the trusted modes or the table would exceed the budget
        (tile the grid and build pieces separately).
    """
    if which not in WHICH:
        raise ParameterError("which must be one of %s" % (WHICH,))
    if not 1 <= N <= basis.trusted_count():
        raise PreconditionError("N=%d exceeds the %d trusted modes" % (N, basis.trusted_count()))
    lag_min = int(grid.t_index.min() - grid.s_index.max())
    lag_max = int(grid.t_index.max() - grid.s_index.min())
    lags = np.arange(lag_min, lag_max + 1)
    need = 8.0 * (lags.size + grid.shape[0] * grid.shape[2]) * grid.x_index.size * grid.y_index.size
    if need > memory_budget:
        raise PreconditionError("kernel grid needs %.2e bytes (> %.2e); tile the grid" % (need, memory_budget))
    T = time_factors(basis.lambdas[:N], lags, grid.dt, which)
    table = (T @ _spatial_outer(basis, N, grid.x_index, grid.y_index)).reshape(
        lags.size, grid.x_index.size, grid.y_index.size)
    return SampledKernel(which, N, grid, table, lag_min, basis)


def column_kernel(basis: SpectralBasis, N: int, s0: float, y0_index: int, t, which: str = "K_G") -> np.ndarray:
    """``K(t, x; s0, y0)`` on times ``t`` and the whole spatial grid, shape ``(len(t),) + grid``."""
    if not 1 <= N <= basis.trusted_count():
        raise PreconditionError("N=%d exceeds the %d trusted modes" % (N, basis.trusted_count()))
    lam = basis.lambdas[:N]
    tau = np.asarray(t, dtype=float) - s0
    if which == "K_G":
        T = -np.sin(np.outer(tau, lam)) / lam
    elif which == "K_A":
        T = np.cos(np.outer(tau, lam)) / lam ** 2
    else:
        raise ParameterError("column kernels support K_G and K_A")
    flat = basis.modes[:N].reshape(N, -1)
    out = (T * flat[:, y0_index]) @ flat
    return out.reshape((tau.size,) + basis.grid_shape)


# --- Green operators ---------------------------------------------------------

def apply_G(basis: SpectralBasis, v, t, sign: str = "retarded", N: Optional[int] = None,
            edge_tol: float = 1e-12) -> np.ndarray:
    """Duhamel action of the Green operators on a source ``v(t, x)``.

    Space is handled exactly in the eigenbasis; time integrals use the
    cumulative trapezoid rule on the uniform grid ``t``.

    Parameters
    ----------
    v : ndarray
        Source, shape ``(len(t),) + grid``.
    sign : {"retarded", "advanced", "causal"}
        ``G+``, ``G-`` or ``G+ - G-``.

    Raises
    ------
    PreconditionError
        The source does not vanish at the ends of the time window.
    """
    v = np.asarray(v, dtype=float)
    t = np.asarray(t, dtype=float)
    N = basis.trusted_count() if N is None else N
    b = basis.truncated(N)
    scale = np.max(np.abs(v))
    if scale == 0.0:
        return np.zeros_like(v)
    if max(np.max(np.abs(v[0])), np.max(np.abs(v[-1]))) > edge_tol * scale:
        raise PreconditionError("source touches the edge of the time window")
    coef = b.project(v)  # (nt, N)
    lam = b.lambdas
    ct = np.cos(np.outer(t, lam))
    st = np.sin(np.outer(t, lam))
    C = cumulative_trapezoid(ct * coef, t, axis=0, initial=0.0)
    S = cumulative_trapezoid(st * coef, t, axis=0, initial=0.0)
    if sign == "retarded":
        u = (st * C - ct * S) / lam
    elif sign == "advanced":
        u = -(st * (C[-1] - C) - ct * (S[-1] - S)) / lam
    elif sign == "causal":
        u = (st * C[-1] - ct * S[-1]) / lam
    else:
        raise ParameterError("sign must be retarded, advanced or causal")
    return b.synthesize(u)


def apply_kg(basis: SpectralBasis, u, t, spatial: str = "symbol") -> np.ndarray:
    """``P u = u_tt + A u`` on a 1-D slice, second-order differences in time.

    ``spatial="symbol"`` quantizes the Klein-Gordon symbol (independent of
    the eigenbasis); ``"spectral"`` uses the eigen-expansion. Interior time
    samples only: the first and last rows are returned as NaN.
    """
    u = np.asarray(u, dtype=float)
    dt = t[1] - t[0]
    out = np.full_like(u, np.nan)
    utt = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dt ** 2
    if spatial == "symbol":
        Q = quantization_matrix(kg_symbol(basis.metric).space_symbol(basis.n))
        Au = u[1:-1] @ Q.T
    else:
        Au = basis.synthesize(basis.project(u[1:-1]) * basis.lambdas ** 2)
    out[1:-1] = utt + Au
    return out


# --- Sobolev norms on R^2 x Sigma^2 ----------------------------------------------

def _fourier_2d(u, dt: float, ds: float):
    """Continuous-normalized transform over the first two axes."""
    F = np.fft.fft2(u, axes=(0, 1)) * (dt * ds / TWO_PI)
    xi = TWO_PI * np.fft.fftfreq(u.shape[0], d=dt)
    eta = TWO_PI * np.fft.fftfreq(u.shape[1], d=ds)
    dmeasure = (TWO_PI / (u.shape[0] * dt)) * (TWO_PI / (u.shape[1] * ds))
    return F, xi, eta, dmeasure


def project_pairs(basis: SpectralBasis, u) -> np.ndarray:
    """Coefficients ``u_jk(t, s)`` of a sample array with axes ``(t, s) + grid + grid``."""
    c_y = basis.project(u)  # (t, s, x..., N)
    c_y = np.moveaxis(c_y, -1, 2)  # (t, s, N, x...)
    c_xy = basis.project(c_y)  # (t, s, N_y, N_x)
    return np.swapaxes(c_xy, 2, 3)  # (t, s, j, k)


def sobolev_norm_spectral(u, basis: SpectralBasis, dt: float, ds: float, s_order: float,
                          coefficients: bool = False) -> float:
    """Squared spectral Sobolev norm on ``R^2 x Sigma^2``.

    ``sum_jk int (xi0^2 + eta0^2 + lambda_j^2 + lambda_k^2)^s |F u_jk|^2``
    with the unitary ``(2 pi)^(-1/2)`` per-dimension Fourier normalization.

    Parameters
    ----------
    u : ndarray
        Samples with axes ``(t, s) + grid + grid``, or coefficients with axes
        ``(t, s, j, k)`` when ``coefficients`` is true. Time samples must
        be compactly supported in the window.

    Raises
    ------
    ParameterError
        ``s_order`` outside ``[-2, 2]``.
    """
    if not -2.0 <= s_order <= 2.0:
        raise ParameterError("s_order must lie in [-2, 2]")
    c = np.asarray(u) if coefficients else project_pairs(basis, u)
    N1, N2 = c.shape[2], c.shape[3]
    F, xi, eta, dm = _fourier_2d(c, dt, ds)
    lam2 = basis.lambdas ** 2
    w = (xi[:, None, None, None] ** 2 + eta[None, :, None, None] ** 2
         + lam2[None, None, :N1, None] + lam2[None, None, None, :N2]) ** s_order
    return float(np.sum(w * np.abs(F) ** 2) * dm)


def direct_h2_norm(u, basis: SpectralBasis, dt: float, ds: float) -> float:
    """``|| (-d_t^2 - d_s^2 + A_x + A_y) u ||^2`` evaluated without the eigenbasis.

    Time derivatives are spectral in the periodic time window; ``A`` is the
    quantized Klein-Gordon space symbol (1-D slices only).
    """
    u = np.asarray(u, dtype=float)
    nt, ns, nx, ny = u.shape
    xi = TWO_PI * np.fft.fftfreq(nt, d=dt)
    eta = TWO_PI * np.fft.fftfreq(ns, d=ds)
    F = np.fft.fft2(u, axes=(0, 1))
    Lu = np.fft.ifft2(F * (xi[:, None, None, None] ** 2 + eta[None, :, None, None] ** 2), axes=(0, 1)).real
    Q = quantization_matrix(kg_symbol(basis.metric).space_symbol(basis.n))
    Lu = Lu + np.einsum("xa,tsay->tsxy", Q, u) + np.einsum("yb,tsxb->tsxy", Q, u)
    wx = basis.weights
    return float(np.sum(Lu ** 2 * wx[None, None, :, None] * wx[None, None, None, :]) * dt * ds)


# --- windowed kernel norms ----------------------------------------------------

@dataclass(frozen=True)
class WindowFunction:
    """Product window ``psi_1(t) psi_2(s)`` of compactly supported bumps."""

    center1: float = 0.0
    radius1: float = 1.0
    center2: float = 0.0
    radius2: float = 1.0
    alpha: float = 1.0

    def psi1(self, t):
        return bump((np.asarray(t) - self.center1) / self.radius1, self.alpha)

    def psi2(self, s):
        return bump((np.asarray(s) - self.center2) / self.radius2, self.alpha)

    def edge_defect(self, n: int = 4096) -> float:
        """Largest sampled value or finite-difference derivative near the support edge."""
        r = 1.0 - np.linspace(0.0, 0.02, n)
        f = bump(r, self.alpha)
        worst = np.max(np.abs(f[:8]))
        h = 0.02 / (n - 1)
        for _ in range(3):
            f = np.diff(f) / h
            worst = max(worst, np.max(np.abs(f[:8])))
        return float(worst)


@dataclass
class KernelNormTable:
    """Partial sums of a windowed kernel norm.

    Attributes
    ----------
    N_list : ndarray
    partial_sums : ndarray
        ``S_N`` for each ``N``.
    terms : ndarray
        Per-mode contributions for modes ``1..max(N_list)``.
    tail_exponent : float
        Fitted ``p`` in ``S_{N'} - S_N ~ N^p`` over consecutive entries.
    tail_r2 : float
    s_inf : float
        Geometric extrapolation of the limit (``nan`` if increments grow).
    """

    N_list: np.ndarray
    partial_sums: np.ndarray
    terms: np.ndarray
    tail_exponent: float
    tail_r2: float
    s_inf: float
    s_order: float
    which: str

    def growth(self, N_from: int, N_to: int) -> float:
        """Relative increase ``S_to / S_from - 1``."""
        i = list(self.N_list).index(N_from)
        k = list(self.N_list).index(N_to)
        return float(self.partial_sums[k] / self.partial_sums[i] - 1.0)


def _window_grid(window: WindowFunction, lam_max: float):
    lo = min(window.center1 - window.radius1, window.center2 - window.radius2)
    hi = max(window.center1 + window.radius1, window.center2 + window.radius2)
    span = hi - lo
    rmin = min(window.radius1, window.radius2)
    fmax = lam_max + 200.0 / rmin
    dt = np.pi / fmax
    n = int(2 ** np.ceil(np.log2(4.0 * span / dt)))
    t = lo - 1.5 * span + dt * np.arange(n)
    return t, dt


def kernel_mode_terms(lambdas, window: WindowFunction, s_order: float, which: str = "K_G",
                      prune: float = 1e-6) -> np.ndarray:
    """Weighted energy of each diagonal mode ``psi(t,s) f_j(t - s)`` of the kernel.

    ``f_j = -sin(lambda_j tau) / lambda_j`` for ``K_G`` and
    ``cos(lambda_j tau) / lambda_j^2`` for ``K_A``. Writing
    ``f_j(t - s)`` with exponentials ``e^{+-i lambda t}`` turns each term into
    1-D transforms whose product is concentrated near
    ``(xi0, eta0) = (+-lambda, -+lambda)``; only index pairs where both
    factors exceed ``prune`` times their maximum are summed. Repeated
    eigenvalues are evaluated once.
    """
    lam = np.asarray(lambdas, dtype=float)
    if which not in ("K_G", "K_A"):
        raise ParameterError("which must be K_G or K_A")
    uniq, inverse = np.unique(np.round(lam, 12), return_inverse=True)
    t, dt = _window_grid(window, float(uniq.max()))
    p1 = window.psi1(t)
    p2 = window.psi2(t)
    n = t.size
    xi = TWO_PI * np.fft.fftfreq(n, d=dt)
    norm = dt / np.sqrt(TWO_PI)
    dm = (TWO_PI / (n * dt)) ** 2
    vals = np.empty(uniq.size)
    for j, l in enumerate(uniq):
        ep = np.exp(1j * l * t)
        A1 = np.fft.fft(p1 * ep) * norm  # e^{+i l t}
        A2 = np.fft.fft(p1 * np.conj(ep)) * norm
        B1 = np.fft.fft(p2 * np.conj(ep)) * norm  # e^{-i l s}
        B2 = np.fft.fft(p2 * ep) * norm
        if which == "K_G":
            # -sin(l(t-s))/l = -(e^{il(t-s)} - e^{-il(t-s)}) / (2il)
            sgn, amp = -1.0, 1.0 / (2.0 * l)
        else:
            sgn, amp = 1.0, 1.0 / (2.0 * l * l)
        sets = [np.flatnonzero(np.abs(X) > prune * np.abs(X).max()) for X in (A1, A2, B1, B2)]
        args = (A1, A2, B1, B2, sgn, xi, xi, 2.0 * l * l, s_order)
        e = kernels.separable_mode_energy(*args, sets[0], sets[2])
        e += kernels.separable_mode_energy(*args, sets[1], sets[3])
        ia = np.intersect1d(sets[0], sets[1])
        ib = np.intersect1d(sets[2], sets[3])
        if ia.size and ib.size:
            e -= kernels.separable_mode_energy(*args, ia, ib)
        vals[j] = amp * amp * e * dm
    return vals[inverse]


def kernel_norm_experiment(basis_or_lambdas, window: WindowFunction, s_order: float, N_list: Sequence[int],
                           which: str = "K_G") -> KernelNormTable:
    """Partial sums of ``||psi K||^2_{H^s}`` over the diagonal ``j = k`` modes.

    Parameters
    ----------
    basis_or_lambdas : SpectralBasis or array_like
        Eigenbasis (its ``lambdas`` are used) or eigenvalue roots directly.
    s_order : float
        Sobolev order in ``[-2, 2]``.
    N_list : sequence of int
        Ascending truncation orders; the tail exponent is regressed on the
        increments between consecutive entries.

    Raises
    ------
    ParameterError
        Unsorted ``N_list``, too few modes, or ``s_order`` out of range.
    """
    lam = basis_or_lambdas.lambdas if isinstance(basis_or_lambdas, SpectralBasis) else np.asarray(basis_or_lambdas)
    N_list = np.asarray(N_list, dtype=int)
    if np.any(np.diff(N_list) <= 0) or N_list[0] < 1:
        raise ParameterError("N_list must be ascending and positive")
    if N_list[-1] > lam.size:
        raise ParameterError("N_list exceeds the available modes")
    if not -2.0 <= s_order <= 2.0:
        raise ParameterError("s_order must lie in [-2, 2]")
    if min(window.radius1, window.radius2) < 4.0 * np.pi / lam[N_list[-1] - 1]:
        raise ParameterError("window too narrow for the frequency resolution")
    terms = kernel_mode_terms(lam[:N_list[-1]], window, s_order, which)
    csum = np.cumsum(terms)
    S = csum[N_list - 1]
    inc = np.diff(S)
    if inc.size >= 2 and np.all(inc > 0):
        p, _, r2 = regression_slope(np.log(N_list[:-1]), np.log(inc))
        ratio = inc[-1] / inc[-2]
        s_inf = S[-1] + inc[-1] * ratio / (1.0 - ratio) if ratio < 1 else np.nan
    else:
        p, r2, s_inf = np.nan, np.nan, np.nan
    return KernelNormTable(N_list, S, terms, p, r2, s_inf, s_order, which)


def offdiagonal_defect(basis: SpectralBasis, N: int, window: WindowFunction, t) -> float:
    """Largest off-diagonal pair coefficient of ``psi K_G`` relative to the diagonal.

    Builds the windowed kernel on the full spatial grid and projects it on
    ``phi_j (x) phi_k``.
    """
    t = np.asarray(t, dtype=float)
    b = basis.truncated(N)
    tau = t[:, None] - t[None, :]
    flat = b.modes.reshape(N, -1)
    spatial = np.einsum("jx,jy->jxy", flat, flat)
    T = -np.sin(tau[..., None] * b.lambdas) / b.lambdas
    K = np.tensordot(T, spatial, axes=(2, 0)) * (window.psi1(t)[:, None] * window.psi2(t)[None, :])[..., None, None]
    c = project_pairs(b, K.reshape((t.size, t.size) + b.grid_shape * 2))
    mag = np.max(np.abs(c), axis=(0, 1))
    off = mag - np.diag(np.diag(mag))
    return float(off.max() / mag.max())


# --- diagonal restriction -------------------------------------------------------

@dataclass
class DiagonalRestriction:
    """``d_t K_G`` restricted to ``t = s``: ``-sum_{j<=N} phi_j(x) phi_j(y)`` (constant in ``s``)."""

    values: np.ndarray
    transform: np.ndarray
    N: int
    basis: SpectralBasis

    def antidiagonal_profile(self):
        """``|F(k, -k)|`` along the anti-diagonal frequency line, ascending ``k``."""
        n = self.values.shape[0]
        k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        order = np.argsort(k)
        prof = np.abs(self.transform[k[order] % n, (-k[order]) % n])
        return k[order] * (TWO_PI / self.basis.metric.period), prof


def diagonal_restriction(basis: SpectralBasis, N: int, s=None, window=None) -> DiagonalRestriction:
    """Restricted time derivative of ``K_G`` on ``Q = {t = s}`` over the full spatial grid.

    Parameters
    ----------
    window : ndarray, optional
        Spatial window ``(nx, ny)`` multiplied in before the transform.
    """
    if basis.metric.dim != 1:
        raise ParameterError("diagonal restriction is implemented for 1-D slices")
    if not 1 <= N <= basis.trusted_count():
        raise PreconditionError("N=%d exceeds the %d trusted modes" % (N, basis.trusted_count()))
    ph = basis.modes[:N]
    vals = -(ph.T @ ph)
    w = vals if window is None else vals * window
    F = np.fft.fft2(w) * (basis.spacing ** 2 / TWO_PI)
    return DiagonalRestriction(vals, F, N, basis)
