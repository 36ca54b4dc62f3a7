"""Rough symbols on periodic grids: Klein-Gordon symbol, smoothing, quantization.

A :class:`SymbolGrid` stores ``p(x, xi)`` on a spatial grid times a signed
frequency ladder (dyadic, four samples per octave by default). Quantization
uses ``p(x, D) u = (2 pi)^(-1/2) int e^{i x xi} p(x, xi) (F u)(xi) d xi``,
discretized by the DFT, with the ladder extended to every discrete frequency
by linear interpolation in ``log |xi|``.

With that quantization ``-Delta_h + m^2`` in divergence form has the
first-order part ``-i b . xi`` with ``b_i = c^-d d_i(c^(d-2))``.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .dyadic import TWO_PI, psi, psi0, regression_slope
from .errors import GridMismatchError, ParameterError, RegularityError
from .spectral import MetricModel


def dyadic_ladder(j_max: int, per_octave: int = 4, signed: bool = True, include_zero: bool = True) -> np.ndarray:
    """Frequencies ``2^(k / per_octave)`` for ``k = 0..per_octave * j_max``."""
    pos = 2.0 ** (np.arange(per_octave * j_max + 1) / per_octave)
    parts = []
    if signed:
        parts.append(-pos[::-1])
    if include_zero:
        parts.append(np.zeros(1))
    parts.append(pos)
    return np.concatenate(parts)


def full_ladder(n: int, period: float = TWO_PI) -> np.ndarray:
    """Every discrete frequency of an ``n``-point grid, ascending."""
    return np.sort(TWO_PI * np.fft.fftfreq(n, d=period / n))


@dataclass(eq=False)
class SymbolGrid:
    """Samples of a symbol on (1-D space grid) x (frequency ladder).

    Attributes
    ----------
    values : ndarray
        Shape ``(n, L)``; may be complex.
    ladder : ndarray
        Ascending frequencies, shape ``(L,)``.
    order : float
        Symbol order ``m``.
    tau : float
        Zygmund regularity of the ``x`` dependence.
    delta : float
        Class parameter of the input symbol.
    variables : str
        ``"t,x"`` or ``"s,y"``.
    period : float
    """

    values: np.ndarray
    ladder: np.ndarray
    order: float
    tau: float = np.inf
    delta: float = 0.0
    variables: str = "t,x"
    period: float = TWO_PI

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.ladder = np.asarray(self.ladder, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.ladder.size:
            raise ParameterError("values must have shape (n, len(ladder))")
        if np.any(np.diff(self.ladder) <= 0):
            raise ParameterError("ladder must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("symbol samples must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def coords(self):
        return self.period * np.arange(self.n) / self.n

    @classmethod
    def from_function(cls, func, n: int, ladder, order: float, period: float = TWO_PI, **kw):
        """Sample ``func(x[:, None], xi[None, :])`` on the grid and ladder."""
        x = period * np.arange(n) / n
        ladder = np.asarray(ladder, dtype=float)
        vals = np.broadcast_to(func(x[:, None], ladder[None, :]), (n, ladder.size))
        return cls(np.array(vals), ladder, order, period=period, **kw)


@dataclass(eq=False)
class SmoothedSymbol:
    """Result of :func:`smooth_symbol`: ``p = sharp + flat`` sample by sample."""

    sharp: SymbolGrid
    flat: SymbolGrid
    gamma: float
    source: SymbolGrid = field(repr=False, default=None)

    def epsilons(self, j_top: int) -> np.ndarray:
        return 2.0 ** (-self.gamma * np.arange(j_top + 1))

    def reconstruction_error(self) -> float:
        return float(np.max(np.abs(self.sharp.values + self.flat.values - self.source.values)))


def mollify(values, eps: float, period: float = TWO_PI):
    """``J_eps``: Fourier multiplier ``psi_0(eps |k|)`` in ``x`` (axis 0)."""
    n = values.shape[0]
    k = TWO_PI * np.fft.fftfreq(n, d=period / n)
    mult = psi0(eps * np.abs(k))
    shape = (n,) + (1,) * (values.ndim - 1)
    F = np.fft.fft(values, axis=0)
    out = np.fft.ifft(F * mult.reshape(shape), axis=0)
    return out.real if not np.iscomplexobj(values) else out


def smooth_symbol(p: SymbolGrid, gamma: float) -> SmoothedSymbol:
    """Split ``p`` into ``p# = sum_j psi_j(xi) J_{eps_j} p`` and ``p^b = p - p#``.

    ``eps_j = 2^(-j gamma)``; ``J_eps`` is a low-pass in ``x`` of radius
    ``1 / eps`` with the same quintic profile as the dyadic partition.

    Raises
    ------
    ParameterError
        ``gamma`` outside ``[delta, 1)`` or not positive.
    """
    if not (p.delta <= gamma < 1.0 and gamma > 0.0):
        raise ParameterError("gamma=%g outside [delta=%g, 1)" % (gamma, p.delta))
    mag = np.abs(p.ladder)
    j_top = int(np.ceil(np.log2(max(mag.max(), 1.0)))) + 1
    sharp = np.zeros_like(p.values)
    for j in range(j_top + 1):
        weight = psi(None, j, mag)
        cols = np.flatnonzero(weight != 0.0)
        if cols.size == 0:
            continue
        sm = mollify(p.values[:, cols], 2.0 ** (-j * gamma), p.period)
        sharp[:, cols] += sm * weight[cols]
    flat = p.values - sharp
    order_flat = p.order - p.tau * (gamma - p.delta) if np.isfinite(p.tau) else -np.inf
    mk = dict(tau=p.tau, variables=p.variables, period=p.period)
    return SmoothedSymbol(SymbolGrid(sharp, p.ladder, p.order, delta=gamma, **mk),
                          SymbolGrid(flat, p.ladder, order_flat, delta=gamma, **mk), gamma, p)


def shell_sup(values, ladder, j: int) -> float:
    """``sup |values|`` over ladder samples with ``2^j <= |xi| < 2^(j+1)``."""
    mag = np.abs(ladder)
    cols = (mag >= 2.0 ** j) & (mag < 2.0 ** (j + 1))
    if not np.any(cols):
        return np.nan
    return float(np.max(np.abs(values[:, cols])))


def decay_exponent(sm: SmoothedSymbol, shells=range(4, 10)):
    """Regressed growth exponent of the dyadic sup norms of ``p^b``.

    Returns ``(slope, r2)`` of ``log2 sup_shell_j |p^b|`` against ``j``; the
    class prediction is ``m - tau (gamma - delta)``.
    """
    js = np.array(list(shells))
    sups = np.array([shell_sup(sm.flat.values, sm.flat.ladder, j) for j in js])
    slope, _, r2 = regression_slope(js, np.log2(sups))
    return slope, r2


def seminorm_sharp(sm: SmoothedSymbol, alpha: int, beta: int, weight: str = "class") -> float:
    """Weighted sup of ``D_x^beta D_xi^alpha p#``.

    The weight is ``<xi>^-(m - alpha + gamma max(0, beta - tau))`` for the
    class weight and ``<xi>^-(m - alpha)`` for the naive one. ``x``
    derivatives are spectral, ``xi`` derivatives are finite differences on
    the ladder.
    """
    if alpha > 2 or beta > 3 or alpha < 0 or beta < 0:
        raise ParameterError("supported orders are alpha <= 2, beta <= 3")
    v = sm.sharp.values
    n = v.shape[0]
    k = TWO_PI * np.fft.fftfreq(n, d=sm.sharp.period / n)
    if n % 2 == 0 and beta % 2 == 1:
        k = k.copy()
        k[n // 2] = 0.0
    if beta:
        v = np.fft.ifft((1j * k[:, None]) ** beta * np.fft.fft(v, axis=0), axis=0)
        if not np.iscomplexobj(sm.sharp.values):
            v = v.real
    for _ in range(alpha):
        v = np.gradient(v, sm.sharp.ladder, axis=1)
    m = sm.sharp.order
    tau = sm.source.tau
    expo = m - alpha
    if weight == "class":
        expo += sm.gamma * max(0.0, beta - tau)
    elif weight != "naive":
        raise ParameterError("weight must be 'class' or 'naive'")
    w = (1.0 + sm.sharp.ladder ** 2) ** (-0.5 * expo)
    return float(np.max(np.abs(v) * w[None, :]))


def _interpolation_plan(ladder, freqs):
    """Indices and weights extending ladder samples to ``freqs`` (log-|xi| linear)."""
    i0 = np.empty(freqs.size, dtype=int)
    i1 = np.empty(freqs.size, dtype=int)
    w = np.zeros(freqs.size)
    top = np.max(np.abs(ladder))
    for idx, f in enumerate(freqs):
        if abs(f) > top * (1 + 1e-12):
            raise GridMismatchError("frequency %g beyond the ladder (max %g)" % (f, top))
        hit = np.flatnonzero(np.abs(ladder - f) <= 1e-12 * max(1.0, abs(f)))
        if hit.size:
            i0[idx] = i1[idx] = hit[0]
            continue
        r = np.searchsorted(ladder, f)
        lo, hi = r - 1, r
        a, b = ladder[lo], ladder[hi]
        if a * b > 0:
            la, lb, lf = np.log(abs(a)), np.log(abs(b)), np.log(abs(f))
            w[idx] = (lf - la) / (lb - la)
        else:
            w[idx] = (f - a) / (b - a)
        i0[idx], i1[idx] = lo, hi
    return i0, i1, w


def extend_to_grid(p: SymbolGrid, n: Optional[int] = None):
    """Symbol values at every DFT frequency of the grid, shape ``(n, n)`` in FFT order."""
    n = p.n if n is None else n
    freqs = TWO_PI * np.fft.fftfreq(n, d=p.period / n)
    i0, i1, w = _interpolation_plan(p.ladder, freqs)
    return p.values[:, i0] * (1.0 - w) + p.values[:, i1] * w, freqs


def quantization_matrix(p: SymbolGrid) -> np.ndarray:
    """Matrix of the quantized symbol on its grid: ``(Q u)(x) = sum_k p(x, k) e^{i k x} u_hat(k)``.

    The matrix is real when ``p(x, -xi) = conj p(x, xi)``, which maps real
    samples to real samples.
    """
    P, freqs = extend_to_grid(p)
    x = p.coords()
    m = np.arange(p.n)
    k = np.fft.fftfreq(p.n, d=1.0 / p.n).astype(int)
    dft = np.exp(-2j * np.pi * np.outer(np.arange(p.n), m) / p.n) / p.n
    Q = (P * np.exp(1j * np.outer(x, freqs))) @ dft
    keep = k != -(p.n // 2) if p.n % 2 == 0 else slice(None)  # the Nyquist column has no partner
    sym = np.allclose(P[:, (-k) % p.n][:, keep], np.conj(P)[:, keep], rtol=1e-12, atol=1e-12 * np.max(np.abs(P)))
    return Q.real if sym else Q


def apply_pseudo(p: SymbolGrid, u) -> np.ndarray:
    """Quantize ``p`` and apply it to the periodic samples ``u``.

    Cost is ``O(n^2)``: each output point sums over all frequencies.

    Raises
    ------
    GridMismatchError
        ``u`` lives on another grid or the ladder does not reach Nyquist.
    """
    u = np.asarray(u)
    if u.ndim != 1 or u.size != p.n:
        raise GridMismatchError("u has shape %s, symbol grid has %d points" % (u.shape, p.n))
    return quantization_matrix(p) @ u


# --- Klein-Gordon symbol ----------------------------------------------------

@dataclass(eq=False)
class KGSymbol:
    """Homogeneous pieces of the Klein-Gordon symbol of one variable set.

    ``p2 = -xi0^2 + c^-2 |xi|^2``, ``p1 = -i b . xi``, ``p0 = m^2`` with
    ``b = c^-d grad(c^(d-2))``.
    """

    metric: MetricModel
    variables: str = "t,x"

    def p2(self, points, xi0, xi):
        xi = np.asarray(xi, dtype=float)
        return -np.asarray(xi0) ** 2 + self.metric.h_inv(points) * _sq(xi, self.metric.dim)

    def b(self, points):
        """Real first-order coefficient ``b_i``, shape ``(..., d)``."""
        d = self.metric.dim
        c = self.metric.c(points)
        return (d - 2) * c[..., None] ** -3.0 * self.metric.grad_c(points)

    def p1(self, points, xi):
        """``-i b . xi``; 1-D points are plain arrays (a trailing axis of length 1 is the coordinate)."""
        xi = np.asarray(xi, dtype=float)
        b = self.b(points)
        if self.metric.dim == 1:
            return -1j * b[..., 0] * xi
        return -1j * np.sum(b * xi, axis=-1)

    @property
    def p0(self) -> float:
        return self.metric.mass ** 2

    def space_symbol(self, n: int, ladder=None) -> SymbolGrid:
        """Spatial operator ``A = -Delta_h + m^2`` as a sampled 1-D symbol."""
        if self.metric.dim != 1:
            raise ParameterError("sampled symbols are one-dimensional")
        ladder = full_ladder(n, self.metric.period) if ladder is None else np.asarray(ladder, dtype=float)
        x = self.metric.period * np.arange(n) / n
        b = self.b(x)[:, 0]
        vals = self.metric.h_inv(x)[:, None] * ladder[None, :] ** 2 - 1j * b[:, None] * ladder[None, :] + self.p0
        return SymbolGrid(vals, ladder, 2.0, tau=self.metric.tau, variables=self.variables,
                          period=self.metric.period)


def _sq(xi, d):
    if d == 1:
        return xi[..., 0] ** 2 if (xi.ndim and xi.shape[-1] == 1 and xi.ndim > 1) else xi ** 2
    return np.sum(xi ** 2, axis=-1)


def kg_symbol(metric: MetricModel, variable_set: str = "t,x") -> KGSymbol:
    """Klein-Gordon symbol pieces for ``P = d_t^2 - Delta_h + m^2``.

    Raises
    ------
    RegularityError
        The metric is not certified ``C^1`` (``p1`` needs ``grad c``).
    ParameterError
        Unknown variable set.
    """
    if variable_set not in ("t,x", "s,y"):
        raise ParameterError("variable_set must be 't,x' or 's,y'")
    if metric.tau <= 1.0:
        raise RegularityError("metric certified only C^%g; the first-order term needs C^1" % metric.tau)
    return KGSymbol(metric, variable_set)


class CharClass(str, Enum):
    NONCHARACTERISTIC = "noncharacteristic"
    CHAR_P = "char_P"
    CHAR_EXTENDED = "char_extended"


def is_null(metric: MetricModel, x, covector, tol: float = 1e-9) -> bool:
    """``xi0^2 = h^ij xi_i xi_j`` within relative tolerance (nonzero covector)."""
    cov = np.asarray(covector, dtype=float)
    xi0, xi = cov[0], cov[1:]
    if not np.any(cov != 0):
        return False
    q = float(metric.h_inv(np.asarray(x, dtype=float).reshape(metric.dim)) * np.sum(xi ** 2))
    return abs(q - xi0 * xi0) <= tol * (q + xi0 * xi0)


def char_test(metric: MetricModel, point, covector, tol: float = 1e-9, variables: str = "t,x") -> CharClass:
    """Classify a covector against the characteristic set.

    For a single point ``(t, x)`` the covector is ``(xi0, xi)``. For a doubled
    point ``(t, x, s, y)`` with covector ``(xi0, xi, eta0, eta)`` the operator
    acts in ``variables``; its characteristic set is the product of
    ``Char(P)`` with the full cotangent space of the other factor, together
    with the covectors that vanish in the acting factor.

    Raises
    ------
    ParameterError
        Zero covector or inconsistent lengths.
    """
    cov = np.asarray(covector, dtype=float)
    pt = np.asarray(point, dtype=float)
    k = 1 + metric.dim
    if not np.any(cov != 0):
        raise ParameterError("covector must be nonzero")
    if cov.size == k and pt.size == k:
        return CharClass.CHAR_P if is_null(metric, pt[1:], cov, tol) else CharClass.NONCHARACTERISTIC
    if cov.size != 2 * k or pt.size != 2 * k:
        raise ParameterError("point and covector must both have length %d or %d" % (k, 2 * k))
    first = slice(0, k) if variables == "t,x" else slice(k, 2 * k)
    other = slice(k, 2 * k) if variables == "t,x" else slice(0, k)
    if not np.any(cov[first] != 0):
        return CharClass.CHAR_EXTENDED if np.any(cov[other] != 0) else CharClass.NONCHARACTERISTIC
    if is_null(metric, pt[first][1:], cov[first], tol):
        return CharClass.CHAR_P
    return CharClass.NONCHARACTERISTIC


def in_char_product(metric: MetricModel, point, covector, tol: float = 1e-9) -> bool:
    """Both halves of a doubled covector are nonzero null covectors."""
    pt = np.asarray(point, dtype=float)
    cov = np.asarray(covector, dtype=float)
    k = 1 + metric.dim
    return (is_null(metric, pt[1:k], cov[:k], tol) and is_null(metric, pt[k + 1:], cov[k:], tol))
