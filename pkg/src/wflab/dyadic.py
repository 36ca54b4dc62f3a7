"""Littlewood-Paley blocks, Hoelder/Zygmund estimators and Weierstrass fields.

All functions act on samples of periodic functions on uniform grids. The
low-pass profile ``psi_0`` equals one on ``|xi| <= 1`` and zero on
``|xi| >= 2`` with a quintic smoothstep transition in between; the dyadic
pieces telescope, ``psi_j(xi) = psi_0(2^-j xi) - psi_0(2^(1-j) xi)``.

Every norm here is a grid-truncated estimator: only scales below the grid
Nyquist frequency are seen, and the number of resolved scales is reported
alongside the value when requested.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import GridTooCoarseError, InsufficientResolutionError, ParameterError

TWO_PI = 2.0 * np.pi


def smoothstep(u):
    """Quintic smoothstep ``u^3 (10 - 15 u + 6 u^2)`` clipped to ``[0, 1]``."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def psi0(r):
    """Low-pass profile: 1 for ``r <= 1``, 0 for ``r >= 2``."""
    return 1.0 - smoothstep(np.abs(r) - 1.0)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid with ``n`` points per axis.

    Attributes
    ----------
    dim : int
        Number of axes.
    n : int
        Points per axis.
    period : float
        Period of every axis.
    """

    dim: int
    n: int
    period: float = TWO_PI

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def nyquist(self) -> float:
        """Largest resolved angular frequency along an axis."""
        return np.pi * self.n / self.period

    def coords(self) -> np.ndarray:
        """Sample positions along one axis, starting at 0."""
        return self.spacing * np.arange(self.n)

    def axis_frequencies(self) -> np.ndarray:
        """Angular frequencies of the DFT along one axis."""
        return TWO_PI * np.fft.fftfreq(self.n, d=self.spacing)

    def frequency_magnitude(self) -> np.ndarray:
        """``|xi|`` on the full DFT grid."""
        k = self.axis_frequencies()
        mesh = np.meshgrid(*([k] * self.dim), indexing="ij")
        return np.sqrt(sum(m * m for m in mesh))

    @classmethod
    def for_samples(cls, f, period=TWO_PI):
        f = np.asarray(f)
        if f.ndim not in (1, 2) or len(set(f.shape)) != 1:
            raise ParameterError("expected samples on a square 1-D or 2-D grid, got shape %s" % (f.shape,))
        return cls(dim=f.ndim, n=f.shape[0], period=period)


def max_scale(grid: PeriodicGrid) -> int:
    """Largest ``j`` with ``2^j`` at or below the Nyquist frequency."""
    return int(np.floor(np.log2(grid.nyquist) + 1e-12))


@dataclass(frozen=True)
class DyadicPartition:
    """Littlewood-Paley partition truncated at scale ``j_max``.

    Attributes
    ----------
    j_max : int
        Top block index; ``sum_{j<=j_max} psi_j = 1`` on ``|xi| <= 2^j_max``.
        :func:`decompose` replaces the top block by the remainder
        ``1 - psi_0(2^(1-j_max) xi)``, so its blocks always sum to ``f``.
    profile : str
        Transition shape of ``psi_0``; only ``"quintic"`` is implemented.
    """

    j_max: int
    profile: str = "quintic"

    def __post_init__(self):
        if self.profile != "quintic":
            raise ParameterError("unknown profile %r" % self.profile)
        if self.j_max < 0:
            raise ParameterError("j_max must be non-negative")

    def psi(self, j: int, xi):
        return psi(self, j, xi)

    @classmethod
    def for_grid(cls, grid: PeriodicGrid):
        return cls(j_max=max_scale(grid))


def psi(partition: Optional[DyadicPartition], j: int, xi):
    """Dyadic multiplier ``psi_j`` evaluated at frequencies ``xi``.

    Parameters
    ----------
    partition : DyadicPartition or None
        Only the profile is used; ``j`` is not limited by ``j_max``.
    j : int
        Block index, ``j >= 0``.
    xi : array_like
        Frequencies; magnitudes are taken elementwise, so vector-valued
        frequencies must be passed as their norms.
    """
    if j < 0:
        raise ParameterError("j must be non-negative")
    r = np.abs(np.asarray(xi, dtype=float))
    if j == 0:
        return psi0(r)
    return psi0(r * 2.0 ** (-j)) - psi0(r * 2.0 ** (1 - j))


@dataclass
class DyadicDecomposition:
    """Blocks ``f_j = psi_j(D) f`` of one sampled function.

    Attributes
    ----------
    blocks : list of ndarray
        ``blocks[j]`` for ``j = 0..j_max``.
    grid : PeriodicGrid
        Grid the source function was sampled on.
    """

    blocks: list
    grid: PeriodicGrid

    @property
    def j_max(self) -> int:
        return len(self.blocks) - 1

    def reconstruct(self) -> np.ndarray:
        return np.sum(self.blocks, axis=0)

    def sup_norms(self) -> np.ndarray:
        return np.array([np.max(np.abs(b)) for b in self.blocks])


def _resolve_partition(grid, partition):
    top = max_scale(grid)
    if partition is None:
        return DyadicPartition(j_max=top)
    if partition.j_max > top:
        raise GridTooCoarseError(
            "j_max=%d exceeds the Nyquist scale 2^%d of a %d-point grid" % (partition.j_max, top, grid.n))
    return partition


def decompose(f, partition: Optional[DyadicPartition] = None, period: float = TWO_PI) -> DyadicDecomposition:
    """Split ``f`` into Littlewood-Paley blocks by FFT multiplication.

    Parameters
    ----------
    f : ndarray
        Samples on a square periodic grid (1-D or 2-D).
    partition : DyadicPartition, optional
        Defaults to the largest partition the grid resolves.
    period : float
        Period of each axis.

    Returns
    -------
    DyadicDecomposition

    Raises
    ------
    GridTooCoarseError
        If ``partition.j_max`` exceeds the grid's Nyquist scale.
    """
    f = np.asarray(f, dtype=float)
    grid = PeriodicGrid.for_samples(f, period)
    partition = _resolve_partition(grid, partition)
    F = np.fft.fftn(f)
    mag = grid.frequency_magnitude()
    J = partition.j_max
    mults = [psi(partition, j, mag) for j in range(J)]
    # top block takes the remainder so 2-D corner frequencies above 2^J are kept
    mults.append(1.0 - psi0(mag * 2.0 ** (1 - J)) if J > 0 else np.ones_like(mag))
    blocks = [np.fft.ifftn(F * m).real for m in mults]
    return DyadicDecomposition(blocks=blocks, grid=grid)


def zygmund_norm(f, tau: float, partition: Optional[DyadicPartition] = None, period: float = TWO_PI,
                 return_scales: bool = False):
    """Truncated Zygmund norm ``max_j 2^(j tau) sup |psi_j(D) f|``.

    Only blocks below the grid Nyquist scale enter, so for rough ``f`` the
    value is a lower bound of the true norm that grows with resolution.

    Parameters
    ----------
    f : ndarray
        Periodic samples.
    tau : float
        Regularity index (any real).
    return_scales : bool
        Also return the number of resolved dyadic scales.

    Raises
    ------
    InsufficientResolutionError
        Fewer than three scales are resolved.
    """
    dec = decompose(f, partition, period)
    scales = dec.j_max + 1
    if scales < 3:
        raise InsufficientResolutionError("only %d dyadic scales resolved" % scales)
    weights = 2.0 ** (tau * np.arange(scales))
    value = float(np.max(weights * dec.sup_norms()))
    return (value, scales) if return_scales else value


def spectral_gradient(f, period: float = TWO_PI):
    """Spectral derivative along each axis; returns a list of arrays."""
    f = np.asarray(f, dtype=float)
    grid = PeriodicGrid.for_samples(f, period)
    k = grid.axis_frequencies()
    if grid.n % 2 == 0:
        k = k.copy()
        k[grid.n // 2] = 0.0  # Nyquist mode has no real derivative
    F = np.fft.fftn(f)
    out = []
    for ax in range(f.ndim):
        shape = [1] * f.ndim
        shape[ax] = grid.n
        out.append(np.fft.ifftn(1j * k.reshape(shape) * F).real)
    return out


def difference_quotient_sup(f, alpha: float, period: float = TWO_PI) -> float:
    """``sup_{x != y} |f(x) - f(y)| / |x - y|^alpha`` over all grid pairs.

    Distances are periodic. The 1-D case runs through an accelerated kernel;
    2-D loops over lag vectors.
    """
    f = np.asarray(f, dtype=float)
    grid = PeriodicGrid.for_samples(f, period)
    h = grid.spacing
    if f.ndim == 1:
        return float(kernels.sup_difference_quotient(np.ascontiguousarray(f), float(alpha), h))
    n = grid.n
    best = 0.0
    for a in range(0, n // 2 + 1):
        for b in range(-(n // 2) + 1, n // 2 + 1):
            if a == 0 and b <= 0:
                continue
            dist = h * np.hypot(a, b)
            diff = np.abs(np.roll(np.roll(f, -a, axis=0), -b, axis=1) - f).max()
            best = max(best, diff / dist ** alpha)
    return float(best)


def holder_norm(f, tau: float, period: float = TWO_PI) -> float:
    """Finite-difference Hoelder norm estimator for ``0 < tau < 2``.

    For ``tau < 1`` this is ``sup|f|`` plus the sup of ``tau``-quotients.
    For ``1 <= tau < 2`` the gradient (computed spectrally) contributes its
    sup and its ``(tau - 1)``-quotients.
    """
    if not 0.0 < tau < 2.0:
        raise ParameterError("holder_norm supports 0 < tau < 2, got %g" % tau)
    f = np.asarray(f, dtype=float)
    total = float(np.max(np.abs(f)))
    if tau < 1.0:
        return total + difference_quotient_sup(f, tau, period)
    grads = spectral_gradient(f, period)
    total += max(float(np.max(np.abs(g))) for g in grads)
    total += max(difference_quotient_sup(g, tau - 1.0, period) for g in grads)
    return total


@dataclass(frozen=True)
class WeierstrassField:
    """Lacunary field ``W(x) = sum_{j=1}^J 2^(-j tau) cos(omega_j x + theta_j)``.

    In dimension two the field is the sum of one such series per axis.
    ``omega_j = 2^j * 2 pi / period``. The amplitude ``a`` is not applied to
    :attr:`values`; it is carried for metric synthesis, ``c = 1 + a W``.

    Attributes
    ----------
    tau, amplitude : float
    depth : int
        Number of terms ``J``.
    n : int
        Grid points per axis of :attr:`values`.
    dim : int
    period : float
    phases : ndarray
        Shape ``(dim, J)``.
    """

    tau: float
    amplitude: float
    depth: int
    n: int
    dim: int = 1
    period: float = TWO_PI
    phases: np.ndarray = field(default=None, repr=False)

    @property
    def frequencies(self) -> np.ndarray:
        return (2.0 ** np.arange(1, self.depth + 1)) * (TWO_PI / self.period)

    @property
    def coefficients(self) -> np.ndarray:
        """Analytic amplitude ``2^(-j tau)`` of dyadic block ``j = 1..J``."""
        return 2.0 ** (-self.tau * np.arange(1, self.depth + 1))

    def block_coefficients(self) -> dict:
        """Map block index to its analytic sup norm (per axis)."""
        return {j + 1: float(c) for j, c in enumerate(self.coefficients)}

    def evaluate_axis(self, x, axis: int = 0, deriv: int = 0):
        """Evaluate the per-axis series (or its ``deriv``-th derivative) at ``x``."""
        x = np.asarray(x, dtype=float)
        w = self.frequencies
        c = self.coefficients * w ** deriv
        arg = np.multiply.outer(x, w) + self.phases[axis] + 0.5 * np.pi * deriv
        return np.cos(arg) @ c

    @property
    def values(self) -> np.ndarray:
        x = (self.period / self.n) * np.arange(self.n)
        per_axis = [self.evaluate_axis(x, ax) for ax in range(self.dim)]
        if self.dim == 1:
            return per_axis[0]
        return per_axis[0][:, None] + per_axis[1][None, :]

    def sup_bound(self) -> float:
        """Triangle-inequality bound on ``sup |W|``."""
        return self.dim * float(np.sum(self.coefficients))


def weierstrass_field(tau: float, amplitude: float, depth: int, n: int, phases=None, dim: int = 1,
                      period: float = TWO_PI) -> WeierstrassField:
    """Synthesize a Weierstrass field sampled on an ``n``-point grid.

    Parameters
    ----------
    tau : float
        Target Zygmund regularity, ``tau > 0``.
    amplitude : float
        Metric amplitude ``a > 0`` (metadata only).
    depth : int
        Number of terms ``J >= 1``.
    n : int
        Grid points per axis.
    phases : None, int or array_like
        ``None`` gives zero phases, an integer seeds uniform random phases,
        an array of shape ``(dim, J)`` is used as is.
    dim : {1, 2}

    Raises
    ------
    GridTooCoarseError
        If ``omega_J`` is not strictly below the grid Nyquist frequency.
    """
    if tau <= 0 or amplitude <= 0:
        raise ParameterError("tau and amplitude must be positive")
    if depth < 1:
        raise ParameterError("depth must be at least 1")
    if dim not in (1, 2):
        raise ParameterError("dim must be 1 or 2")
    grid = PeriodicGrid(dim=dim, n=n, period=period)
    if 2.0 ** depth * TWO_PI / period >= grid.nyquist:
        raise GridTooCoarseError("2^%d is not below the Nyquist frequency of an %d-point grid" % (depth, n))
    if phases is None:
        ph = np.zeros((dim, depth))
    elif np.isscalar(phases) and float(phases).is_integer():
        ph = np.random.default_rng(int(phases)).uniform(0.0, TWO_PI, size=(dim, depth))
    else:
        ph = np.asarray(phases, dtype=float).reshape(dim, depth)
    return WeierstrassField(tau=float(tau), amplitude=float(amplitude), depth=int(depth), n=int(n), dim=dim,
                            period=float(period), phases=ph)


def bump(r, alpha: float = 1.0):
    """Smooth compactly supported bump ``exp(-alpha r^2 / (1 - r^2))`` on ``|r| < 1``.

    Equals one at the origin and vanishes to infinite order at ``|r| = 1``.
    """
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = r < 1.0
    q = r[inside] ** 2
    out[inside] = np.exp(-alpha * q / (1.0 - q))
    return out


def regression_slope(x: Sequence[float], y: Sequence[float]):
    """Least-squares slope, intercept and R^2 of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(icept), float(r2)
