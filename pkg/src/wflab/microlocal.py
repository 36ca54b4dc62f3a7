"""Sobolev wavefront estimation, null bicharacteristics and the light-cone relation.

Estimator
---------
A sampled function ``u`` is localized by a compact bump ``phi`` around a base
point and Fourier transformed on a zero-padded grid. For a conic sector
``Gamma`` around a direction the shell energies

    E_j = mean{ |F(phi u)(k)|^2 : angle(k, dir) <= half_angle, 2^j <= |k| < 2^(j+1) }

are regressed as ``log2 E_j = a - beta j``. The critical exponent is
``s_hat = (beta - d_eff) / 2`` where ``d_eff`` is fixed by an anchor with a
known order (a discrete impulse). Directions whose energies reach the noise
floor inside the regression range are flagged *saturated* (regular).

Doubled scans of translation-invariant kernels use the reduced variables
``(tau, r) = (t - s, x - y)`` and a product window
``phi_a(tau, r) * phi_b(sigma, rho)`` (``sigma, rho`` the midpoints), for
which ``F(xi, eta) = F_a((xi - eta)/2) * F_b(xi + eta)``. Cone means in the
4-D frequency space are estimated from scrambled Sobol samples.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from . import kernels
from .dyadic import TWO_PI, bump, regression_slope
from .errors import NumericalDiagnostic, ParameterError, PreconditionError, RegularityError
from .propagator import column_kernel
from .spectral import MetricModel, SpectralBasis

DEFAULT_SHELLS = (3, 4, 5, 6)
FLOW_TOL = 1e-8
SATURATE_AT = 8.0


# --- cones and local spectra -------------------------------------------------

@dataclass(frozen=True)
class ConeSpec:
    """Conic sector around ``direction`` with a bump window of ``radius`` at ``base``."""

    base: tuple
    direction: tuple
    half_angle: float
    radius: float
    alpha: float = 8.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0 or not np.all(np.isfinite(d)):
            raise ParameterError("cone direction must be a nonzero finite vector")
        if not 0 < self.half_angle <= math.pi / 4:
            raise ParameterError("half_angle must lie in (0, pi/4], got %g" % self.half_angle)
        if self.radius <= 0:
            raise ParameterError("window radius must be positive")
        object.__setattr__(self, "direction", tuple(float(v) for v in d / norm))
        object.__setattr__(self, "base", tuple(float(v) for v in np.atleast_1d(self.base)))


@dataclass
class LocalSpectrum:
    """``|F(phi u)|^2`` on a padded DFT grid (FFT index order).

    Attributes
    ----------
    power : ndarray
        Squared modulus of the windowed transform.
    freqs : tuple of ndarray
        Angular frequencies per axis.
    noise : float
        Rounding-level floor of ``power`` (squared ``eps * ||phi u||_1``).
    """

    power: np.ndarray
    freqs: tuple
    noise: float

    @property
    def dim(self) -> int:
        return self.power.ndim

    def _geometry(self):
        if not hasattr(self, "_cache"):
            grids = np.meshgrid(*self.freqs, indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=1)
            mag = np.linalg.norm(pts, axis=1)
            self._cache = (pts, mag)
        return self._cache

    def cone_energies(self, direction, half_angle: float, shells: Sequence[int]):
        """Shell means inside the cone; empty shells are ``nan`` (absent)."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        pts, mag = self._geometry()
        shells = list(shells)
        lo, hi = 2.0 ** shells[0], 2.0 ** (shells[-1] + 1)
        sel = (mag >= lo) & (mag < hi)
        p, m, w = pts[sel], mag[sel], self.power.ravel()[sel]
        inside = p @ d >= math.cos(half_angle) * m
        j = np.floor(np.log2(m[inside])).astype(int) - shells[0]
        nb = len(shells)
        j = np.clip(j, 0, nb - 1)
        counts = np.bincount(j, minlength=nb)
        sums = np.bincount(j, weights=w[inside], minlength=nb)
        with np.errstate(invalid="ignore", divide="ignore"):
            E = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        return E, counts


def _offsets(coord, center, period):
    off = np.asarray(coord, dtype=float) - center
    if period is not None:
        off = np.mod(off + 0.5 * period, period) - 0.5 * period
    return off


def local_spectrum(values, coords: Sequence, base, radius: float, alpha: float = 8.0,
                   periods: Optional[Sequence] = None, pad: int = 4) -> LocalSpectrum:
    """Window ``values`` by a radial bump at ``base`` and transform.

    Parameters
    ----------
    values : ndarray
        Samples on the tensor grid ``coords`` (uniform spacing per axis).
    coords : sequence of 1-D arrays
    base : sequence of float
    radius, alpha : float
        Window ``bump(|x - base| / radius, alpha)``.
    periods : sequence of (float or None), optional
        Period of each axis; ``None`` marks an open axis, where the window
        must fit inside the sampled range.
    pad : int
        Zero-padding factor applied to the cropped window box.
    """
    u = np.asarray(values, dtype=float)
    D = u.ndim
    base = np.atleast_1d(np.asarray(base, dtype=float))
    if len(coords) != D or base.size != D:
        raise ParameterError("coords and base must match the %d axes of the samples" % D)
    periods = list(periods) if periods is not None else [None] * D
    idx, offs, steps = [], [], []
    for ax in range(D):
        c = np.asarray(coords[ax], dtype=float)
        h = float(c[1] - c[0])
        off = _offsets(c, base[ax], periods[ax])
        keep = np.nonzero(np.abs(off) < radius)[0]
        if periods[ax] is None and (base[ax] - radius < c[0] - 0.5 * h or base[ax] + radius > c[-1] + 0.5 * h):
            raise PreconditionError("window at %.4g leaves the sampled range on axis %d" % (base[ax], ax))
        if keep.size < 4:
            raise PreconditionError("window radius %.3g spans fewer than 4 samples" % radius)
        order = np.argsort(off[keep], kind="stable")
        idx.append(keep[order])
        offs.append(off[keep][order])
        steps.append(h)
    box = u[np.ix_(*idx)]
    grids = np.meshgrid(*offs, indexing="ij")
    rho = np.sqrt(sum((g / radius) ** 2 for g in grids))
    wu = bump(rho, alpha) * box
    shape = [pad * (1 << int(math.ceil(math.log2(s)))) for s in wu.shape]
    cell = float(np.prod(steps))
    F = np.fft.fftn(wu, s=shape, axes=tuple(range(len(shape)))) * cell
    freqs = tuple(TWO_PI * np.fft.fftfreq(P, h) for P, h in zip(shape, steps))
    noise = (np.finfo(float).eps * np.abs(wu).sum() * cell) ** 2
    return LocalSpectrum(np.abs(F) ** 2, freqs, float(noise))


def shell_energies(u, cone: ConeSpec, coords: Sequence, periods=None, shells: Sequence[int] = DEFAULT_SHELLS,
                   pad: int = 4):
    """Cone-restricted dyadic shell energies of ``u`` windowed at ``cone.base``.

    Returns
    -------
    E : ndarray
        Mean ``|F(phi u)|^2`` per shell, ``nan`` for shells with no cells.
    counts : ndarray
        Number of frequency cells per shell.

    Raises
    ------
    PreconditionError
        The grid resolves fewer than 5 dyadic shells.
    """
    spec = local_spectrum(u, coords, cone.base, cone.radius, cone.alpha, periods, pad)
    top = min(float(np.abs(f).max()) for f in spec.freqs)
    if np.log2(top) < 5:
        raise PreconditionError("grid resolves fewer than 5 dyadic shells (max frequency %.3g)" % top)
    return spec.cone_energies(cone.direction, cone.half_angle, shells)


# --- regression ----------------------------------------------------------------

@dataclass(frozen=True)
class CriticalFit:
    """Result of the shell-energy regression.

    ``s_hat`` is ``inf`` when the energies fall below the floor inside the
    regression range (decay faster than the data can show).
    """

    s_hat: float
    slope: float
    r2: float
    saturated: bool
    reliable: bool
    used: tuple


def critical_exponent(E, shells: Sequence[int], d_eff: float = 0.0, floor: float = 0.0,
                      min_shells: int = 4, saturate_at: float = SATURATE_AT) -> CriticalFit:
    """Fit ``log2 E_j = a - beta j`` and return ``s_hat = (beta - d_eff) / 2``.

    Shells with ``nan`` energy are absent. The fit uses the run of shells
    above ``floor`` starting at the first present shell; a run cut short by
    the floor (or a first shell already below it) is reported saturated.

    Raises
    ------
    PreconditionError
        Fewer than ``min_shells`` usable shells and no floor crossing.
    """
    E = np.asarray(E, dtype=float)
    shells = np.asarray(list(shells), dtype=float)
    present = np.nonzero(np.isfinite(E))[0]
    if present.size == 0:
        raise PreconditionError("no shells present")
    run = []
    hit_floor = False
    for i in range(present[0], E.size):
        if not np.isfinite(E[i]):
            break
        if E[i] <= floor:
            hit_floor = True
            break
        run.append(i)
    if len(run) < min_shells:
        if hit_floor:
            return CriticalFit(math.inf, math.inf, 1.0, True, True, tuple(int(shells[i]) for i in run))
        raise PreconditionError("need at least %d usable shells, got %d" % (min_shells, len(run)))
    slope, _, r2 = regression_slope(shells[run], np.log2(E[run]))
    beta = -slope
    s_hat = 0.5 * (beta - d_eff)
    saturated = s_hat >= saturate_at
    return CriticalFit(float(s_hat), float(beta), float(r2), bool(saturated), bool(saturated or r2 >= 0.8),
                       tuple(int(shells[i]) for i in run))


# --- calibration -------------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    """Anchors fixing the regression offset of one estimator configuration.

    Attributes
    ----------
    d_eff : float
        Offset such that the impulse anchor reads its exact order.
    anchor_order : float
        Exact order assigned to the impulse anchor.
    impulse_slope : float
        Raw decay rate ``beta`` of the impulse anchor.
    s_ramp : float
        Measured order of the ``|.|`` ramp anchor (exact value 3/2).
    """

    estimator: str
    d_eff: float
    anchor_order: float
    impulse_slope: float
    s_ramp: float
    shells: tuple
    half_angle: float
    radius: float
    alpha: float

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def calibrate(dim: int, n: int = 512, period: float = TWO_PI, shells: Sequence[int] = DEFAULT_SHELLS,
              half_angle: float = math.radians(10.0), radius: float = 0.75, alpha: float = 8.0,
              pad: int = 4) -> Calibration:
    """Impulse and ramp anchors for the direct ``dim``-dimensional estimator.

    The discrete impulse has order ``-dim/2``; this fixes ``d_eff``. The
    ramp ``|x_0|`` (conormal to a hyperplane) is then measured along its
    conormal.
    """
    if dim not in (1, 2):
        raise ParameterError("direct calibration supports dim 1 or 2")
    h = period / n
    c = np.arange(n) * h
    coords = [c] * dim
    base = [c[n // 2]] * dim
    u = np.zeros((n,) * dim)
    u[(n // 2,) * dim] = 1.0 / h ** dim
    e1 = np.zeros(dim)
    e1[0] = 1.0
    cone = ConeSpec(tuple(base), tuple(e1), half_angle, radius, alpha)
    E, _ = shell_energies(u, cone, coords, [period] * dim, shells, pad)
    imp = critical_exponent(E, shells, 0.0)
    anchor = -dim / 2.0
    d_eff = imp.slope - 2.0 * anchor
    grids = np.meshgrid(*coords, indexing="ij")
    ramp = np.abs(grids[0] - base[0])
    E, _ = shell_energies(ramp, cone, coords, [period] * dim, shells, pad)
    s_ramp = critical_exponent(E, shells, d_eff).s_hat
    return Calibration("direct-%dd" % dim, float(d_eff), anchor, float(imp.slope), float(s_ramp),
                       tuple(shells), half_angle, radius, alpha)


# --- doubled (4-D) cone sampling --------------------------------------------------

def _cap_angle_table(half_angle: float, m: int = 2049):
    th = np.linspace(0.0, half_angle, m)
    cdf = th - np.sin(th) * np.cos(th)
    return th, cdf / cdf[-1]


@dataclass
class ConeSampler4D:
    """Quasi-random points uniformly filling 4-D conic shells.

    The radial coordinate has density ``r^3``, the polar angle from the
    axis density ``sin^2``, and the remaining angles are uniform on ``S^2``.
    """

    half_angle: float
    n_samples: int = 4096
    seed: int = 0
    unit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        u = qmc.Sobol(d=4, scramble=True, seed=self.seed).random(self.n_samples)
        th_tab, cdf = _cap_angle_table(self.half_angle)
        theta = np.interp(u[:, 1], cdf, th_tab)
        z = 1.0 - 2.0 * u[:, 2]
        phi = TWO_PI * u[:, 3]
        rxy = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        self._r01 = u[:, 0]
        self._theta = theta
        self.unit = np.stack([np.cos(theta), np.sin(theta) * rxy * np.cos(phi),
                              np.sin(theta) * rxy * np.sin(phi), np.sin(theta) * z], axis=1)

    def points(self, direction, j: int) -> np.ndarray:
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        q, _ = np.linalg.qr(np.column_stack([d, np.eye(4)]))
        frame = q[:, :4]
        frame[:, 0] = d
        lo, hi = 2.0 ** j, 2.0 ** (j + 1)
        r = (lo ** 4 + self._r01 * (hi ** 4 - lo ** 4)) ** 0.25
        return (self.unit @ frame.T) * r[:, None]


def doubled_energies(Fa2: np.ndarray, dk: float, sigma_b: float, sampler: ConeSampler4D, direction,
                     shells: Sequence[int]) -> np.ndarray:
    """Cone-shell means of ``|F_a((xi-eta)/2)|^2 |F_b(xi+eta)|^2`` for one 4-D direction."""
    return np.array([kernels.cone_sample_energy(sampler.points(direction, j), Fa2, dk, sigma_b) for j in shells])


def _reduced_spectrum(k_values, h: float, tau0: float, r0: float, tau_coords, x_coords, period: float,
                      radius: float, alpha: float, pad: int):
    spec = local_spectrum(k_values, [tau_coords, x_coords], (tau0, r0), radius, alpha, [None, period], pad)
    if spec.power.shape[0] != spec.power.shape[1]:
        raise PreconditionError("reduced window box must be square")
    dk = float(spec.freqs[0][1] - spec.freqs[0][0])
    return spec, dk


def calibrate_doubled(n: int = 512, period: float = TWO_PI, shells: Sequence[int] = DEFAULT_SHELLS,
                      half_angle: float = math.radians(8.0), radius: float = 0.75, alpha: float = 8.0,
                      sigma_b: float = 1.0, n_samples: int = 4096, seed: int = 0, pad: int = 4) -> Calibration:
    """Anchors for the doubled estimator on kernels of ``(t - s, x - y)``.

    The anchor is the diagonal impulse ``delta(t - s) delta(x - y)``,
    conormal to a codimension-2 plane and of exact order ``-1``. The ramp
    ``|t - s|`` is measured along the conormal ``(1, 0, -1, 0)``.
    """
    h = period / n
    m = int(math.ceil(radius / h)) + 2
    tau = np.arange(-m, m + 1) * h
    x = np.arange(n) * h
    sampler = ConeSampler4D(half_angle, n_samples, seed)
    imp = np.zeros((tau.size, n))
    imp[m, 0] = 1.0 / h ** 2
    spec, dk = _reduced_spectrum(imp, h, 0.0, 0.0, tau, x, period, radius, alpha, pad)
    diag_dir = np.array([1.0, 0.0, -1.0, 0.0]) / math.sqrt(2.0)
    E = doubled_energies(spec.power, dk, sigma_b, sampler, diag_dir, shells)
    fit = critical_exponent(E, shells, 0.0)
    anchor = -1.0
    d_eff = fit.slope - 2.0 * anchor
    ramp = np.abs(tau)[:, None] * np.ones((1, n))
    spec, dk = _reduced_spectrum(ramp, h, 0.0, 0.0, tau, x, period, radius, alpha, pad)
    E = doubled_energies(spec.power, dk, sigma_b, sampler, diag_dir, shells)
    s_ramp = critical_exponent(E, shells, d_eff).s_hat
    return Calibration("doubled-4d", float(d_eff), anchor, float(fit.slope), float(s_ramp), tuple(shells),
                       half_angle, radius, alpha)


# --- null bicharacteristics -----------------------------------------------------------

@dataclass(frozen=True)
class Bicharacteristic:
    """Sampled null bicharacteristic in coordinate time.

    ``x[k]`` and ``xi[k]`` are the base point and spatial covector at time
    ``t[k]``; the time covector ``xi0`` is conserved.
    """

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    xi0: float
    p2_max: float
    dt: float
    halvings: int

    @property
    def end(self):
        return self.t[-1], self.x[-1], self.xi[-1]


def _series_arrays(metric: MetricModel):
    K = max(1, max(s.omega.size for s in metric.series))
    omega = np.zeros((metric.dim, K))
    ca = np.zeros((metric.dim, K))
    sa = np.zeros((metric.dim, K))
    for ax, s in enumerate(metric.series):
        k = s.omega.size
        omega[ax, :k] = s.omega
        ca[ax, :k] = s.cos
        sa[ax, :k] = s.sin
    return omega, ca, sa


def _p2_rel(metric: MetricModel, x, xi0, xi):
    x = np.atleast_2d(x)
    xi = np.atleast_2d(xi)
    q = np.sum(xi ** 2, axis=1)
    c = np.atleast_1d(metric.c(x if metric.dim > 1 else x[:, 0]))
    return np.abs(-xi0 ** 2 + q / c ** 2) / (1.0 + q)


def hamiltonian_flow(metric: MetricModel, start, T: float, dt: Optional[float] = None, tol: float = FLOW_TOL,
                     tol_char: float = 1e-9, max_halvings: int = 14) -> Bicharacteristic:
    """Integrate the null bicharacteristic of ``p2 = -xi0^2 + c^-2 |xi|^2``.

    Parameters
    ----------
    start : tuple
        ``((t, x...), (xi0, xi...))`` with a null covector.
    T : float
        Signed coordinate-time span; negative values flow backward.
    dt : float, optional
        Initial step magnitude, halved until the endpoint moves less than
        ``tol``. Defaults to ``|T| / 64``.

    Raises
    ------
    RegularityError
        The metric is not certified ``C^{1,1}``.
    PreconditionError
        The starting covector is not null or ``xi0 = 0``.
    NumericalDiagnostic
        Step halving did not converge.
    """
    if not (metric.is_smooth or metric.tau >= 2):
        raise RegularityError("flow needs a C^1,1 metric, got %s" % metric.regularity)
    point, cov = start
    point = np.asarray(point, dtype=float).ravel()
    cov = np.asarray(cov, dtype=float).ravel()
    d = metric.dim
    if point.size != d + 1 or cov.size != d + 1:
        raise ParameterError("start point and covector must have length %d" % (d + 1))
    xi0 = float(cov[0])
    if xi0 == 0:
        raise PreconditionError("xi0 = 0 is not a null covector")
    if _p2_rel(metric, point[1:], xi0, cov[1:])[0] > tol_char:
        raise PreconditionError("start covector is not null (|p2| = %.3g)" % _p2_rel(metric, point[1:], xi0, cov[1:])[0])
    omega, ca, sa = _series_arrays(metric)
    if T == 0:
        traj = np.concatenate([point[1:], cov[1:]])[None, :]
        return Bicharacteristic(np.array([point[0]]), traj[:, :d], traj[:, d:], xi0, 0.0, 0.0, 0)
    h = abs(T) / 64.0 if dt is None else abs(float(dt))
    steps = max(1, int(math.ceil(abs(T) / h)))
    prev = None
    history = []
    for halving in range(max_halvings + 1):
        traj = kernels.null_flow(point[1:], cov[1:], xi0, T / steps, steps, metric.c0, omega, ca, sa)
        if prev is not None:
            move = float(np.max(np.abs(traj[-1] - prev[-1])))
            history.append(move)
            if move < tol:
                t = point[0] + T * np.arange(steps + 1) / steps
                p2 = float(np.max(_p2_rel(metric, traj[:, :d], xi0, traj[:, d:])))
                return Bicharacteristic(t, traj[:, :d].copy(), traj[:, d:].copy(), xi0, p2, T / steps, halving)
        prev = traj
        steps *= 2
    raise NumericalDiagnostic("step halving did not reach %.1e" % tol, history)


def _periodic_gap(metric: MetricModel, a, b) -> float:
    diff = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + 0.5 * metric.period,
                  metric.period) - 0.5 * metric.period
    return float(np.linalg.norm(diff))


def _angle(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cosang = float(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(max(-1.0, min(1.0, cosang)))


def null_angle(metric: MetricModel, x, cov) -> float:
    """Angle between ``(xi0, xi)`` and the null cone at ``x`` (in ``(xi0, xi / c)`` coordinates)."""
    cov = np.asarray(cov, dtype=float)
    c = float(np.atleast_1d(metric.c(np.asarray(x, dtype=float).reshape(metric.dim)))[0])
    return abs(math.atan2(np.linalg.norm(cov[1:]) / c, abs(cov[0])) - math.pi / 4)


def oracle_C(metric: MetricModel, pair, tol: float = 1e-6, angle_tol: Optional[float] = None,
             char_tol: float = 1e-6) -> bool:
    """Membership of ``(x~, xi~, y~, eta~)`` in the light-cone relation ``C``.

    Points are ``(t, x...)`` and covectors ``(xi0, xi...)``. The
    bicharacteristic through ``(x~, xi~)`` is flowed to the time of ``y~``;
    the pair is in ``C`` iff the flowed point is within ``tol`` of ``y~``
    and the flowed covector is within ``angle_tol`` (radians, default
    ``tol``) of the direction of ``eta~``.

    Raises
    ------
    PreconditionError
        Either covector is not null.
    """
    xt, xit, yt, etat = (np.asarray(v, dtype=float).ravel() for v in pair)
    angle_tol = tol if angle_tol is None else angle_tol
    for pt, cv in ((xt, xit), (yt, etat)):
        if cv[0] == 0 or _p2_rel(metric, pt[1:], cv[0], cv[1:])[0] > char_tol:
            raise PreconditionError("oracle_C needs null covectors")
    curve = hamiltonian_flow(metric, (xt, xit), yt[0] - xt[0], tol_char=char_tol)
    _, x_end, xi_end = curve.end
    if _periodic_gap(metric, x_end, yt[1:]) > tol:
        return False
    return _angle(np.concatenate([[curve.xi0], xi_end]), etat) <= angle_tol


def oracle_C_prime(metric: MetricModel, pair, tol: float = 1e-6, angle_tol: Optional[float] = None,
                   char_tol: float = 1e-6) -> bool:
    """Membership in ``C' = {(x~, xi~, y~, -eta~) : (x~, xi~, y~, eta~) in C}``."""
    xt, xit, yt, etat = pair
    return oracle_C(metric, (xt, xit, yt, -np.asarray(etat, dtype=float)), tol, angle_tol, char_tol)


def causal_future_mask(metric: MetricModel, t, x, support, slack: float = 0.0) -> np.ndarray:
    """``J^+`` of a sampled set for a 1-D metric, from optical distances.

    Parameters
    ----------
    t, x : 1-D arrays
        Grid coordinates.
    support : bool array ``(len(t), len(x))``
        Sampled source set.
    slack : float
        Added to the time budget (grid tolerance).
    """
    if metric.dim != 1:
        raise ParameterError("causal_future_mask supports 1-D metrics")
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    src = np.nonzero(np.asarray(support, dtype=bool))
    if src[0].size == 0:
        return np.zeros((t.size, x.size), dtype=bool)
    ys = np.unique(src[1])
    s_first = np.array([t[src[0][src[1] == j]].min() for j in ys])
    dist = metric.optical_distance(x[:, None], x[ys][None, :])
    arrival = np.min(s_first[None, :] + dist, axis=1)
    return t[:, None] + slack >= arrival[None, :]


# --- scans ----------------------------------------------------------------------------

@dataclass
class ScanEntry:
    """One (base, direction) pair of a wavefront scan."""

    base: tuple
    direction: tuple
    label: str
    energies: np.ndarray
    fit: CriticalFit
    singular: bool
    oracle_in_C: bool
    in_char: bool
    time_ok: bool

    def row(self) -> dict:
        return {"label": self.label, "base": " ".join("%.6g" % v for v in self.base),
                "direction": " ".join("%.6g" % v for v in self.direction),
                "s_hat": self.fit.s_hat, "slope": self.fit.slope, "r2": self.fit.r2,
                "saturated": self.fit.saturated, "reliable": self.fit.reliable, "singular": self.singular,
                "oracle_in_C": self.oracle_in_C, "in_char": self.in_char, "time_ok": self.time_ok,
                "energies": " ".join("%.6e" % e for e in self.energies)}


@dataclass
class WavefrontReport:
    """Scan entries together with the threshold and calibration used."""

    entries: List[ScanEntry]
    s_threshold: float
    calibration: Calibration
    kind: str
    floor: float
    meta: dict = field(default_factory=dict)

    def singular(self, reliable_only: bool = True):
        return [e for e in self.entries if e.singular and (e.fit.reliable or not reliable_only)]

    def rows(self):
        return [e.row() for e in self.entries]


def _classify(fits, threshold):
    return [f.reliable and not f.saturated and f.s_hat < threshold for f in fits]


def _noise_floor(energies, floor_rel):
    finite = [np.nanmax(E) for E in energies if np.any(np.isfinite(E))]
    return floor_rel * max(finite) if finite else 0.0


def default_doubled_directions(half_angle: float = math.radians(8.0), count: int = 64, seed: int = 7):
    """Stratified unit directions in the doubled fiber ``(xi0, xi, eta0, eta)``.

    Contains the four null diagonal-law directions ``(z, -z)``, exact
    violations of ``xi0 + eta0 = 0``, null pairs breaking ``eta = -xi``,
    non-null directions of the form ``(z, -z)``, and quasi-random fillers.
    Every non-null-diagonal direction is kept at least three half-angles
    away from the null diagonal family.
    """
    s = 1.0 / math.sqrt(2.0)
    nulls = [np.array([a, b]) * s for a in (1.0, -1.0) for b in (1.0, -1.0)]
    out, labels = [], []

    def add(v, lab):
        v = np.asarray(v, dtype=float)
        out.append(v / np.linalg.norm(v))
        labels.append(lab)

    for z in nulls:
        add(np.concatenate([z, -z]), "null-diag")
    for z in nulls:
        add(np.concatenate([z, z]), "time-violating")
        add(np.concatenate([z, [0.0, 0.0]]), "time-violating")
        add(np.concatenate([[0.0, 0.0], z]), "time-violating")
    for z in nulls:
        add(np.concatenate([z, [-z[0], z[1]]]), "null-offdiag")
    guard = 3.0 * half_angle
    for deg in range(0, 360, 15):
        th = math.radians(deg)
        if min(abs((th - math.radians(45 + 90 * k) + math.pi) % TWO_PI - math.pi) for k in range(4)) < guard:
            continue
        z = np.array([math.cos(th), math.sin(th)])
        add(np.concatenate([z, -z]), "nonnull-diag")
    family = [np.concatenate([z, -z]) * s for z in nulls]
    rng = qmc.Sobol(d=4, scramble=True, seed=seed)
    while len(out) < count:
        g = rng.random(8)
        for row in g:
            v = np.array([math.sqrt(-2 * math.log(max(row[0], 1e-12))) * math.cos(TWO_PI * row[1]),
                          math.sqrt(-2 * math.log(max(row[0], 1e-12))) * math.sin(TWO_PI * row[1]),
                          math.sqrt(-2 * math.log(max(row[2], 1e-12))) * math.cos(TWO_PI * row[3]),
                          math.sqrt(-2 * math.log(max(row[2], 1e-12))) * math.sin(TWO_PI * row[3])])
            if min(_angle(v, f) for f in family) < guard:
                continue
            if len(out) < count:
                add(v, "generic")
    return np.array(out), labels


def _time_ok(direction, angle_tol):
    d = np.asarray(direction, dtype=float)
    k = d.size // 2
    return abs(d[0] + d[k]) / (math.sqrt(2.0) * np.linalg.norm(d)) <= math.sin(angle_tol)


def _doubled_in_char(metric, base, direction, angle_tol):
    base = np.asarray(base, dtype=float)
    d = np.asarray(direction, dtype=float)
    k = d.size // 2
    for pt, cv in ((base[1:k], d[:k]), (base[k + 1:], d[k:])):
        if not np.any(cv != 0) or null_angle(metric, pt, cv) > angle_tol:
            return False
    return True


def _nearest_null(metric, x, cov):
    cov = np.asarray(cov, dtype=float)
    c = float(np.atleast_1d(metric.c(np.asarray(x, dtype=float).reshape(metric.dim)))[0])
    q = np.linalg.norm(cov[1:])
    scale = math.sqrt(cov[0] ** 2 + q ** 2 / c ** 2) / math.sqrt(2.0)
    return np.concatenate([[math.copysign(scale, cov[0])], cov[1:] * (scale * c / q)])


def doubled_in_C_prime(metric: MetricModel, base, direction, angle_tol: float, pos_tol: float) -> bool:
    """Whether a doubled direction lies in ``C'`` up to the given tolerances.

    Both halves must be within ``angle_tol`` of the null cone; they are
    snapped to it before consulting :func:`oracle_C_prime`.
    """
    if not _doubled_in_char(metric, base, direction, angle_tol):
        return False
    base = np.asarray(base, dtype=float)
    d = np.asarray(direction, dtype=float)
    k = d.size // 2
    xi = _nearest_null(metric, base[1:k], d[:k])
    eta = _nearest_null(metric, base[k + 1:], d[k:])
    pair = (base[:k], xi, base[k:], eta)
    return oracle_C_prime(metric, pair, tol=pos_tol, angle_tol=angle_tol, char_tol=1e-9)


def _run(jobs, func, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, jobs))
    return [func(j) for j in jobs]


def wavefront_scan_flat(basis: SpectralBasis, N: int, bases, directions=None, *, labels=None,
                        half_angle: float = math.radians(8.0), radius: float = 0.75, alpha: float = 8.0,
                        sigma_b: float = 1.0, shells: Sequence[int] = DEFAULT_SHELLS,
                        s_threshold: Optional[float] = None, calibration: Optional[Calibration] = None,
                        n_samples: int = 4096, seed: int = 0, pad: int = 4, floor_rel: float = 1e-12,
                        angle_tol: float = math.radians(5.0), threads: int = 1) -> WavefrontReport:
    """Doubled-space scan of ``K_G`` for a translation-invariant 1-D basis.

    The kernel depends only on ``(t - s, x - y)``; each base
    ``(t, x, s, y)`` is analysed through the reduced kernel windowed at
    ``(t - s, x - y)`` and a Gaussian midpoint window of width ``sigma_b``.

    ``s_threshold`` defaults to the critical exponent measured along the
    light-cone conormal at ``(t - s, x - y) = (1, 1)`` plus one.
    """
    metric = basis.metric
    if metric.dim != 1 or metric.kind != "flat":
        raise ParameterError("the doubled scan needs a flat 1-D metric (use wavefront_scan_column)")
    n = basis.n
    h = metric.period / n
    x = np.arange(n) * h
    if directions is None:
        directions, labels = default_doubled_directions(half_angle)
    directions = np.asarray(directions, dtype=float)
    labels = list(labels) if labels is not None else ["direction"] * len(directions)
    if calibration is None:
        calibration = calibrate_doubled(n, metric.period, shells, half_angle, radius, alpha, sigma_b,
                                        n_samples, seed, pad)
    sampler = ConeSampler4D(half_angle, n_samples, seed)
    m = int(math.ceil(radius / h)) + 2

    def spectrum_at(tau0, r0):
        lags = np.arange(-m, m + 1) + int(round(tau0 / h))
        tau = lags * h
        k = column_kernel(basis, N, 0.0, 0, tau, "K_G")
        return _reduced_spectrum(k, h, tau0, r0, tau, x, metric.period, radius, alpha, pad)

    def measure(job):
        tau0, r0 = job
        spec, dk = spectrum_at(tau0, r0)
        return [doubled_energies(spec.power, dk, sigma_b, sampler, d, shells) for d in directions]

    if s_threshold is None:
        c_dir = np.array([-1.0, 1.0, 1.0, -1.0]) / 2.0
        spec, dk = spectrum_at(1.0, 1.0)
        E_anchor = doubled_energies(spec.power, dk, sigma_b, sampler, c_dir, shells)
        anchor = critical_exponent(E_anchor, shells, calibration.d_eff)
        s_threshold = anchor.s_hat + 1.0
    bases = [tuple(float(v) for v in b) for b in bases]
    jobs = [(b[0] - b[2], b[1] - b[3]) for b in bases]
    energies = _run(jobs, measure, threads)
    floor = _noise_floor([E for per in energies for E in per], floor_rel)
    entries = []
    for b, per in zip(bases, energies):
        fits = [critical_exponent(E, shells, calibration.d_eff, floor) for E in per]
        for d, lab, E, fit, sing in zip(directions, labels, per, fits, _classify(fits, s_threshold)):
            entries.append(ScanEntry(b, tuple(d), lab, E, fit, sing,
                                     doubled_in_C_prime(metric, b, d, angle_tol, pos_tol=h),
                                     _doubled_in_char(metric, b, d, angle_tol), _time_ok(d, angle_tol)))
    return WavefrontReport(entries, float(s_threshold), calibration, "doubled", floor,
                           {"N": N, "n": n, "radius": radius, "alpha": alpha, "half_angle": half_angle,
                            "sigma_b": sigma_b, "shells": list(shells), "n_samples": n_samples})


@dataclass(frozen=True)
class ConeBranch:
    """Null geodesic from the frozen column point, with its flowed covector."""

    sign: int
    curve: Bicharacteristic

    def at(self, t: float):
        """Position and covector ``(xi0, xi)`` at time ``t`` (linear interpolation)."""
        c = self.curve
        x = np.array([np.interp(t, c.t, c.x[:, i]) for i in range(c.x.shape[1])])
        xi = np.array([np.interp(t, c.t, c.xi[:, i]) for i in range(c.xi.shape[1])])
        return x, np.concatenate([[c.xi0], xi])


def geodesic_cone(metric: MetricModel, s0: float, y0, T: float) -> List[ConeBranch]:
    """Both null geodesics leaving ``(s0, y0)`` forward in time (1-D metrics)."""
    if metric.dim != 1:
        raise ParameterError("geodesic_cone supports 1-D metrics")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    c = float(np.atleast_1d(metric.c(y0))[0])
    out = []
    for sign in (1, -1):
        cov = np.array([1.0, -sign * c])
        out.append(ConeBranch(sign, hamiltonian_flow(metric, (np.concatenate([[s0], y0]), cov), T,
                                                     dt=min(0.01, T / 64))))
    return out


def column_bases(metric: MetricModel, branches: Sequence[ConeBranch], y0: float, times: Sequence[float],
                 radius: float):
    """On-cone bases at ``times`` plus off-cone bases at least ``2 radius`` from both branches.

    Off-cone bases sit midway between the branches (inside the cone) and
    diametrically opposite (outside it) when they clear the guard distance.
    """
    on, off = [], []
    for t in times:
        pos = [float(b.at(t)[0][0]) for b in branches]
        for b, p in zip(branches, pos):
            on.append(((t, p), "t=%.3f/%s" % (t, "right" if b.sign > 0 else "left")))
        inside = 0.5 * (pos[0] + pos[1])
        outside = inside + 0.5 * metric.period
        for x, lab in ((inside, "inside"), (outside, "outside")):
            if min(_periodic_gap(metric, [x], [p]) for p in pos) >= 2 * radius:
                off.append(((t, x), "t=%.3f/%s" % (t, lab)))
    return on, off


def default_column_directions(count: int = 64):
    """Uniform angles on the circle of ``(xi0, xi)`` directions."""
    th = TWO_PI * (np.arange(count) + 0.5) / count
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def wavefront_scan_column(basis: SpectralBasis, N: int, s0: float, y0_index: int, times: Sequence[float], *,
                          n_directions: int = 64, half_angle: float = math.radians(10.0), radius: float = 0.75,
                          alpha: float = 8.0, shells: Sequence[int] = DEFAULT_SHELLS,
                          s_threshold: Optional[float] = None, calibration: Optional[Calibration] = None,
                          pad: int = 4, floor_rel: float = 1e-12, angle_tol: float = math.radians(5.0),
                          threads: int = 1) -> WavefrontReport:
    """Scan the column kernel ``K_G(t, x; s0, y0)`` of a 1-D metric.

    Bases are taken on both flowed null geodesics from ``(s0, y0)`` at the
    given times and at guarded off-cone points. Each base is probed along
    uniform directions thinned to keep three half-angles away from the
    cone conormals, plus the two conormals themselves (``C``-directions).

    ``s_threshold`` defaults to the flat-metric anchor at the same
    truncation and estimator settings plus one.
    """
    metric = basis.metric
    if metric.dim != 1:
        raise ParameterError("column scans support 1-D metrics")
    n = basis.n
    h = metric.period / n
    x = np.arange(n) * h
    y0 = x[y0_index]
    if calibration is None:
        calibration = calibrate(2, n, metric.period, shells, half_angle, radius, alpha, pad)
    T = max(times) + radius + 2 * h - s0
    branches = geodesic_cone(metric, s0, [y0], T)
    on, off = column_bases(metric, branches, y0, times, radius)
    t0 = min(times) - radius - 2 * h
    lags = np.arange(int(math.floor((t0 - s0) / h)), int(math.ceil(T / h)) + 1)
    tgrid = s0 + lags * h
    K = column_kernel(basis, N, s0, y0_index, tgrid, "K_G")
    uniform = default_column_directions(n_directions)
    guard = 3.0 * half_angle

    def probes(base):
        conormals = []
        for b in branches:
            p, cov = b.at(base[0])
            if _periodic_gap(metric, [base[1]], p) <= h:
                conormals.extend([cov / np.linalg.norm(cov), -cov / np.linalg.norm(cov)])
        dirs = [d for d in uniform if all(_angle(d, c) >= guard for c in conormals)]
        return conormals + dirs, len(conormals)

    def measure(job):
        base, _ = job
        spec = local_spectrum(K, [tgrid, x], base, radius, alpha, [None, metric.period], pad)
        dirs, nc = probes(base)
        return dirs, nc, [spec.cone_energies(d, half_angle, shells)[0] for d in dirs]

    jobs = on + off
    results = _run(jobs, measure, threads)
    if s_threshold is None:
        s_threshold = flat_column_anchor(n, N, metric.period, shells, half_angle, radius, alpha, pad,
                                         calibration) + 1.0
    floor = _noise_floor([E for r in results for E in r[2]], floor_rel)
    entries = []
    for (base, lab), (dirs, nc, Es) in zip(jobs, results):
        fits = [critical_exponent(E, shells, calibration.d_eff, floor) for E in Es]
        for i, (d, E, fit, sing) in enumerate(zip(dirs, Es, fits, _classify(fits, s_threshold))):
            in_char = null_angle(metric, [base[1]], d) <= angle_tol
            in_c = _column_in_C(metric, branches, base, d, angle_tol, h)
            name = lab + ("/conormal%s" % ("+" if i % 2 == 0 else "-") if i < nc else "/probe")
            entries.append(ScanEntry(tuple(base), tuple(d), name, E, fit, sing, in_c, in_char, True))
    return WavefrontReport(entries, float(s_threshold), calibration, "column", floor,
                           {"N": N, "n": n, "s0": s0, "y0": float(y0), "radius": radius, "alpha": alpha,
                            "half_angle": half_angle, "shells": list(shells),
                            "p2_max": max(b.curve.p2_max for b in branches)})


def _column_in_C(metric, branches, base, direction, angle_tol, pos_tol):
    for b in branches:
        p, cov = b.at(base[0])
        if _periodic_gap(metric, [base[1]], p) <= pos_tol:
            if min(_angle(direction, cov), _angle(direction, -cov)) <= angle_tol:
                return True
    return False


def flat_column_anchor(n: int, N: int, period: float = TWO_PI, shells: Sequence[int] = DEFAULT_SHELLS,
                       half_angle: float = math.radians(10.0), radius: float = 0.75, alpha: float = 8.0,
                       pad: int = 4, calibration: Optional[Calibration] = None, t_anchor: float = 1.5) -> float:
    """Critical exponent of the flat column kernel along a light-cone conormal."""
    from .spectral import solve

    metric = MetricModel.flat(1, period=period)
    basis = solve(metric, n, N)
    if calibration is None:
        calibration = calibrate(2, n, period, shells, half_angle, radius, alpha, pad)
    h = period / n
    x = np.arange(n) * h
    lags = np.arange(int(math.floor((t_anchor - radius) / h)) - 2, int(math.ceil((t_anchor + radius) / h)) + 3)
    tgrid = lags * h
    K = column_kernel(basis, N, 0.0, 0, tgrid, "K_G")
    spec = local_spectrum(K, [tgrid, x], (t_anchor, t_anchor), radius, alpha, [None, period], pad)
    E, _ = spec.cone_energies(np.array([-1.0, 1.0]) / math.sqrt(2.0), half_angle, shells)
    return critical_exponent(E, shells, calibration.d_eff).s_hat


# --- summaries --------------------------------------------------------------------------

def compare_to_C(report: WavefrontReport, metric: Optional[MetricModel] = None) -> dict:
    """Precision and recall of the singular detections against ``C``.

    Precision counts reliable singular entries whose pair (with the prime
    convention for doubled scans) lies in ``C``; recall counts sampled
    ``C``-directions detected singular. The result flags
    ``truncation_limited`` when no ``C``-direction is detected.
    """
    if not report.entries:
        raise PreconditionError("empty wavefront report")
    sing = report.singular()
    in_c = [e for e in report.entries if e.oracle_in_C]
    hits = [e for e in in_c if e.singular]
    precision = (sum(e.oracle_in_C for e in sing) / len(sing)) if sing else float("nan")
    recall = len(hits) / len(in_c) if in_c else float("nan")
    s_on_C = [e.fit.s_hat for e in in_c]
    return {"precision": precision, "recall": recall, "n_entries": len(report.entries),
            "n_singular": len(sing), "n_C_directions": len(in_c),
            "n_unreliable": sum(not e.fit.reliable for e in report.entries),
            "time_law": all(e.time_ok for e in sing), "char_law": all(e.in_char for e in sing),
            "truncation_limited": len(hits) == 0, "s_threshold": report.s_threshold,
            "s_on_C_median": float(np.median(s_on_C)) if s_on_C else float("nan"),
            "metric": metric.regularity if metric is not None else None}


def tau_ordering(rough: WavefrontReport, smooth: WavefrontReport, margin: float = 0.5) -> dict:
    """Compare ``s_hat`` on matched ``C``-directions of two scans.

    Entries are matched by label. The probe holds when every matched pair
    satisfies ``s_smooth >= s_rough - margin``.
    """
    a = {e.label: e for e in rough.entries if e.oracle_in_C}
    b = {e.label: e for e in smooth.entries if e.oracle_in_C}
    keys = sorted(set(a) & set(b))
    diffs = [b[k].fit.s_hat - a[k].fit.s_hat for k in keys]
    return {"matched": len(keys), "min_difference": float(min(diffs)) if diffs else float("nan"),
            "holds": bool(keys) and all(d >= -margin for d in diffs), "margin": margin,
            "pairs": [(k, a[k].fit.s_hat, b[k].fit.s_hat) for k in keys]}


# --- diagonal restriction ------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalScan:
    """Shell energies of the restricted kernel ``d_t K_G |_{t=s}`` around ``(x0, x0)``.

    ``ray`` holds means of ``|F|^2`` on the anti-diagonal frequency line
    ``k (1, -1)``; ``conormal`` and ``transverse`` are cone fits along
    ``(1, -1)`` and ``(1, 1)``.
    """

    shells: tuple
    ray: np.ndarray
    conormal: CriticalFit
    transverse: CriticalFit
    conormal_energies: np.ndarray
    transverse_energies: np.ndarray

    @property
    def ray_spread(self) -> float:
        """Ratio of the largest to the smallest anti-diagonal shell energy."""
        return float(np.nanmax(self.ray) / np.nanmin(self.ray))


def diagonal_scan(basis: SpectralBasis, N: int, x0: Optional[float] = None, radius: float = 0.75,
                  alpha: float = 8.0, half_angle: float = math.radians(10.0),
                  shells: Sequence[int] = DEFAULT_SHELLS, pad: int = 4, floor_rel: float = 1e-12,
                  calibration: Optional[Calibration] = None) -> DiagonalScan:
    """Probe the diagonal restriction along and across the conormal of ``{x = y}``."""
    from .propagator import diagonal_restriction

    metric = basis.metric
    n = basis.n
    h = metric.period / n
    x = np.arange(n) * h
    x0 = x[n // 2] if x0 is None else float(x0)
    if calibration is None:
        calibration = calibrate(2, n, metric.period, shells, half_angle, radius, alpha, pad)
    vals = diagonal_restriction(basis, N).values
    spec = local_spectrum(vals, [x, x], (x0, x0), radius, alpha, [metric.period] * 2, pad)
    P = spec.power.shape[0]
    dk = float(spec.freqs[0][1] - spec.freqs[0][0])
    i = np.arange(-(P // 2) + 1, P // 2)
    line = spec.power[i % P, (-i) % P]
    mag = math.sqrt(2.0) * np.abs(i) * dk
    ray = np.array([line[(mag >= 2.0 ** j) & (mag < 2.0 ** (j + 1))].mean() for j in shells])
    E_c, _ = spec.cone_energies(np.array([1.0, -1.0]), half_angle, shells)
    E_t, _ = spec.cone_energies(np.array([1.0, 1.0]), half_angle, shells)
    floor = floor_rel * float(np.nanmax(np.concatenate([E_c, E_t])))
    return DiagonalScan(tuple(shells), ray, critical_exponent(E_c, shells, calibration.d_eff, floor),
                        critical_exponent(E_t, shells, calibration.d_eff, floor), E_c, E_t)
