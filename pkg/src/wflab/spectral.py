"""Rough metric models and the discrete eigenproblem of ``A = -Delta_h + m^2``.

Metrics are conformally flat, ``h_ij = c(x)^2 delta_ij``, with the conformal
factor stored as an explicit trigonometric series. Derivatives of ``c`` are
therefore exact, whatever the regularity of the synthesized field.

Two discretizations sit behind :func:`assemble`:

* ``"trig"``: Galerkin in real trigonometric polynomials (flat and
  tabulated metrics). For flat metrics both matrices are diagonal.
* ``"p1"``: periodic piecewise-linear elements (Weierstrass metrics) with
  Gauss quadrature of the analytic coefficients.

In divergence form the weak problem reads
``int c^(d-2) grad u . grad v = lambda^2 int c^d u v`` after the mass shift,
so the stiffness weight is ``c^(d-2)`` and the mass weight is ``c^d``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .dyadic import TWO_PI, regression_slope, weierstrass_field
from .errors import ConstructionError, NumericalDiagnostic, ParameterError
from .io import read_container, stable_hash, write_container

BASIS_MAGIC = b"WFLAB-EIGBASIS\x00\x00"
ORTHO_TOL = 1e-8
RESID_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TrigSeries:
    """``sum_k A_k cos(omega_k x) + B_k sin(omega_k x)`` (no constant term)."""

    omega: np.ndarray
    cos: np.ndarray
    sin: np.ndarray

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        if self.omega.size == 0:
            return np.zeros_like(x)
        arg = np.multiply.outer(x, self.omega)
        w = self.omega ** deriv
        shift = 0.5 * np.pi * deriv
        return np.cos(arg + shift) @ (self.cos * w) + np.sin(arg + shift) @ (self.sin * w)

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.omega.size == 0:
            return np.zeros_like(x)
        arg = np.multiply.outer(x, self.omega)
        return np.sin(arg) @ (self.cos / self.omega) - (np.cos(arg) - 1.0) @ (self.sin / self.omega)

    def abs_sum(self) -> float:
        return float(np.sum(np.abs(self.cos)) + np.sum(np.abs(self.sin)))


_EMPTY = TrigSeries(np.zeros(0), np.zeros(0), np.zeros(0))


@dataclass(frozen=True, eq=False)
class MetricModel:
    """Conformally flat metric ``h = c^2 delta`` on the torus, plus the mass.

    Build instances with :meth:`flat`, :meth:`weierstrass` or
    :meth:`tabulated`.

    Attributes
    ----------
    dim : int
        Dimension of the spatial slice (1 or 2).
    kind : str
        ``"flat"``, ``"weierstrass"`` or ``"tabulated"``.
    mass : float
        Klein-Gordon mass ``m > 0``.
    period : float
        Period of every axis.
    c0 : float
        Constant part of ``c``.
    series : tuple of TrigSeries
        Oscillating part of ``c`` per axis; ``c = c0 + sum_i series[i](x_i)``.
    tau : float
        Certified Zygmund regularity of ``c`` (``inf`` for smooth models).
    regularity : str
        Human readable regularity tag.
    params : dict
        Synthesis parameters, used for hashing.
    """

    dim: int
    kind: str
    mass: float
    period: float
    c0: float
    series: tuple
    tau: float
    regularity: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError("dim must be 1 or 2")
        if not self.mass > 0:
            raise ParameterError("mass must be positive")
        if self.lower_bound() <= 0:
            n = 256 if self.dim == 1 else 64
            x = self.period * np.arange(n) / n
            pts = np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), -1)
            if np.min(self.c(pts)) <= 0:
                raise ConstructionError("metric is not uniformly positive")

    # -- constructors ----------------------------------------------------

    @classmethod
    def flat(cls, dim: int = 1, mass: float = 1.0, period: float = TWO_PI):
        return cls(dim=dim, kind="flat", mass=float(mass), period=float(period), c0=1.0,
                   series=(_EMPTY,) * dim, tau=np.inf, regularity="smooth",
                   params={"kind": "flat", "dim": dim, "mass": float(mass), "period": float(period)})

    @classmethod
    def weierstrass(cls, tau: float, amplitude: float, depth: int, dim: int = 1, mass: float = 1.0,
                    seed=None, period: float = TWO_PI):
        """``c = 1 + a W_tau`` with the lacunary field of :mod:`wflab.dyadic`.

        ``tau = 2`` is tagged ``"C1,1"``: the truncated series has a bounded
        second derivative (``<= a J``) without a uniform modulus of
        continuity.
        """
        n_probe = 2 ** (depth + 2)
        W = weierstrass_field(tau, amplitude, depth, n_probe, phases=seed, dim=dim, period=period)
        series = tuple(TrigSeries(W.frequencies.copy(), amplitude * W.coefficients * np.cos(W.phases[ax]),
                                  -amplitude * W.coefficients * np.sin(W.phases[ax])) for ax in range(dim))
        tag = "C1,1" if tau == 2 else "C^%g" % tau
        params = {"kind": "weierstrass", "tau": float(tau), "amplitude": float(amplitude), "depth": int(depth),
                  "dim": dim, "mass": float(mass), "seed": seed, "period": float(period)}
        return cls(dim=dim, kind="weierstrass", mass=float(mass), period=float(period), c0=1.0, series=series,
                   tau=float(tau), regularity=tag, params=params)

    @classmethod
    def tabulated(cls, h_samples, mass: float = 1.0, period: float = TWO_PI):
        """1-D metric from samples of ``h`` (interpolated by its trig polynomial)."""
        h = np.asarray(h_samples, dtype=float)
        if h.ndim != 1:
            raise ParameterError("tabulated metrics are one-dimensional")
        if np.any(h <= 0):
            raise ConstructionError("tabulated h must be positive")
        n = h.size
        C = np.fft.rfft(np.sqrt(h)) / n
        k = np.arange(C.size)
        amp = 2.0 * C
        if n % 2 == 0:
            amp[-1] = C[-1]
        keep = (k > 0) & (np.abs(amp) > 1e-15 * abs(C[0].real))
        series = TrigSeries(k[keep] * TWO_PI / period, amp[keep].real.copy(), -amp[keep].imag.copy())
        return cls(dim=1, kind="tabulated", mass=float(mass), period=float(period), c0=float(C[0].real),
                   series=(series,), tau=np.inf, regularity="smooth",
                   params={"kind": "tabulated", "mass": float(mass), "period": float(period),
                           "table_sha": stable_hash(h.tolist())})

    # -- evaluation ------------------------------------------------------

    def _split(self, points):
        p = np.asarray(points, dtype=float)
        if self.dim == 1 and (p.ndim == 0 or p.shape[-1] != 1):
            p = p[..., None]
        return [p[..., i] for i in range(self.dim)]

    def c(self, points):
        """Conformal factor at ``points`` (shape ``(..., d)``; 1-D accepts plain arrays)."""
        xs = self._split(points)
        return self.c0 + sum(s(x) for s, x in zip(self.series, xs))

    def grad_c(self, points):
        """Gradient of ``c``, shape ``(..., d)``."""
        xs = self._split(points)
        return np.stack([s(x, 1) for s, x in zip(self.series, xs)], axis=-1)

    def hess_diag_c(self, points):
        xs = self._split(points)
        return np.stack([s(x, 2) for s, x in zip(self.series, xs)], axis=-1)

    def h(self, points):
        """Scalar ``c^2`` (the metric is ``h * identity``)."""
        return self.c(points) ** 2

    def h_inv(self, points):
        return self.c(points) ** -2.0

    def sqrt_h(self, points):
        """Riemannian volume density ``c^d``."""
        return self.c(points) ** self.dim

    def grad_h_inv(self, points):
        """Gradient of the scalar inverse metric ``c^-2``."""
        c = self.c(points)
        return -2.0 * c[..., None] ** -3.0 * self.grad_c(points)

    def lower_bound(self) -> float:
        """Certified lower bound of ``c``."""
        return self.c0 - sum(s.abs_sum() for s in self.series)

    def optical_coordinate(self, x):
        """``int_0^x c`` for a 1-D metric (exact, from the series)."""
        if self.dim != 1:
            raise ParameterError("optical coordinate is defined for 1-D metrics")
        x = np.asarray(x, dtype=float)
        return self.c0 * x + self.series[0].antiderivative(x)

    def optical_distance(self, x, y):
        """Periodic Riemannian distance between points of a 1-D metric."""
        total = self.c0 * self.period
        d = np.mod(self.optical_coordinate(x) - self.optical_coordinate(y), total)
        return np.minimum(d, total - d)

    @property
    def is_smooth(self) -> bool:
        return not np.isfinite(self.tau)

    def hash(self) -> str:
        return stable_hash(self.params)


# --- assembly ---------------------------------------------------------------

@dataclass(eq=False)
class OperatorPair:
    """Stiffness ``S`` (the ``-Delta_h`` part) and mass ``M`` of one discretization.

    Attributes
    ----------
    stiffness, mass : scipy.sparse matrix
    method : str
        ``"trig"`` or ``"p1"``.
    metric : MetricModel
    n : int
        Grid points per axis.
    synthesis : ndarray
        Matrix mapping coefficient vectors to grid samples (trig only, 1-D).
    labels : ndarray
        Trig basis labels ``(k_axis0, type_axis0, ...)`` (flat only).
    """

    stiffness: object
    mass: object
    method: str
    metric: MetricModel
    n: int
    synthesis: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]


def trig_basis_1d(n: int, period: float, x):
    """Real orthonormal trig basis on ``[0, period)`` evaluated at ``x``.

    Order: constant, then ``cos(k w x), sin(k w x)`` for ``k = 1..n/2-1``.
    Returns values, derivatives and labels ``(k, t)`` with ``t`` = 0 (cos)
    or 1 (sin).
    """
    x = np.asarray(x, dtype=float)
    K = n // 2 - 1
    w = TWO_PI / period
    vals = np.empty((x.size, 2 * K + 1))
    ders = np.empty_like(vals)
    vals[:, 0] = 1.0 / np.sqrt(period)
    ders[:, 0] = 0.0
    labels = np.zeros((2 * K + 1, 2), dtype=int)
    amp = np.sqrt(2.0 / period)
    for k in range(1, K + 1):
        arg = k * w * x
        vals[:, 2 * k - 1] = amp * np.cos(arg)
        vals[:, 2 * k] = amp * np.sin(arg)
        ders[:, 2 * k - 1] = -amp * k * w * np.sin(arg)
        ders[:, 2 * k] = amp * k * w * np.cos(arg)
        labels[2 * k - 1] = (k, 0)
        labels[2 * k] = (k, 1)
    return vals, ders, labels


def _assemble_trig(metric: MetricModel, n: int) -> OperatorPair:
    L = metric.period
    x = L * np.arange(n) / n
    B, _, labels = trig_basis_1d(n, L, x)
    k2 = (labels[:, 0] * TWO_PI / L) ** 2
    if metric.kind == "flat":
        if metric.dim == 1:
            return OperatorPair(sp.diags(k2).tocsr(), sp.identity(k2.size, format="csr"), "trig", metric, n,
                                synthesis=B, labels=labels)
        k2d = (k2[:, None] + k2[None, :]).ravel()
        lab2 = np.concatenate([np.repeat(labels, labels.shape[0], axis=0),
                               np.tile(labels, (labels.shape[0], 1))], axis=1)
        return OperatorPair(sp.diags(k2d).tocsr(), sp.identity(k2d.size, format="csr"), "trig", metric, n,
                            synthesis=B, labels=lab2)
    # smooth variable coefficient (tabulated, 1-D): oversampled trapezoid is spectrally accurate
    q = 4 * n
    xq = L * np.arange(q) / q
    Bq, Dq, _ = trig_basis_1d(n, L, xq)
    c = metric.c(xq)
    wq = L / q
    S = Dq.T @ (Dq * (c ** (metric.dim - 2) * wq)[:, None])
    M = Bq.T @ (Bq * (c ** metric.dim * wq)[:, None])
    S = 0.5 * (S + S.T)
    M = 0.5 * (M + M.T)
    return OperatorPair(sp.csr_matrix(S), sp.csr_matrix(M), "trig", metric, n, synthesis=B, labels=labels)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)

# degree-4 symmetric triangle rule (barycentric points, weights summing to one)
_TRI_PTS = np.array([
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
])
_TRI_W = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3)


def _assemble_p1_1d(metric: MetricModel, n: int) -> OperatorPair:
    L = metric.period
    h = L / n
    left = h * np.arange(n)
    s = 0.5 * (1.0 + _GL_NODES)
    xq = left[:, None] + h * s[None, :]
    wq = 0.5 * h * _GL_WEIGHTS
    c = metric.c(xq)
    a = (c ** -1.0) @ wq
    w = c
    n0 = 1.0 - s
    n1 = s
    m00 = (w * n0 * n0) @ wq
    m01 = (w * n0 * n1) @ wq
    m11 = (w * n1 * n1) @ wq
    i = np.arange(n)
    j = (i + 1) % n
    rows = np.concatenate([i, i, j, j])
    cols = np.concatenate([i, j, i, j])
    kS = a / h ** 2
    S = sp.coo_matrix((np.concatenate([kS, -kS, -kS, kS]), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((np.concatenate([m00, m01, m01, m11]), (rows, cols)), shape=(n, n)).tocsr()
    return OperatorPair(S, M, "p1", metric, n)


def _assemble_p1_2d(metric: MetricModel, n: int) -> OperatorPair:
    L = metric.period
    h = L / n
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I = I.ravel()
    J = J.ravel()

    def node(a, b):
        return (a % n) * n + (b % n)

    tris = [
        (np.array([[0, 0], [1, 0], [1, 1]]), (node(I, J), node(I + 1, J), node(I + 1, J + 1))),
        (np.array([[0, 0], [1, 1], [0, 1]]), (node(I, J), node(I + 1, J + 1), node(I, J + 1))),
    ]
    rows, cols, sv, mv = [], [], [], []
    for verts, ids in tris:
        P = h * verts.astype(float)
        T = np.column_stack([np.ones(3), P])
        grads = np.linalg.inv(T)[1:, :].T
        area = 0.5 * h * h
        K = area * grads @ grads.T  # conformal in 2-D: weight c^0 = 1
        qpts = _TRI_PTS @ P  # (6, 2) offsets inside the reference square
        base = np.stack([h * I, h * J], axis=-1)
        xq = base[:, None, :] + qpts[None, :, :]
        w = metric.c(xq) ** 2  # (cells, 6)
        for a in range(3):
            for b in range(3):
                rows.append(ids[a])
                cols.append(ids[b])
                sv.append(np.full(I.size, K[a, b]))
                mv.append(area * (w * (_TRI_PTS[:, a] * _TRI_PTS[:, b] * _TRI_W)).sum(axis=1))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    S = sp.coo_matrix((np.concatenate(sv), (rows, cols)), shape=(n * n, n * n)).tocsr()
    M = sp.coo_matrix((np.concatenate(mv), (rows, cols)), shape=(n * n, n * n)).tocsr()
    return OperatorPair(S, M, "p1", metric, n)


def assemble(metric: MetricModel, n: int) -> OperatorPair:
    """Discretize ``-Delta_h`` in divergence form on an ``n``-point periodic grid.

    Flat and tabulated metrics use the trigonometric Galerkin basis; rough
    (Weierstrass) metrics use P1 elements.

    Raises
    ------
    ParameterError
        ``n`` is not a power of two.
    ConstructionError
        The mass matrix fails a positivity probe.
    """
    if n < 4 or n & (n - 1):
        raise ParameterError("n must be a power of two >= 4, got %d" % n)
    if metric.kind in ("flat", "tabulated"):
        pair = _assemble_trig(metric, n)
    elif metric.dim == 1:
        pair = _assemble_p1_1d(metric, n)
    else:
        pair = _assemble_p1_2d(metric, n)
    diag = pair.mass.diagonal()
    if np.any(diag <= 0):
        raise ConstructionError("mass matrix has a non-positive diagonal entry")
    return pair


# --- eigenbasis -------------------------------------------------------------

@dataclass(eq=False)
class SpectralBasis:
    """Lowest eigenpairs of ``A = -Delta_h + m^2``.

    Attributes
    ----------
    lambdas : ndarray
        Ascending positive square roots of the eigenvalues.
    modes : ndarray
        Grid samples, shape ``(N,) + grid shape``.
    weights : ndarray
        Lumped quadrature weights ``sqrt(h) dx^d`` on the grid.
    gram : sparse matrix or None
        Consistent mass matrix for P1 bases; ``None`` when the lumped
        weights are exact (trig bases).
    """

    lambdas: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    gram: Optional[object]
    metric: MetricModel
    n: int
    method: str
    coefficients: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.lambdas.size

    @property
    def grid_shape(self):
        return self.modes.shape[1:]

    @property
    def spacing(self) -> float:
        return self.metric.period / self.n

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / self.metric.period

    def coords(self):
        return self.spacing * np.arange(self.n)

    def _flat_modes(self):
        return self.modes.reshape(self.N, -1)

    def inner(self, u, v):
        """``<u, v>`` in the ``sqrt(h)``-weighted L^2 product (leading axes broadcast)."""
        gsz = int(np.prod(self.grid_shape))
        U = np.asarray(u).reshape(-1, gsz)
        V = np.asarray(v).reshape(-1, gsz)
        if self.gram is None:
            return (U * self.weights.ravel()) @ V.T
        return U @ (self.gram @ V.T)

    def project(self, u):
        """Mode coefficients of grid functions; trailing axes are the grid."""
        u = np.asarray(u)
        nd = len(self.grid_shape)
        lead = u.shape[:u.ndim - nd]
        U = u.reshape(-1, int(np.prod(self.grid_shape)))
        if self.gram is None:
            C = (U * self.weights.ravel()) @ self._flat_modes().T
        else:
            C = (self.gram @ U.T).T @ self._flat_modes().T
        return C.reshape(lead + (self.N,))

    def synthesize(self, coef):
        """Grid function from mode coefficients (last axis indexes modes)."""
        coef = np.asarray(coef)
        out = coef @ self._flat_modes()
        return out.reshape(coef.shape[:-1] + self.grid_shape)

    def orthonormality_defect(self) -> float:
        G = self.inner(self.modes, self.modes)
        return float(np.max(np.abs(G - np.eye(self.N))))

    def trusted_count(self) -> int:
        """Modes that may enter downstream experiments.

        Trig bases are exact for every retained mode; element bases are
        trusted up to a quarter of the grid Nyquist frequency.
        """
        if self.method == "trig":
            return self.N
        return int(np.searchsorted(self.lambdas, self.nyquist / 4.0, side="right"))

    def truncated(self, N: int) -> "SpectralBasis":
        if N > self.N:
            raise ParameterError("requested %d modes, basis holds %d" % (N, self.N))
        return SpectralBasis(self.lambdas[:N].copy(), self.modes[:N].copy(), self.weights, self.gram, self.metric,
                             self.n, self.method,
                             None if self.coefficients is None else self.coefficients[:N].copy(),
                             None if self.labels is None else self.labels[:N].copy())

    def sample(self, x):
        """Evaluate 1-D modes at arbitrary points ``x`` (exact for trig, linear for P1)."""
        if self.metric.dim != 1:
            raise ParameterError("off-grid sampling is implemented for 1-D bases")
        x = np.asarray(x, dtype=float)
        if self.method == "trig":
            B, _, _ = trig_basis_1d(self.n, self.metric.period, x.ravel())
            return (self.coefficients @ B.T).reshape((self.N,) + x.shape)
        t = np.mod(x, self.metric.period) / self.spacing
        i0 = np.floor(t).astype(int) % self.n
        f = t - np.floor(t)
        return self.modes[:, i0] * (1.0 - f) + self.modes[:, (i0 + 1) % self.n] * f


def _sign_fix(vecs):
    """Flip columns so the first sample above round-off is positive."""
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-10 * np.max(np.abs(col)))
        if idx.size and col[idx[0]] < 0:
            vecs[:, k] = -col
    return vecs


def _grid_weights(metric: MetricModel, n: int):
    x = metric.period * np.arange(n) / n
    pts = np.stack(np.meshgrid(*([x] * metric.dim), indexing="ij"), -1)
    return metric.sqrt_h(pts) * (metric.period / n) ** metric.dim


def eigensolve(pair: OperatorPair, N: int) -> SpectralBasis:
    """Lowest ``N`` eigenpairs of ``S + m^2 M`` relative to ``M``.

    Parameters
    ----------
    pair : OperatorPair
    N : int
        Number of modes. Element discretizations require ``N <= n^d / 4``;
        the trigonometric basis is exact for all of its ``(n-1)^d`` functions.

    Raises
    ------
    ParameterError
        Too many modes requested.
    NumericalDiagnostic
        Residual or orthonormality check failed.
    """
    metric = pair.metric
    m2 = metric.mass ** 2
    n = pair.n
    npts = n ** metric.dim
    limit = pair.size if pair.method == "trig" else npts // 4
    if not 1 <= N <= limit:
        raise ParameterError("N=%d outside [1, %d] for a %s discretization on n=%d" % (N, limit, pair.method, n))
    weights = _grid_weights(metric, n)
    if pair.method == "trig" and metric.kind == "flat":
        diag = pair.stiffness.diagonal() + m2
        order = np.argsort(diag, kind="stable")[:N]
        lam2 = diag[order]
        labels = pair.labels[order]
        B = pair.synthesis
        if metric.dim == 1:
            modes = B[:, order].T.copy()
        else:
            nb = B.shape[1]
            ia, ib = np.divmod(order, nb)
            modes = np.einsum("xk,yk->kxy", B[:, ia], B[:, ib])
        coef = np.zeros((N, pair.size))
        coef[np.arange(N), order] = 1.0
        basis = SpectralBasis(np.sqrt(lam2), modes, weights, None, metric, n, "trig", coef, labels)
    else:
        A = (pair.stiffness + m2 * pair.mass).toarray()
        M = pair.mass.toarray()
        try:
            lam2, vecs = scipy.linalg.eigh(A, M, subset_by_index=[0, N - 1])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalDiagnostic("generalized eigensolve failed: %s" % exc) from exc
        vecs = _sign_fix(vecs)
        if pair.method == "trig":
            modes = (pair.synthesis @ vecs).T.copy()
            basis = SpectralBasis(np.sqrt(lam2), modes, weights, None, metric, n, "trig", vecs.T.copy())
        else:
            modes = vecs.T.reshape((N,) + (n,) * metric.dim).copy()
            basis = SpectralBasis(np.sqrt(lam2), modes, weights, pair.mass, metric, n, "p1")
    if np.any(basis.lambdas ** 2 < m2 * (1.0 - 1e-9)):
        raise NumericalDiagnostic("eigenvalue below m^2", history=basis.lambdas[:5].tolist())
    resid = residuals(pair, basis)
    if resid.max() > RESID_TOL:
        raise NumericalDiagnostic("eigen-residual %.3e above tolerance" % resid.max(), history=resid.tolist())
    return basis


def residuals(pair: OperatorPair, basis: SpectralBasis) -> np.ndarray:
    """Relative residuals ``|A v - lambda^2 M v| / |lambda^2 M v|`` per mode."""
    m2 = pair.metric.mass ** 2
    if basis.method == "trig" and basis.metric.kind == "flat":
        V = basis.coefficients.T
    elif basis.method == "trig":
        V = basis.coefficients.T
    else:
        V = basis.modes.reshape(basis.N, -1).T
    AV = pair.stiffness @ V + m2 * (pair.mass @ V)
    MV = (pair.mass @ V) * basis.lambdas ** 2
    return np.linalg.norm(AV - MV, axis=0) / np.linalg.norm(MV, axis=0)


def solve(metric: MetricModel, n: int, N: int) -> SpectralBasis:
    """Convenience: :func:`assemble` then :func:`eigensolve`."""
    return eigensolve(assemble(metric, n), N)


@dataclass(frozen=True)
class WeylFit:
    """Least-squares fit ``log lambda_l = slope log l + intercept``.

    ``constant`` is the smallest ``C`` with ``l^(2/d) <= C lambda_l^2`` over
    all computed modes.
    """

    slope: float
    intercept: float
    r2: float
    constant: float
    prediction: float


def weyl_check(basis: SpectralBasis, d: int, fit_range) -> WeylFit:
    """Regress the eigenvalue growth exponent over 1-based mode indices ``fit_range``.

    Raises
    ------
    ParameterError
        Fewer than 20 modes in range, or the range leaves ``[N/10, N]``.
    """
    lo, hi = int(fit_range[0]), int(fit_range[1])
    if hi > basis.N or lo < basis.N / 10.0:
        raise ParameterError("fit range [%d, %d] must lie within [N/10, N] for N=%d" % (lo, hi, basis.N))
    if hi - lo + 1 < 20:
        raise ParameterError("need at least 20 modes in the fit range")
    idx = np.arange(lo, hi + 1)
    slope, icept, r2 = regression_slope(np.log(idx), np.log(basis.lambdas[idx - 1]))
    all_idx = np.arange(1, basis.N + 1)
    const = float(np.max(all_idx ** (2.0 / d) / basis.lambdas ** 2))
    return WeylFit(slope, icept, r2, const, 1.0 / d)


def selfadjoint_check(pair: OperatorPair) -> dict:
    """Symmetry defects, smallest mass eigenvalue and smallest Rayleigh quotient of ``A``."""
    S, M = pair.stiffness, pair.mass
    m2 = pair.metric.mass ** 2
    out = {
        "sym_S": float(abs(S - S.T).max()) if S.nnz else 0.0,
        "sym_M": float(abs(M - M.T).max()) if M.nnz else 0.0,
    }
    A = S + m2 * M
    if pair.size <= 2048:
        Md = M.toarray()
        out["min_eig_M"] = float(scipy.linalg.eigvalsh(Md, subset_by_index=[0, 0])[0])
        out["min_rayleigh"] = float(scipy.linalg.eigh(A.toarray(), Md, eigvals_only=True, subset_by_index=[0, 0])[0])
    else:
        out["min_eig_M"] = float(scipy.sparse.linalg.eigsh(M.tocsc(), k=1, sigma=0.0, return_eigenvectors=False)[0])
        out["min_rayleigh"] = float(scipy.sparse.linalg.eigsh(A.tocsc(), k=1, M=M.tocsc(), sigma=0.0,
                                                              return_eigenvectors=False)[0])
    return out


# --- cache ------------------------------------------------------------------

def save_basis(path, basis: SpectralBasis, config_hash: str):
    """Write the basis with its metric hash and tolerances in the header."""
    arrays = {"lambdas": basis.lambdas, "modes": basis.modes, "weights": basis.weights}
    if basis.coefficients is not None:
        arrays["coefficients"] = basis.coefficients
    if basis.labels is not None:
        arrays["labels"] = basis.labels
    if basis.gram is not None:
        G = sp.csr_matrix(basis.gram)
        arrays.update(gram_data=G.data, gram_indices=G.indices, gram_indptr=G.indptr)
    header = {"config_hash": config_hash, "metric_hash": basis.metric.hash(), "n": basis.n, "N": basis.N,
              "method": basis.method, "ortho_tol": ORTHO_TOL, "resid_tol": RESID_TOL}
    write_container(path, BASIS_MAGIC, header, arrays)


def load_basis(path, metric: MetricModel, config_hash: str) -> SpectralBasis:
    """Load a cached basis, refusing mismatched hashes and re-checking orthonormality."""
    header, arr = read_container(path, BASIS_MAGIC, {"config_hash": config_hash, "metric_hash": metric.hash()})
    gram = None
    if "gram_data" in arr:
        npts = int(np.prod(arr["modes"].shape[1:]))
        gram = sp.csr_matrix((arr["gram_data"], arr["gram_indices"], arr["gram_indptr"]), shape=(npts, npts))
    basis = SpectralBasis(arr["lambdas"], arr["modes"], arr["weights"], gram, metric, header["n"],
                          header["method"], arr.get("coefficients"), arr.get("labels"))
    defect = basis.orthonormality_defect()
    if defect > header["ortho_tol"]:
        raise NumericalDiagnostic("cached basis fails orthonormality (%.2e)" % defect)
    return basis
