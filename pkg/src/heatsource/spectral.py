"""Dirichlet eigen-system of the unit disc (d=2) and ball (d=3) and the series
representations built on it: heat kernel, boundary flux kernel, Poisson and
Green kernels, and a spectral forward solver for point sources.

Modes are ``phi(x) = omega * r**(1 - d/2) * J_beta(alpha r) * Y_k^m(x/|x|)`` with
``beta = k + d/2 - 1``, ``alpha`` the l-th zero of ``J_beta`` and
``omega = sqrt(2) / |J_{beta+1}(alpha)|``. Their outward normal derivative on
the boundary is ``-sgn(J_{beta+1}(alpha)) * sqrt(2) * alpha * Y_k^m``.

Truncated series for boundary quantities integrated in time converge slowly
(the summands decay like lambda**(-1/2) only), so time integrals are evaluated
in a regularised form: the kernel is dropped on an initial interval [0, tau]
on which it is exponentially small for a source away from the sensor, and
each retained mode then carries a factor exp(-lambda tau). Both parts are
estimated and reported.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError
from .observe import FluxTrace, SensorSet
from .sources import Constant, Sampled
from .specfun import (
    HarmonicIndex,
    bessel_j,
    bessel_roots,
    harmonic_multiplicity,
    harmonics_2d,
    harmonics_3d,
)

__all__ = [
    "T_MIN",
    "EigenMode",
    "ModeSet",
    "build_modeset",
    "mode_values",
    "mode_fluxes",
    "eigenfunction_eval",
    "eigen_flux_eval",
    "heat_kernel",
    "flux_kernel",
    "convolution_weights",
    "flux_values",
    "flux_trace_spectral",
    "poisson_kernel",
    "PoissonCheck",
    "verify_poisson_identity",
    "greens_function_lambda",
    "uniqueness_probe",
    "weyl_ratios",
    "SpectralForward",
    "auto_cut",
]

#: smallest time at which truncated kernels are evaluated without regularisation
T_MIN = 1e-3

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EigenMode:
    idx: HarmonicIndex
    l: int
    alpha: float
    lam: float
    omega: float
    flux_sign: float

    @property
    def beta(self):
        return self.idx.k + self.idx.d / 2.0 - 1.0


@dataclass(frozen=True, eq=False)
class ModeSet:
    """All modes with ``k <= K_max``, ``l <= L_max`` sorted by eigenvalue.

    Array fields are aligned with the sorted order. ``lambda_cut`` bounds
    the completeness: every Dirichlet eigenvalue below it is in the set.
    """

    d: int
    K_max: int
    L_max: int
    k: np.ndarray
    m: np.ndarray
    l: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    flux_sign: np.ndarray
    lambda_cut: float
    positions: tuple = field(repr=False)

    def __len__(self):
        return self.lam.size

    @property
    def lambda_max(self):
        return float(self.lam[-1])

    @property
    def modes(self):
        return tuple(
            EigenMode(HarmonicIndex(self.d, int(k), int(m)), int(l), float(a), float(lm), float(w), float(s))
            for k, m, l, a, lm, w, s in zip(
                self.k, self.m, self.l, self.alpha, self.lam, self.omega, self.flux_sign
            )
        )

    @property
    def complete(self):
        """Mask of modes below ``lambda_cut``."""
        return self.lam < self.lambda_cut


def _ro(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=16)
def build_modeset(d, K_max, L_max):
    """Complete truncated eigen-system for ``d in {2, 3}``."""
    if d not in (2, 3):
        raise DomainError("spectral solver supports d = 2 or 3")
    if K_max < 0 or L_max < 1:
        raise DomainError("need K_max >= 0 and L_max >= 1")
    rows = []
    for k in range(K_max + 1):
        beta = k + d / 2.0 - 1.0
        alpha = bessel_roots(beta, L_max)
        jn = bessel_j(beta + 1.0, alpha)
        omega = math.sqrt(2.0) / np.abs(jn)
        sign = -np.sign(jn)
        for m in range(1, harmonic_multiplicity(d, k) + 1):
            for li in range(L_max):
                rows.append((k, m, li + 1, alpha[li], omega[li], sign[li]))
    arr = np.array(rows, dtype=float)
    lam = arr[:, 3] ** 2
    order = np.argsort(lam, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    # positions[k][m-1] are the sorted slots of modes (k, m, l=1..L)
    positions, i = [], 0
    for k in range(K_max + 1):
        per_k = []
        for m in range(harmonic_multiplicity(d, k)):
            per_k.append(_ro(inv[i : i + L_max]))
            i += L_max
        positions.append(tuple(per_k))
    lam_cut = min(
        bessel_roots(K_max + d / 2.0, 1)[0] ** 2,
        bessel_roots(d / 2.0 - 1.0, L_max + 1)[L_max] ** 2,
    )
    a = arr[order]
    return ModeSet(
        d,
        K_max,
        L_max,
        _ro(a[:, 0].astype(int)),
        _ro(a[:, 1].astype(int)),
        _ro(a[:, 2].astype(int)),
        _ro(a[:, 3]),
        _ro(lam[order]),
        _ro(a[:, 4]),
        _ro(a[:, 5]),
        float(lam_cut),
        tuple(positions),
    )


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------


def _points(d, x, boundary=False):
    """Normalise input to an (n, d) array; d=2 boundary points may be angles."""
    a = np.asarray(x, dtype=float)
    if d == 2 and boundary and (a.ndim == 0 or (a.ndim == 1 and a.size != 2)):
        t = np.atleast_1d(a)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    a = np.atleast_2d(a)
    if a.shape[-1] != d:
        raise DomainError(f"points must have {d} coordinates")
    return a.reshape(-1, d)


def _harmonics(d, K, x):
    r = np.linalg.norm(x, axis=1)
    if d == 2:
        Y, _ = harmonics_2d(K, np.arctan2(x[:, 1], x[:, 0]))
        return Y, r
    u = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], np.array([0.0, 0.0, 1.0]))
    Y, _ = harmonics_3d(K, u)
    return Y, r


def _col(d, k, m):
    if d == 2:
        return 0 if k == 0 else 2 * k - 1 + (m - 1)
    return k * k + (m - 1)


def mode_values(ms, x):
    """``phi_n(x)`` for points ``x`` (n, d); returns (n, len(ms))."""
    d = ms.d
    x = _points(d, x)
    Y, r = _harmonics(d, ms.K_max, x)
    if np.any(r > 1.0 + 1e-12):
        raise DomainError("eigenfunctions are evaluated on the closed unit ball only")
    r = np.minimum(r, 1.0)
    out = np.zeros((x.shape[0], len(ms)))
    for k in range(ms.K_max + 1):
        beta = k + d / 2.0 - 1.0
        pos = ms.positions[k][0]
        alpha = ms.alpha[pos]
        omega = ms.omega[pos]
        R = bessel_j(beta, np.outer(r, alpha))
        if d == 3:
            zero = r == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                R = R / np.sqrt(r)[:, None]
            if zero.any():
                # limit of r^{-1/2} J_{k+1/2}(alpha r) at r = 0
                lim = (0.5 * alpha) ** beta / math.gamma(beta + 1.0) if k == 0 else 0.0 * alpha
                R[zero] = lim
        R = R * omega
        for m in range(1, harmonic_multiplicity(d, k) + 1):
            out[:, ms.positions[k][m - 1]] = R * Y[:, _col(d, k, m)][:, None]
    return out


def mode_fluxes(ms, z):
    """Outward normal derivatives ``d_nu phi_n(z)`` at boundary points; (n, len(ms))."""
    d = ms.d
    z = _points(d, z, boundary=True)
    Y, r = _harmonics(d, ms.K_max, z)
    if np.any(np.abs(r - 1.0) > 1e-10):
        raise DomainError("flux points must lie on the unit sphere")
    out = np.zeros((z.shape[0], len(ms)))
    for k in range(ms.K_max + 1):
        for m in range(1, harmonic_multiplicity(d, k) + 1):
            pos = ms.positions[k][m - 1]
            amp = ms.flux_sign[pos] * math.sqrt(2.0) * ms.alpha[pos]
            out[:, pos] = Y[:, _col(d, k, m)][:, None] * amp[None, :]
    return out


def _single_modeset(mode):
    return build_modeset(mode.idx.d, mode.idx.k, mode.l)


def _locate(ms, mode):
    pos = ms.positions[mode.idx.k][mode.idx.m - 1][mode.l - 1]
    return int(pos)


def eigenfunction_eval(mode, x):
    """Value of one eigenfunction at a point (or (n, d) array of points)."""
    ms = _single_modeset(mode)
    v = mode_values(ms, x)[:, _locate(ms, mode)]
    return float(v[0]) if v.size == 1 else v


def eigen_flux_eval(mode, z):
    """Outward normal derivative of one eigenfunction at boundary point(s)."""
    ms = _single_modeset(mode)
    v = mode_fluxes(ms, z)[:, _locate(ms, mode)]
    return float(v[0]) if v.size == 1 else v


# ---------------------------------------------------------------------------
# truncation estimates
# ---------------------------------------------------------------------------


def _upper_tail(coef, power, lam_c, rate):
    """``coef * int_{lam_c}^inf lam**power exp(-rate lam) dlam``."""
    if rate <= 0:
        return math.inf
    s = power + 1.0
    return coef * rate ** (-s) * math.gamma(s) * float(special.gammaincc(s, lam_c * rate))


def _density(d):
    """Weyl mode density ``rho(lam) = c lam**a`` on the unit disc / ball."""
    return (0.25, 0.0) if d == 2 else (1.0 / (3.0 * math.pi), 0.5)


def _harmonic_bound(d):
    """``max |Y| <= c lam**a`` over harmonics of modes with eigenvalue lam."""
    return (1.0 / math.sqrt(math.pi), 0.0) if d == 2 else (math.sqrt(3.0 / (4.0 * math.pi)), 0.25)


def tail_estimate(d, lam_c, rate, kind, amp_sup=1.0):
    """Weyl-law estimate of the omitted modes of a truncated series.

    ``kind`` is ``"heat"`` (phi phi e^{-lam t}), ``"flux"`` (d_nu phi phi e^{-lam t})
    or ``"trace"`` (d_nu phi phi e^{-lam tau} / lam, times ``amp_sup``); uses
    ``|phi| <= lam**(d/4)`` and ``|d_nu phi| <= sqrt(2) lam**(1/2) max|Y|``.
    """
    c, a = _density(d)
    if kind == "heat":
        return _upper_tail(c, a + d / 2.0, lam_c, rate)
    cy, ay = _harmonic_bound(d)
    power = a + 0.5 + ay + d / 4.0
    coef = c * math.sqrt(2.0) * cy
    if kind == "flux":
        return _upper_tail(coef, power, lam_c, rate)
    if kind == "trace":
        return amp_sup * _upper_tail(coef, power - 1.0, lam_c, rate)
    raise DomainError(f"unknown tail kind {kind!r}")


def early_estimate(d, dist, tau, amp_sup=1.0):
    """Estimate of ``int_0^tau |d_nu K(z, p, s)| ds`` by the flat-boundary kernel.

    Near a flat wall the Dirichlet flux kernel is about
    ``(dist / s) (4 pi s)**(-d/2) exp(-dist**2 / (4 s))``.
    """
    if tau <= 0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(64)
    s = 0.5 * tau * (x + 1.0)
    f = (dist / s) * (4.0 * math.pi * s) ** (-d / 2.0) * np.exp(-(dist**2) / (4.0 * s))
    return amp_sup * float(0.5 * tau * (w @ f))


def auto_cut(ms, dist):
    """Early-time cut balancing the two neglected parts: ``dist / (2 sqrt(lam_cut))``."""
    return float(dist) / (2.0 * math.sqrt(ms.lambda_cut))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _check_time(t):
    ta = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(ta)) or np.any(ta <= 0):
        raise DomainError("kernel time must be positive")
    if np.any(ta < T_MIN):
        raise DomainError(f"truncated kernels are not evaluated below t = {T_MIN}")
    return ta


def _sum_terms(terms, scalar):
    vals = terms.sum(axis=-1)
    return float(vals[0]) if scalar else vals


def heat_kernel(ms, x, y, t, with_tail=False):
    """Truncated ``sum exp(-lam t) phi(x) phi(y)``; ``t`` scalar or array.

    With ``with_tail`` also returns an estimate of the omitted modes plus a
    rounding floor, valid for each ``t``.
    """
    ta = _check_time(t)
    px = mode_values(ms, x)[0]
    py = mode_values(ms, y)[0]
    coef = px * py
    terms = np.exp(-np.multiply.outer(np.atleast_1d(ta), ms.lam)) * coef
    val = _sum_terms(terms, np.ndim(t) == 0)
    if not with_tail:
        return val
    tails = np.array(
        [tail_estimate(ms.d, ms.lambda_cut, float(tt), "heat") for tt in np.atleast_1d(ta)]
    ) + 64 * _EPS * np.abs(terms).sum(axis=-1)
    return val, (float(tails[0]) if np.ndim(t) == 0 else tails)


def flux_kernel(ms, z, p, t, with_tail=False):
    """Truncated ``sum exp(-lam t) d_nu phi(z) phi(p)``."""
    ta = _check_time(t)
    fz = mode_fluxes(ms, z)[0]
    pp = mode_values(ms, p)[0]
    terms = np.exp(-np.multiply.outer(np.atleast_1d(ta), ms.lam)) * (fz * pp)
    val = _sum_terms(terms, np.ndim(t) == 0)
    if not with_tail:
        return val
    tails = np.array(
        [tail_estimate(ms.d, ms.lambda_cut, float(tt), "flux") for tt in np.atleast_1d(ta)]
    ) + 64 * _EPS * np.abs(terms).sum(axis=-1)
    return val, (float(tails[0]) if np.ndim(t) == 0 else tails)


def poisson_kernel(d, x, z):
    """Closed-form Poisson kernel of the unit disc/ball: ``(1-|x|^2) / (w |x-z|^d)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if d == 2 and z.ndim == 0:
        z = np.array([math.cos(z), math.sin(z)])
    if x.shape[-1] != d or z.shape[-1] != d:
        raise DomainError("dimension mismatch")
    if np.linalg.norm(x) >= 1.0:
        raise DomainError("Poisson kernel needs an interior point")
    if abs(np.linalg.norm(z) - 1.0) > 1e-10:
        raise DomainError("Poisson kernel needs a boundary point")
    area = 2.0 * math.pi if d == 2 else 4.0 * math.pi
    return float((1.0 - x @ x) / (area * np.linalg.norm(x - z) ** d))


@dataclass(frozen=True)
class PoissonCheck:
    """Series checks of ``int_0^inf d_nu K(z, p, t) dt = -P(p, z)``.

    The outward flux kernel is negative, so the series is compared with ``-P``.
    """

    exact: float
    series_plain: float
    series: float
    tau: float
    residual_plain: float
    residual: float
    rel_residual_plain: float
    rel_residual: float
    tail_estimate: float
    early_estimate: float


def verify_poisson_identity(ms, p, z, tau="auto"):
    """Compare the time-integrated flux kernel series with the Poisson kernel.

    ``series_plain`` is ``sum d_nu phi(z) phi(p) / lam``; ``series`` is the
    regularised version with weights ``exp(-lam tau) / lam``.
    """
    p = np.asarray(p, dtype=float)
    zp = _points(ms.d, z, boundary=True)[0]
    P = poisson_kernel(ms.d, p, zp)
    terms = mode_fluxes(ms, zp)[0] * mode_values(ms, p)[0] / ms.lam
    dist = float(np.linalg.norm(zp - p))
    t = auto_cut(ms, dist) if tau == "auto" else float(tau)
    plain = float(terms.sum())
    reg = float((terms * np.exp(-ms.lam * t)).sum())
    tail = tail_estimate(ms.d, ms.lambda_cut, t, "trace") if t > 0 else math.inf
    return PoissonCheck(
        exact=P,
        series_plain=plain,
        series=reg,
        tau=t,
        residual_plain=abs(plain + P),
        residual=abs(reg + P),
        rel_residual_plain=abs(plain + P) / P,
        rel_residual=abs(reg + P) / P,
        tail_estimate=tail + 64 * _EPS * float(np.abs(terms).sum()),
        early_estimate=early_estimate(ms.d, dist, t),
    )


def greens_function_lambda(ms, x, y, lam=0.0):
    """Truncated resolvent kernel ``sum phi(x) phi(y) / (lam + lam_n)``."""
    if lam < 0:
        raise DomainError("need lam >= 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.allclose(x, y, rtol=0, atol=1e-14):
        raise DomainError("Green's function is singular on the diagonal")
    return float((mode_values(ms, x)[0] * mode_values(ms, y)[0] / (lam + ms.lam)).sum())


def weyl_ratios(ms):
    """``lam_n / n`` over the complete part of the set (n counted from 1)."""
    lam = ms.lam[ms.complete]
    return lam / np.arange(1, lam.size + 1)


# ---------------------------------------------------------------------------
# closed-form time convolution
# ---------------------------------------------------------------------------


def _e2(lam, dt):
    """``int_0^dt u exp(-lam u) du`` without cancellation."""
    x = lam * dt
    small = x < 1e-3
    with np.errstate(over="ignore"):
        big = (1.0 - np.exp(-x) * (1.0 + x)) / np.where(small, 1.0, lam * lam)
    ser = dt * dt * (0.5 - x / 3.0 + x * x / 8.0 - x**3 / 30.0)
    return np.where(small, ser, big)


def convolution_weights(lam, amp, times, T=None, shift=0.0):
    """``W[k, n] = int_shift^{t_k} g(t_k - s) exp(-lam_n s) ds`` (0 for ``t_k <= shift``).

    Exact for piecewise-linear amplitudes: the convolution is propagated
    across the merged grid of evaluation times and amplitude breakpoints.
    """
    lam = np.asarray(lam, dtype=float)
    times = np.asarray(times, dtype=float)
    T = float(times[-1]) if T is None else float(T)
    u = times - shift
    out = np.zeros((times.size, lam.size))
    live = u > 0
    if not live.any():
        return out
    span = float(u[live].max())
    t0, t1, g0, g1 = amp.pieces(max(span, T))
    nodes = np.unique(np.concatenate([[0.0], t0, t1, u[live]]))
    nodes = nodes[nodes <= span]
    a, b = nodes[:-1], nodes[1:]
    mid = 0.5 * (a + b)
    piece = np.clip(np.searchsorted(t1, mid), 0, t1.size - 1)
    slope = (g1 - g0) / (t1 - t0)
    ga = g0[piece] + slope[piece] * (a - t0[piece])
    gb = g0[piece] + slope[piece] * (b - t0[piece])
    where = {float(v): i for i, v in enumerate(nodes)}
    rec = np.zeros((nodes.size, lam.size))
    V = np.zeros(lam.size)
    for i in range(a.size):
        dt = b[i] - a[i]
        x = lam * dt
        decay = np.exp(-x)
        e1 = -np.expm1(-x) / lam
        V = decay * V + gb[i] * e1 - ((gb[i] - ga[i]) / dt) * _e2(lam, dt)
        rec[i + 1] = V
    idx = np.array([where[float(v)] for v in u[live]])
    out[live] = rec[idx]
    if shift:
        out *= np.exp(-lam * shift)
    return out


def _amp_sup(amp, T):
    t = np.linspace(0.0, T, 4001)
    return float(np.max(np.abs(amp(t))))


def flux_values(ms, source, z, times, tau=0.0, weights=None):
    """Flux ``d_nu u(z_l, t_k)`` for a point source as an (Nt+1, L) array.

    ``tau`` is the early-time cut (0 for the plain series). ``weights`` may
    pass precomputed convolution weights.
    """
    times = np.asarray(times, dtype=float)
    if tau == 0 and np.any((times > 0) & (times < T_MIN)):
        raise DomainError(f"plain series traces are not evaluated in (0, {T_MIN})")
    phi_p = mode_values(ms, source.p)[0]
    F = mode_fluxes(ms, z)
    W = convolution_weights(ms.lam, source.amplitude, times, shift=tau) if weights is None else weights
    return W @ (F * phi_p).T


def flux_trace_spectral(ms, source, sensors, times, t_cut="auto"):
    """Spectral flux trace at boundary sensors (angles on the unit circle, d=2).

    ``t_cut="auto"`` uses the early-time cut ``min_l |z_l - p| / (2 sqrt(lam_cut))``;
    ``t_cut=0`` gives the plain truncated series. The trace's ``meta`` carries
    the cut, the two truncation estimates and any warning flags.
    """
    if ms.d != 2:
        raise DomainError("flux traces on angle sensors need d = 2; use flux_values")
    if not isinstance(sensors, SensorSet):
        sensors = SensorSet(tuple(np.atleast_1d(sensors)))
    if np.linalg.norm(source.p) >= 1.0:
        raise DomainError("source must lie inside the unit disc")
    times = np.asarray(times, dtype=float)
    z = sensors.points()
    dist = float(np.min(np.linalg.norm(z - np.asarray(source.p), axis=1)))
    tau = auto_cut(ms, dist) if t_cut == "auto" else float(t_cut)
    vals = flux_values(ms, source, z, times, tau)
    T = float(times[-1])
    sup = _amp_sup(source.amplitude, T)
    flags = []
    amp = source.amplitude
    if isinstance(amp, Sampled) and amp.max_spacing() > float(np.min(np.diff(times))) * (1 + 1e-12):
        flags.append("sampled amplitude coarser than time grid: linear interpolation used")
    meta = {
        "tau": tau,
        "K_max": ms.K_max,
        "L_max": ms.L_max,
        "tail_estimate": tail_estimate(2, ms.lambda_cut, tau, "trace", sup) if tau > 0 else math.inf,
        "early_estimate": early_estimate(2, dist, tau, sup),
        "flags": flags,
    }
    return FluxTrace(times, sensors, vals, "spectral", meta=meta)


def uniqueness_probe(ms, src1, src2, sensors, times, t_cut="auto"):
    """Sup-norm distance between the flux traces of two sources (common cut)."""
    sensors = sensors if isinstance(sensors, SensorSet) else SensorSet(tuple(sensors))
    z = sensors.points()
    if t_cut == "auto":
        dist = min(float(np.min(np.linalg.norm(z - np.asarray(s.p), axis=1))) for s in (src1, src2))
        t_cut = auto_cut(ms, dist)
    a = flux_trace_spectral(ms, src1, sensors, times, t_cut).values
    b = flux_trace_spectral(ms, src2, sensors, times, t_cut).values
    return float(np.max(np.abs(a - b)))


class SpectralForward:
    """Forward handle on the unit disc: flux traces for sources at varying locations.

    The early-time cut is fixed per handle (from ``min_dist``) so that traces
    depend smoothly on the location.
    """

    name = "spectral"

    def __init__(self, ms, sensors, times, min_dist=0.3, margin=0.05):
        if ms.d != 2:
            raise DomainError("spectral forward handle is two-dimensional")
        self.ms = ms
        self.sensors = sensors if isinstance(sensors, SensorSet) else SensorSet(tuple(sensors))
        self.times = np.asarray(times, dtype=float)
        self.margin = margin
        self.tau = auto_cut(ms, min_dist)
        self._F = mode_fluxes(ms, self.sensors.points())
        self._W = {}

    def _weights(self, amp):
        key = amp if hasattr(amp, "__hash__") else None
        try:
            return self._W[key]
        except (KeyError, TypeError):
            W = convolution_weights(self.ms.lam, amp, self.times, shift=self.tau)
            try:
                self._W[key] = W
            except TypeError:
                pass
            return W

    def feasible(self, q):
        return float(np.linalg.norm(q)) < 1.0 - self.margin

    def trace(self, q, amp):
        phi = mode_values(self.ms, np.asarray(q, dtype=float))[0]
        return self._weights(amp) @ (self._F * phi).T

    def unit_flux(self, q):
        return self.trace(q, Constant(1.0))

    def responses(self, q, amps):
        phi = mode_values(self.ms, np.asarray(q, dtype=float))[0]
        C = (self._F * phi).T
        return [self._weights(a) @ C for a in amps]
