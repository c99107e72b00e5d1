"""Bessel functions of the first kind, their positive zeros, Fourier-Bessel
series and real orthonormal harmonics on the circle and the 2-sphere.

Evaluation of J_beta(x) uses three regimes:

* power series when ``x**2/4 <= beta + 1`` (terms decrease monotonically),
* Hankel's asymptotic expansion when ``x >= max(30, 1.5 * beta**2)``,
* Miller's backward recurrence (normalised by a Neumann sum) otherwise.

All routines are pure; root tables are cached and returned read-only.
"""

import math
from dataclasses import dataclass
import numpy as np

from .errors import DomainError, NumericalError

__all__ = [
    "bessel_j",
    "bessel_j_prime",
    "bessel_root",
    "bessel_roots",
    "BesselRootTable",
    "root_table",
    "fourier_bessel_coeffs",
    "fourier_bessel_series",
    "parseval_partial_sums",
    "HarmonicIndex",
    "harmonic_multiplicity",
    "harmonic_eval",
    "harmonics_2d",
    "harmonics_3d",
    "coordinate_change_matrix",
    "gauss_legendre_panels",
]

MAX_ORDER = 128.0
_RESCALE = 1e200


def _check_order(beta):
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise DomainError(f"Bessel order must be >= 0, got {beta}")
    if beta > MAX_ORDER:
        raise DomainError(f"Bessel order {beta} exceeds supported maximum {MAX_ORDER}")
    return beta


def _series(beta, x):
    half = 0.5 * x
    out = np.empty_like(x)
    zero = x == 0.0
    out[zero] = 1.0 if beta == 0.0 else 0.0
    xs = half[~zero]
    if xs.size:
        lead = np.exp(beta * np.log(xs) - math.lgamma(beta + 1.0))
        q = -(xs * xs)
        term = np.ones_like(xs)
        total = np.ones_like(xs)
        for k in range(1, 300):
            term = term * q / (k * (beta + k))
            total += term
            if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
                break
        out[~zero] = lead * total
    return out


def _hankel(beta, x):
    mu = 4.0 * beta * beta
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    prev = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 80):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        mag = np.abs(term)
        # asymptotic series: stop once terms start growing
        active &= mag < prev
        contrib = np.where(active, term, 0.0)
        if k % 2 == 1:
            q += contrib * (1 if (k // 2) % 2 == 0 else -1)
        else:
            p += contrib * (1 if (k // 2) % 2 == 0 else -1)
        prev = mag
        active &= mag > 1e-17
        if not active.any():
            break
    omega = x - (0.5 * beta + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(omega) - q * np.sin(omega))


def _neumann_weights(nu0, count):
    k = np.arange(count)
    if nu0 == 0.0:
        w = np.full(count, 2.0)
        w[0] = 1.0
        return w
    logs = np.array([math.lgamma(nu0 + kk) - math.lgamma(kk + 1.0) for kk in k])
    return (nu0 + 2.0 * k) * np.exp(logs)


def _miller_block(beta, x, start, with_lower=False):
    nu0 = beta - math.floor(beta)
    target_n = int(round(beta - nu0))
    weights = _neumann_weights(nu0, start // 2 + 2)
    f_next = np.zeros_like(x)
    f_cur = np.full_like(x, 1e-30)
    target = np.zeros_like(x)
    lower = np.zeros_like(x)
    norm = np.zeros_like(x)
    for n in range(start, -1, -1):
        if n == target_n:
            target = f_cur.copy()
        elif n == target_n - 1:
            lower = f_cur.copy()
        if n % 2 == 0:
            norm += weights[n // 2] * f_cur
        if n == 0:
            break
        f_prev = (2.0 * (nu0 + n) / x) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        # one step grows values by at most 2(nu0+n)/x < start, so four steps
        # cannot overflow from below the rescale threshold
        if n % 4 == 0 and np.abs(f_cur).max() > _RESCALE:
            big = np.abs(f_cur) > _RESCALE
            s = np.where(big, 1.0 / _RESCALE, 1.0)
            f_cur *= s
            f_next *= s
            target *= s
            lower *= s
            norm *= s
    scale = 1.0 / norm if nu0 == 0.0 else np.power(0.5 * x, nu0) / norm
    if with_lower:
        return target * scale, lower * scale
    return target * scale


def _miller(beta, x, with_lower=False):
    out = np.empty_like(x)
    low = np.empty_like(x)
    starts = (np.maximum(beta, x) + 12.0 * np.cbrt(x) + 25.0).astype(int)
    # for long inputs, group points by start order so small arguments do not
    # pay for large ones; short inputs are cheaper in a single sweep
    groups = starts // 48 if x.size > 4096 else np.zeros_like(starts)
    for g in np.unique(groups):
        sel = groups == g
        res = _miller_block(beta, x[sel], int(starts[sel].max()), with_lower)
        if with_lower:
            out[sel], low[sel] = res
        else:
            out[sel] = res
    return (out, low) if with_lower else out


def _regimes(beta, x):
    ser = x * x * 0.25 <= beta + 1.0
    asym = ~ser & (x >= max(30.0, 1.5 * beta * beta))
    return ser, asym, ~ser & ~asym


def bessel_j(beta, x):
    """Bessel function of the first kind ``J_beta(x)`` for ``beta >= 0``, ``x >= 0``.

    Accepts a scalar or array ``x`` and returns the same shape.
    """
    beta = _check_order(beta)
    scalar = np.ndim(x) == 0
    xa = np.array(x, dtype=float, ndmin=1)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0):
        raise DomainError("bessel_j requires finite x >= 0")
    flat = xa.ravel()
    out = np.empty_like(flat)
    ser, asym, mid = _regimes(beta, flat)
    if ser.any():
        out[ser] = _series(beta, flat[ser])
    if asym.any():
        out[asym] = _hankel(beta, flat[asym])
    if mid.any():
        out[mid] = _miller(beta, flat[mid])
    out = out.reshape(xa.shape)
    return float(out[0]) if scalar else out


def bessel_j_prime(beta, x):
    """Derivative ``J_beta'(x)`` for ``x > 0``."""
    beta = _check_order(beta)
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa <= 0):
        raise DomainError("bessel_j_prime requires x > 0")
    if beta == 0.0:
        return -bessel_j(1.0, x)
    if beta >= 1.0:
        return 0.5 * (bessel_j(beta - 1.0, x) - bessel_j(beta + 1.0, x))
    return (beta / xa) * bessel_j(beta, x) - bessel_j(beta + 1.0, x)


def _j_and_prime(beta, x):
    """``(J_beta(x), J_beta'(x))`` for 1-d ``x > 0``, sharing one recurrence."""
    if beta < 1.0:
        return bessel_j(beta, x), bessel_j_prime(beta, x)
    f = np.empty_like(x)
    lower = np.empty_like(x)
    ser, asym, mid = _regimes(beta, x)
    rest = ser | asym
    if rest.any():
        f[rest] = bessel_j(beta, x[rest])
        lower[rest] = bessel_j(beta - 1.0, x[rest])
    if mid.any():
        f[mid], lower[mid] = _miller(beta, x[mid], with_lower=True)
    return f, lower - (beta / x) * f


# ---------------------------------------------------------------------------
# zeros
# ---------------------------------------------------------------------------


def _refine_roots(beta, lo, hi, guess, max_iter=100):
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    flo = bessel_j(beta, lo)
    fhi = bessel_j(beta, hi)
    if np.any(np.sign(flo) * np.sign(fhi) >= 0):
        raise NumericalError(f"root bracket without sign change for order {beta}")
    x = np.clip(guess, lo, hi)
    for _ in range(max_iter):
        f, fp = _j_and_prime(beta, x)
        same = np.sign(f) == np.sign(flo)
        lo = np.where(same, x, lo)
        flo = np.where(same, f, flo)
        hi = np.where(same, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / fp
        xn = x - step
        done = (np.abs(step) <= 2e-15 * np.abs(x)) | (f == 0.0)
        bad = ~done & (~np.isfinite(xn) | (xn < lo) | (xn > hi))
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(f == 0.0, x, xn)
        if done.all():
            return x
    raise NumericalError(f"Bessel root iteration did not converge for order {beta}")


def _base_roots(nu, count):
    l = np.arange(1, count + 1, dtype=float)
    guess = (l + 0.5 * nu - 0.25) * math.pi
    lo = guess - 0.25 * math.pi
    hi = guess + 0.25 * math.pi
    if nu == 0.5:
        # J_{1/2} is proportional to sin: the zeros are exact multiples of pi
        return l * math.pi
    return _refine_roots(nu, lo, hi, guess)


_LADDERS = {}


def _ladder(nu0, levels, count):
    """Root tables for orders ``nu0, nu0+1, ..., nu0+levels``, each with >= ``count`` roots.

    Level ``j`` of a ladder built on ``n`` base roots holds ``n - j`` roots;
    each level is bracketed by the one below through interlacing.
    """
    lad = _LADDERS.get(nu0)
    need_base = count + levels
    if lad is None or len(lad[0]) < need_base:
        n_base = max(16, int(2 ** math.ceil(math.log2(need_base))))
        base = np.asarray(_base_roots(nu0, n_base), dtype=float)
        base.setflags(write=False)
        lad = [base]
        _LADDERS[nu0] = lad
    while len(lad) <= levels:
        prev = lad[-1]
        order = nu0 + len(lad)
        # interlacing: s_{b-1,l} < s_{b,l} < s_{b-1,l+1}
        lo, hi = prev[:-1], prev[1:]
        r = np.asarray(_refine_roots(order, lo, hi, 0.5 * (lo + hi)), dtype=float)
        r.setflags(write=False)
        lad.append(r)
    return lad


def bessel_roots(beta, count):
    """First ``count`` positive zeros of ``J_beta`` in increasing order (read-only)."""
    beta = _check_order(beta)
    if int(count) != count or count < 1:
        raise DomainError("count must be a positive integer")
    count = int(count)
    nu0 = beta - math.floor(beta)
    levels = int(round(beta - nu0))
    return _ladder(nu0, levels, count)[levels][:count]


def bessel_root(beta, l):
    """The ``l``-th positive zero ``s_{beta,l}`` (``l >= 1``)."""
    if int(l) != l or l < 1:
        raise DomainError(f"root index must be a positive integer, got {l}")
    return float(bessel_roots(beta, int(l))[int(l) - 1])


@dataclass(frozen=True)
class BesselRootTable:
    beta: float
    roots: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.roots, dtype=float)
        if r.ndim != 1 or np.any(np.diff(r) <= 0) or np.any(r <= 0):
            raise DomainError("root table must be positive and strictly increasing")

    def __len__(self):
        return len(self.roots)

    def residuals(self):
        """``|J_beta(r)| / (1 + |J_beta'(r)|)`` for each tabulated root."""
        return np.abs(bessel_j(self.beta, self.roots)) / (
            1.0 + np.abs(bessel_j_prime(self.beta, self.roots))
        )


def root_table(beta, count):
    return BesselRootTable(_check_order(beta), bessel_roots(beta, count))


# ---------------------------------------------------------------------------
# Fourier-Bessel series on (0, 1)
# ---------------------------------------------------------------------------

_GL32 = np.polynomial.legendre.leggauss(32)


def gauss_legendre_panels(a, b, n_panels, order=32):
    """Composite Gauss-Legendre nodes/weights on ``[a, b]``."""
    if order == 32:
        xg, wg = _GL32
    else:
        xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _fb_quadrature(beta, count):
    smax = bessel_roots(beta, count)[-1]
    width = min(0.1, math.pi / (4.0 * smax))
    return gauss_legendre_panels(0.0, 1.0, int(math.ceil(1.0 / width)))


def fourier_bessel_coeffs(f, beta, count, grid=None):
    """Coefficients ``c_l`` of ``f(x) = sum_l c_l sqrt(x) J_beta(s_l x)`` on (0, 1).

    ``f`` is a callable, or an array of samples on ``grid`` (uniform on [0, 1]
    when ``grid`` is omitted) that is linearly interpolated.
    """
    beta = _check_order(beta)
    roots = bessel_roots(beta, count)
    nodes, weights = _fb_quadrature(beta, count)
    if callable(f):
        fx = np.asarray(f(nodes), dtype=float)
    else:
        samples = np.asarray(f, dtype=float)
        g = np.linspace(0.0, 1.0, samples.size) if grid is None else np.asarray(grid)
        fx = np.interp(nodes, g, samples)
    jb = bessel_j(beta, np.outer(nodes, roots))
    num = (weights * fx * np.sqrt(nodes)) @ jb
    den = (weights * nodes) @ (jb * jb)
    return num / den


def fourier_bessel_series(coeffs, beta, x):
    """Evaluate the partial sum ``sum_l c_l sqrt(x) J_beta(s_l x)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    roots = bessel_roots(beta, coeffs.size)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.sqrt(xa) * (bessel_j(beta, np.outer(xa, roots)) @ coeffs)
    return vals if np.ndim(x) else float(vals[0])


def parseval_partial_sums(coeffs, beta):
    """Cumulative ``sum_l c_l**2 * ||sqrt(x) J_beta(s_l x)||**2``."""
    coeffs = np.asarray(coeffs, dtype=float)
    roots = bessel_roots(beta, coeffs.size)
    norms = 0.5 * bessel_j(beta + 1.0, roots) ** 2
    return np.cumsum(coeffs**2 * norms)


# ---------------------------------------------------------------------------
# harmonics
# ---------------------------------------------------------------------------


def harmonic_multiplicity(d, k):
    """Dimension of the degree-``k`` spherical harmonics on S^{d-1}."""
    if d < 2 or k < 0:
        raise DomainError("need d >= 2 and k >= 0")
    if k == 0:
        return 1
        # homogeneous polynomials of degree k minus those of degree k-2
    lower = math.comb(k + d - 3, d - 1) if k >= 2 else 0
    return math.comb(k + d - 1, d - 1) - lower


@dataclass(frozen=True)
class HarmonicIndex:
    """Real harmonic ``Y_k^m`` on S^{d-1}; ``m`` runs over ``1..d_k``.

    d=2: m=1 is cos(k t), m=2 is sin(k t).
    d=3: m=1 is the zonal function, m=2j / m=2j+1 carry cos(j phi) / sin(j phi).
    """

    d: int
    k: int
    m: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise DomainError(f"harmonics implemented for d in {{2,3}}, got {self.d}")
        if self.k < 0 or not 1 <= self.m <= harmonic_multiplicity(self.d, self.k):
            raise DomainError(f"invalid harmonic index {self}")


def harmonics_2d(K, theta):
    """All circular harmonics up to degree ``K`` at angles ``theta``.

    Returns ``(values, index)`` where ``values`` has shape
    ``theta.shape + (2K+1,)`` ordered as (0,1), (1,1), (1,2), (2,1), ...
    """
    th = np.asarray(theta, dtype=float)
    cols = [np.full(th.shape, 1.0 / math.sqrt(2.0 * math.pi))]
    index = [(0, 1)]
    s = 1.0 / math.sqrt(math.pi)
    for k in range(1, K + 1):
        cols.append(np.cos(k * th) * s)
        cols.append(np.sin(k * th) * s)
        index += [(k, 1), (k, 2)]
    return np.stack(cols, axis=-1), index


def harmonics_3d(K, xyz):
    """All real spherical harmonics up to degree ``K`` at unit vectors ``xyz``.

    Returns ``(values, index)``; ``values`` has shape ``xyz.shape[:-1] + ((K+1)**2,)``.
    """
    v = np.asarray(xyz, dtype=float)
    nrm = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(nrm - 1.0) > 1e-10):
        raise DomainError("direction must be a unit vector")
    ct = np.clip(v[..., 2], -1.0, 1.0)
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    phi = np.arctan2(v[..., 1], v[..., 0])
    # normalised associated Legendre functions, no Condon-Shortley phase
    P = {}
    P[(0, 0)] = np.full(ct.shape, 1.0 / math.sqrt(4.0 * math.pi))
    for mu in range(1, K + 1):
        P[(mu, mu)] = math.sqrt((2 * mu + 1) / (2.0 * mu)) * st * P[(mu - 1, mu - 1)]
    for mu in range(0, K):
        P[(mu + 1, mu)] = math.sqrt(2 * mu + 3.0) * ct * P[(mu, mu)]
    for mu in range(0, K + 1):
        for k in range(mu + 2, K + 1):
            a = math.sqrt((4.0 * k * k - 1) / (k * k - mu * mu))
            b = math.sqrt(((k - 1) ** 2 - mu * mu) / (4.0 * (k - 1) ** 2 - 1))
            P[(k, mu)] = a * (ct * P[(k - 1, mu)] - b * P[(k - 2, mu)])
    cols, index = [], []
    r2 = math.sqrt(2.0)
    for k in range(K + 1):
        cols.append(P[(k, 0)])
        index.append((k, 1))
        for mu in range(1, k + 1):
            cols.append(r2 * P[(k, mu)] * np.cos(mu * phi))
            index.append((k, 2 * mu))
            cols.append(r2 * P[(k, mu)] * np.sin(mu * phi))
            index.append((k, 2 * mu + 1))
    return np.stack(cols, axis=-1), index


def _harmonic_column(d, k, m):
    if d == 2:
        return 0 if k == 0 else 2 * k - 1 + (m - 1)
    return k * k + (m - 1)


def harmonic_eval(idx, direction):
    """Evaluate the real orthonormal harmonic ``idx`` at ``direction``.

    For d=2 ``direction`` is an angle (or array of angles); for d=3 it is
    unit vector(s) with a trailing axis of length 3.
    """
    if idx.d == 2:
        vals, _ = harmonics_2d(idx.k, direction)
    else:
        vals, _ = harmonics_3d(idx.k, direction)
    out = vals[..., _harmonic_column(idx.d, idx.k, idx.m)]
    return float(out) if np.ndim(out) == 0 else out


def coordinate_change_matrix(d):
    """Matrix ``M`` with ``[Y_1^1..Y_1^d](x) = M @ x`` for unit vectors ``x``."""
    if d == 2:
        return np.eye(2) / math.sqrt(math.pi)
    if d == 3:
        c = math.sqrt(3.0 / (4.0 * math.pi))
        # m=1 -> x3, m=2 -> x1, m=3 -> x2
        return c * np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    raise DomainError("d must be 2 or 3")
