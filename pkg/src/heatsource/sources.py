"""Point sources and their time amplitudes g(t).

Every amplitude exposes the same small interface:

* ``amp(t)``: pointwise values (piecewise-constant pieces are closed on the right),
* ``breakpoints()``: points where g or g' may jump,
* ``pieces(T)``: a piecewise-linear description on [0, T] as arrays
  ``(t0, t1, g0, g1)``, exact for every variant except smooth user callables
  and Hann windows, which are subdivided,
* ``cell_integrals(edges)``: exact (or Gauss-Legendre) integrals over cells.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Amplitude",
    "Constant",
    "PiecewiseConstant",
    "HatBasis",
    "Sampled",
    "HannWindow",
    "FunctionAmplitude",
    "Sine",
    "PointSource",
    "amplitude_from_dict",
]

_GL8 = np.polynomial.legendre.leggauss(8)


class Amplitude:
    """Base class; subclasses implement ``__call__`` and ``breakpoints``."""

    kind = "abstract"
    #: True when ``pieces`` reproduces g exactly
    piecewise_linear = True

    def __call__(self, t):
        raise NotImplementedError

    def breakpoints(self):
        return ()

    def support_end(self):
        """Supremum of the support of g (``inf`` if g does not vanish eventually)."""
        return math.inf

    def to_dict(self):
        raise NotImplementedError

    def scaled(self, c):
        raise NotImplementedError

    # -- piecewise-linear view -------------------------------------------------
    def _limits(self, a, b):
        return self(a), self(b)

    def pieces(self, T, max_width=None):
        """Piecewise-linear pieces covering [0, T].

        Returns ``(t0, t1, g0, g1)`` where on ``(t0[i], t1[i])`` the amplitude
        is (approximated by) the line from ``g0[i]`` to ``g1[i]``.
        """
        if T <= 0:
            raise DomainError("T must be positive")
        nodes = [0.0, float(T)] + [b for b in self.breakpoints() if 0.0 < b < T]
        nodes = np.unique(np.asarray(nodes, dtype=float))
        if not self.piecewise_linear:
            w = T / 2000.0 if max_width is None else max_width
            fine = [nodes[:1]]
            for a, b in zip(nodes[:-1], nodes[1:]):
                n = max(1, int(math.ceil((b - a) / w)))
                fine.append(np.linspace(a, b, n + 1)[1:])
            nodes = np.concatenate(fine)
        t0, t1 = nodes[:-1], nodes[1:]
        g0, g1 = self._limits(t0, t1)
        return t0, t1, np.asarray(g0, float), np.asarray(g1, float)

    # -- integrals ---------------------------------------------------------------
    def cell_integrals(self, edges):
        """Integrals of g over ``[edges[i], edges[i+1]]``."""
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise DomainError("edges must be strictly increasing")
        bps = [b for b in self.breakpoints() if edges[0] < b < edges[-1]]
        pts = np.unique(np.concatenate([edges, np.asarray(bps, dtype=float)]))
        a, b = pts[:-1], pts[1:]
        half, mid = 0.5 * (b - a), 0.5 * (a + b)
        xg, wg = _GL8
        vals = np.asarray(self(mid[:, None] + half[:, None] * xg[None, :]), dtype=float)
        piece = half * (vals @ wg)
        owner = np.searchsorted(edges, a, side="right") - 1
        return np.bincount(owner, weights=piece, minlength=edges.size - 1)[: edges.size - 1]

    def cell_averages(self, edges):
        edges = np.asarray(edges, dtype=float)
        return self.cell_integrals(edges) / np.diff(edges)

    def integral(self, a, b):
        return float(self.cell_integrals([a, b])[0])

    # -- class membership --------------------------------------------------------
    def in_compact_class(self, T):
        """Support inside [0, T1] for some T1 < T and nonzero mean."""
        end = self.support_end()
        return bool(end < T and abs(self.integral(0.0, T)) > 0.0)


@dataclass(frozen=True)
class Constant(Amplitude):
    value: float
    kind = "constant"

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value)) if np.ndim(t) else float(self.value)

    def support_end(self):
        return 0.0 if self.value == 0 else math.inf

    def to_dict(self):
        return {"kind": self.kind, "value": float(self.value)}

    def scaled(self, c):
        return Constant(c * self.value)


@dataclass(frozen=True)
class PiecewiseConstant(Amplitude):
    """``g = values[k]`` on ``(breaks[k-1], breaks[k]]`` with ``breaks[-1] = 0``.

    The last value holds for all ``t > breaks[-1]``; ``breaks`` lists the
    interior switch times in increasing order (one fewer than ``values``).
    """

    breaks: tuple
    values: tuple
    kind = "pwc"

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != len(self.breaks) + 1:
            raise DomainError("need exactly one more value than breakpoints")
        if any(b <= 0 for b in self.breaks) or any(np.diff(self.breaks) <= 0):
            raise DomainError("breakpoints must be positive and strictly increasing")

    @classmethod
    def two_level(cls, c1, c2, t1):
        return cls((t1,), (c1, c2))

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), tt, side="left")
        out = np.asarray(self.values)[idx]
        return out if np.ndim(t) else float(out)

    def _limits(self, a, b):
        v = self(0.5 * (np.asarray(a) + np.asarray(b)))
        return v, v

    def breakpoints(self):
        return self.breaks

    def support_end(self):
        if self.values[-1] != 0:
            return math.inf
        nz = [i for i, v in enumerate(self.values) if v != 0]
        return 0.0 if not nz else self.breaks[nz[-1]]

    def in_pwc_class(self):
        """Consecutive values distinct and first value nonzero."""
        v = self.values
        return v[0] != 0 and all(a != b for a, b in zip(v[:-1], v[1:]))

    def to_dict(self):
        return {"kind": self.kind, "breaks": list(self.breaks), "values": list(self.values)}

    def scaled(self, c):
        return PiecewiseConstant(self.breaks, tuple(c * v for v in self.values))


@dataclass(frozen=True)
class HatBasis(Amplitude):
    """Continuous piecewise-linear g with ``K`` uniform nodes on [0, T]."""

    T: float
    coeffs: tuple
    kind = "hat"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) < 2 or self.T <= 0:
            raise DomainError("hat basis needs K >= 2 nodes and T > 0")

    @property
    def K(self):
        return len(self.coeffs)

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.K)

    @classmethod
    def unit(cls, T, K, j):
        c = np.zeros(K)
        c[j] = 1.0
        return cls(T, tuple(c))

    @classmethod
    def interpolant(cls, amp, T, K):
        return cls(T, tuple(np.asarray(amp(np.linspace(0.0, T, K)), dtype=float)))

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        out = np.interp(tt, self.nodes, np.asarray(self.coeffs), left=0.0, right=0.0)
        out = np.where(tt == self.T, self.coeffs[-1], out)
        return out if np.ndim(t) else float(out)

    def breakpoints(self):
        return tuple(self.nodes)

    def support_end(self):
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return 0.0
        j = nz[-1]
        return math.inf if j == self.K - 1 else float(self.nodes[j + 1])

    def to_dict(self):
        return {"kind": self.kind, "T": float(self.T), "coeffs": list(self.coeffs)}

    def scaled(self, c):
        return HatBasis(self.T, tuple(c * v for v in self.coeffs))


@dataclass(frozen=True)
class Sampled(Amplitude):
    """Linear interpolation of samples; zero beyond the last sample time."""

    times: tuple
    values: tuple
    kind = "sampled"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise DomainError("times and values must be equal-length 1-d arrays (>= 2)")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or not np.all(np.isfinite(v)):
            raise DomainError("sample times must start at 0 and increase; values finite")
        object.__setattr__(self, "times", tuple(t))
        object.__setattr__(self, "values", tuple(v))

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        out = np.interp(tt, self.times, self.values, right=0.0)
        out = np.where(tt == self.times[-1], self.values[-1], out)
        return out if np.ndim(t) else float(out)

    def breakpoints(self):
        return self.times

    def _limits(self, a, b):
        # right limit at the left end: zero once the last sample time is passed
        a = np.asarray(a, dtype=float)
        g0 = np.where(a >= self.times[-1], 0.0, self(a))
        return g0, self(b)

    def max_spacing(self):
        return float(np.max(np.diff(self.times)))

    def support_end(self):
        nz = np.nonzero(self.values)[0]
        if nz.size == 0:
            return 0.0
        j = nz[-1]
        return math.inf if j == len(self.values) - 1 else self.times[j + 1]

    def to_dict(self):
        return {"kind": self.kind, "times": list(self.times), "values": list(self.values)}

    def scaled(self, c):
        return Sampled(self.times, tuple(c * v for v in self.values))


@dataclass(frozen=True)
class HannWindow(Amplitude):
    """``peak * sin(pi t / width)**2`` on [0, width], zero afterwards."""

    peak: float = 2.0
    width: float = 0.5
    kind = "hann"
    piecewise_linear = False

    def __post_init__(self):
        if self.width <= 0:
            raise DomainError("window width must be positive")

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        out = np.where((tt >= 0) & (tt <= self.width), self.peak * np.sin(np.pi * tt / self.width) ** 2, 0.0)
        return out if np.ndim(t) else float(out)

    def breakpoints(self):
        return (self.width,)

    def support_end(self):
        return 0.0 if self.peak == 0 else self.width

    def l2_norm_sq(self):
        return 3.0 * self.peak**2 * self.width / 8.0

    def to_dict(self):
        return {"kind": self.kind, "peak": float(self.peak), "width": float(self.width)}

    def scaled(self, c):
        return HannWindow(c * self.peak, self.width)


@dataclass(frozen=True)
class FunctionAmplitude(Amplitude):
    """Wrap a vectorised callable; ``breaks`` lists its kinks."""

    func: object
    breaks: tuple = ()
    label: str = "function"
    support: float = math.inf
    kind = "function"
    piecewise_linear = False

    def __call__(self, t):
        out = np.asarray(self.func(np.asarray(t, dtype=float)), dtype=float)
        return out if np.ndim(t) else float(out)

    def breakpoints(self):
        return tuple(self.breaks)

    def support_end(self):
        return self.support

    def to_dict(self):
        return {"kind": self.kind, "label": self.label}

    def scaled(self, c):
        f = self.func
        return FunctionAmplitude(lambda t: c * f(t), self.breaks, self.label, self.support)


@dataclass(frozen=True)
class Sine(Amplitude):
    """``offset + scale * sin(2 pi freq t)``."""

    offset: float = 1.0
    scale: float = 1.0
    freq: float = 1.0
    kind = "sine"
    piecewise_linear = False

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        out = self.offset + self.scale * np.sin(2 * np.pi * self.freq * tt)
        return out if np.ndim(t) else float(out)

    def to_dict(self):
        return {"kind": self.kind, "offset": float(self.offset), "scale": float(self.scale), "freq": float(self.freq)}

    def scaled(self, c):
        return Sine(c * self.offset, c * self.scale, self.freq)


def amplitude_from_dict(d):
    """Inverse of ``Amplitude.to_dict`` (function amplitudes excluded)."""
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "pwc":
        return PiecewiseConstant(tuple(d["breaks"]), tuple(d["values"]))
    if kind == "hat":
        return HatBasis(float(d["T"]), tuple(d["coeffs"]))
    if kind == "sampled":
        return Sampled(tuple(d["times"]), tuple(d["values"]))
    if kind == "hann":
        return HannWindow(float(d.get("peak", 2.0)), float(d.get("width", 0.5)))
    if kind == "sine":
        return Sine(float(d.get("offset", 1.0)), float(d.get("scale", 1.0)), float(d.get("freq", 1.0)))
    raise DomainError(f"unknown amplitude kind {kind!r}")


@dataclass(frozen=True)
class PointSource:
    """Location ``p`` (Cartesian, d = len(p)) with time amplitude."""

    p: tuple
    amplitude: Amplitude = field(default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        p = tuple(float(v) for v in np.ravel(self.p))
        if len(p) not in (2, 3) or not all(math.isfinite(v) for v in p):
            raise DomainError("source location must be a finite 2- or 3-vector")
        object.__setattr__(self, "p", p)

    @property
    def d(self):
        return len(self.p)

    @property
    def xy(self):
        return np.array(self.p)

    @classmethod
    def from_polar(cls, r, theta, amplitude=None, a=1.0, b=1.0):
        """Location ``(a r cos theta, b r sin theta)``; a=b=1 gives plain polar."""
        amp = Constant(1.0) if amplitude is None else amplitude
        return cls((a * r * math.cos(theta), b * r * math.sin(theta)), amp)

    def polar(self):
        if self.d != 2:
            raise DomainError("polar accessor is two-dimensional")
        return math.hypot(*self.p), math.atan2(self.p[1], self.p[0])

    def with_amplitude(self, amplitude):
        return PointSource(self.p, amplitude)

    def moved(self, p):
        return PointSource(p, self.amplitude)
