"""Sensors, flux traces, the multiplicative noise model and trace files."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ParseError

__all__ = [
    "SensorSet",
    "FluxTrace",
    "uniform_times",
    "add_noise",
    "restrict",
    "save_trace",
    "load_trace",
    "relative_l2",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SensorSet:
    """Boundary sensors given by their parameter angles (wrapped to [0, 2 pi))."""

    angles: tuple

    def __post_init__(self):
        a = np.mod(np.asarray(self.angles, dtype=float).ravel(), TWO_PI)
        if a.size == 0 or not np.all(np.isfinite(a)):
            raise DomainError("need at least one finite sensor angle")
        diffs = np.abs(a[:, None] - a[None, :])
        diffs = np.minimum(diffs, TWO_PI - diffs)
        if np.any(diffs[np.triu_indices(a.size, 1)] < 1e-12):
            raise DomainError("sensor angles must be distinct")
        object.__setattr__(self, "angles", tuple(float(v) for v in a))

    def __len__(self):
        return len(self.angles)

    @property
    def array(self):
        return np.asarray(self.angles)

    def avoids_integer_pi(self, tol=1e-12):
        """True when no pairwise angle difference is an integer multiple of pi."""
        a = self.array
        for i in range(a.size):
            for j in range(i + 1, a.size):
                q = (a[j] - a[i]) / math.pi
                if abs(q - round(q)) < tol:
                    return False
        return True

    def points(self, a=1.0, b=1.0):
        """Boundary points ``(a cos t, b sin t)``."""
        t = self.array
        return np.stack([a * np.cos(t), b * np.sin(t)], axis=1)


def uniform_times(T, Nt):
    if Nt < 1 or T <= 0:
        raise DomainError("need Nt >= 1 and T > 0")
    return np.linspace(0.0, float(T), int(Nt) + 1)


@dataclass(frozen=True, eq=False)
class FluxTrace:
    """Flux samples: ``values[k, l]`` is the outward flux at sensor l, time ``times[k]``."""

    times: np.ndarray
    sensors: SensorSet
    values: np.ndarray
    provenance: str = "unknown"
    seed: object = None
    delta: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.shape != (t.size, len(self.sensors)):
            raise DomainError(f"trace shape {v.shape} inconsistent with {t.size} times x {len(self.sensors)} sensors")
        t = t.copy()
        v = v.copy()
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def Nt(self):
        return self.times.size - 1

    def with_values(self, values, **kw):
        return replace(self, values=np.asarray(values, dtype=float), **kw)


def add_noise(trace, delta, seed):
    """Multiplicative Gaussian noise ``y (1 + delta xi)``.

    ``xi`` is drawn row-major (time outer, sensor inner) from a generator
    seeded with ``(seed, round(delta * 1e9))``, so each noise level gets its
    own reproducible realization.
    """
    if not delta >= 0:
        raise DomainError("noise level must be >= 0")
    if delta == 0:
        return replace(trace, seed=seed, delta=0.0, provenance=trace.provenance)
    if seed is None or int(seed) != seed or seed < 0:
        raise DomainError("seed must be a non-negative integer")
    rng = np.random.default_rng([int(seed), int(round(delta * 1e9))])
    xi = rng.standard_normal(trace.values.shape)
    return trace.with_values(trace.values * (1.0 + delta * xi), seed=int(seed), delta=float(delta))


def restrict(trace, coarse):
    """Subsample ``trace`` onto a nested coarse grid (array of times or a step count)."""
    fine = trace.times
    if np.ndim(coarse) == 0:
        coarse = uniform_times(trace.T, int(coarse))
    coarse = np.asarray(coarse, dtype=float)
    idx = np.searchsorted(fine, coarse)
    idx = np.clip(idx, 0, fine.size - 1)
    near = np.where(
        (idx > 0) & (np.abs(fine[idx - 1] - coarse) < np.abs(fine[idx] - coarse)), idx - 1, idx
    )
    if np.any(np.abs(fine[near] - coarse) > 1e-12 * max(1.0, trace.T)):
        raise DomainError("coarse grid is not nested in the trace's time grid")
    return replace(trace, times=fine[near], values=trace.values[near])


def relative_l2(a, b, times, window=(0.05, 1.0)):
    """Relative L2 difference of traces ``a`` vs reference ``b`` on a time window.

    Uses trapezoid weights on the samples inside the window; works column-wise
    and returns one value per sensor.
    """
    t = np.asarray(times, dtype=float)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    ts = t[sel]
    w = np.zeros(ts.size)
    dt = np.diff(ts)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    A = np.asarray(a, dtype=float)[sel]
    B = np.asarray(b, dtype=float)[sel]
    if A.ndim == 1:
        A, B = A[:, None], B[:, None]
    num = np.sqrt(w @ (A - B) ** 2)
    den = np.sqrt(w @ B**2)
    return num / den


_HEADER = "# flux-trace-v1"


def _fmt(x):
    return format(float(x), ".17g")


def save_trace(trace, path, extra_comments=()):
    """Write a trace as CSV: one header line, optional comments, rows ``t,v1,..,vL``."""
    sensors = ";".join(_fmt(a) for a in trace.sensors.angles)
    seed = "none" if trace.seed is None else str(trace.seed)
    header = (
        f"{_HEADER} T={_fmt(trace.T)} Nt={trace.Nt} sensors={sensors} "
        f"provenance={trace.provenance} seed={seed} delta={_fmt(trace.delta)}"
    )
    lines = [header]
    lines += [f"# {c}" for c in extra_comments]
    for t, row in zip(trace.times, trace.values):
        lines.append(",".join(_fmt(x) for x in (t, *row)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line):
    if not line.startswith(_HEADER + " "):
        raise ParseError("missing flux-trace-v1 header", line=1)
    fields = {}
    for tok in line[len(_HEADER) :].split():
        if "=" not in tok:
            raise ParseError(f"malformed header token {tok!r}", line=1)
        k, v = tok.split("=", 1)
        fields[k] = v
    for key in ("T", "Nt", "sensors", "provenance", "seed", "delta"):
        if key not in fields:
            raise ParseError(f"header lacks {key}", line=1)
    try:
        T = float(fields["T"])
        Nt = int(fields["Nt"])
        angles = [float(a) for a in fields["sensors"].split(";")]
        delta = float(fields["delta"])
        seed = None if fields["seed"] == "none" else int(fields["seed"])
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}", line=1) from None
    return T, Nt, angles, fields["provenance"], seed, delta


def load_trace(path):
    """Read a trace written by ``save_trace``; errors carry the 1-based line number."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty trace file", line=1)
    T, Nt, angles, prov, seed, delta = _parse_header(lines[0])
    comments, rows = [], []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        parts = line.split(",")
        if len(parts) != len(angles) + 1:
            raise ParseError(f"expected {len(angles) + 1} columns, got {len(parts)}", line=no)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric entry", line=no) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite entry", line=no)
        rows.append(vals)
    if len(rows) != Nt + 1:
        raise ParseError(f"header declares Nt={Nt} but file has {len(rows)} rows", line=len(lines))
    arr = np.asarray(rows)
    if abs(arr[-1, 0] - T) > 1e-12 * max(1.0, T) or arr[0, 0] != 0.0:
        raise ParseError("time column does not span [0, T]", line=2)
    return FluxTrace(arr[:, 0], SensorSet(tuple(angles)), arr[:, 1:], prov, seed, delta, {"comments": comments})
