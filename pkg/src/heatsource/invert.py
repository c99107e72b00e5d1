"""Alternating minimization for a point source and its amplitude.

Each outer iteration refits the amplitude by linear least squares at the
current location, then takes one damped Gauss-Newton step in the nonlinear
parameters (location, and the switching time for two-level amplitudes) with
central finite-difference Jacobians and Armijo backtracking.

Forward handles (``FemForward`` or ``SpectralForward``) supply ``times``,
``feasible(q)``, ``trace(q, amp)`` and ``responses(q, amps)``; traces are
``(Nt+1, L)`` arrays and the misfit is half the squared Frobenius norm.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateConfigurationError, DomainError, InfeasibleLocationError, InversionError
from .observe import FluxTrace
from .sources import Amplitude, Constant, HatBasis, PiecewiseConstant

__all__ = [
    "GnConfig",
    "PwcConfig",
    "AmplitudeModel",
    "GnStep",
    "ReconstructionResult",
    "unit_flux",
    "amplitude_ls_constant",
    "amplitude_ls_pwc",
    "amplitude_ls_hat",
    "jacobian_fd",
    "t1_fd_step",
    "gn_step",
    "alternate_minimize",
    "metrics",
    "relative_l2_amplitude",
]


@dataclass(frozen=True)
class GnConfig:
    fd_step_location: float = 1e-3
    damping: float = 1e-4
    armijo_alpha0: float = 1.0
    armijo_rho: float = 0.5
    armijo_alpha_min: float = 1.0 / 16.0
    armijo_c: float = 1e-4
    max_outer: int = 20
    step_tol: float = 1e-6
    misfit_rel_tol: float = 1e-8

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise DomainError(f"GnConfig.{k} must be positive")
        if not 0 < self.armijo_rho < 1:
            raise DomainError("armijo_rho must lie in (0, 1)")
        j = math.log(self.armijo_alpha_min / self.armijo_alpha0) / math.log(self.armijo_rho)
        if abs(j - round(j)) > 1e-9 or round(j) < 0:
            raise DomainError("armijo_alpha_min must equal alpha0 * rho^j")

    @property
    def alphas(self):
        j = int(round(math.log(self.armijo_alpha_min / self.armijo_alpha0) / math.log(self.armijo_rho)))
        return [self.armijo_alpha0 * self.armijo_rho**i for i in range(j + 1)]


@dataclass(frozen=True)
class PwcConfig:
    h_min: float = 5e-3
    bracket_factor: float = 1.25
    grid_factor: float = 2.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise DomainError(f"PwcConfig.{k} must be positive")


@dataclass(frozen=True)
class AmplitudeModel:
    """What is estimated about g: ``constant``, ``known``, ``pwc`` (two levels) or ``hat``."""

    kind: str
    known: Amplitude = None
    K: int = 20
    T: float = 1.0
    ridge: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "known", "pwc", "hat"):
            raise DomainError(f"unknown amplitude model {self.kind!r}")
        if self.kind == "known" and self.known is None:
            raise DomainError("known amplitude model needs the amplitude")
        if self.kind == "hat" and self.K < 2:
            raise DomainError("hat model needs K >= 2")

    @property
    def n_nonlinear(self):
        return 3 if self.kind == "pwc" else 2


def _values(data):
    return np.asarray(data.values if isinstance(data, FluxTrace) else data, dtype=float)


def unit_flux(q, forward):
    """Flux trace for a unit constant amplitude at location ``q``."""
    q = np.asarray(q, dtype=float)
    if not forward.feasible(q):
        raise InfeasibleLocationError(f"location {q.tolist()} is infeasible")
    vals = forward.unit_flux(q)
    return FluxTrace(forward.times, forward.sensors, vals, getattr(forward, "name", "model"))


# ---------------------------------------------------------------------------
# amplitude least squares
# ---------------------------------------------------------------------------


def _lstsq(columns, y, ridge=0.0):
    A = np.column_stack([c.ravel() for c in columns])
    b = y.ravel()
    if ridge > 0:
        A = np.vstack([A, math.sqrt(ridge) * np.eye(A.shape[1])])
        b = np.concatenate([b, np.zeros(A.shape[1])])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef


def amplitude_ls_constant(q, data, forward=None, Y=None):
    """Projection coefficient ``<Y, y> / |Y|^2`` of the data on the unit trace."""
    Y = forward.unit_flux(np.asarray(q, dtype=float)) if Y is None else np.asarray(Y)
    y = _values(data)
    nrm = float(np.sum(Y * Y))
    if not nrm > 0:
        raise DegenerateConfigurationError("unit flux trace vanishes")
    return float(np.sum(Y * y)) / nrm


def _two_level_columns(q, T1, forward):
    T = float(forward.times[-1])
    if not 0 < T1 < T:
        raise DomainError(f"switching time must lie in (0, {T}), got {T1}")
    return forward.responses(q, [PiecewiseConstant.two_level(1.0, 0.0, T1), PiecewiseConstant.two_level(0.0, 1.0, T1)])


def amplitude_ls_pwc(q, T1, data, forward=None, columns=None):
    """Least-squares levels ``(c1, c2)`` for ``g = c1 on (0, T1], c2 after``."""
    cols = _two_level_columns(q, T1, forward) if columns is None else columns
    n = np.array([np.linalg.norm(c) for c in cols])
    if n.max() == 0 or n.min() < 1e-6 * n.max():
        raise DegenerateConfigurationError("one indicator amplitude produces (almost) no flux")
    A = np.column_stack([c.ravel() for c in cols])
    N = A.T @ A
    if np.linalg.cond(N) > 1e12:
        raise DegenerateConfigurationError("two-level normal matrix is rank deficient")
    c = np.linalg.solve(N, A.T @ _values(data).ravel())
    return float(c[0]), float(c[1])


def _hat_columns(q, forward, K):
    T = float(forward.times[-1])
    return forward.responses(q, [HatBasis.unit(T, K, j) for j in range(K)])


def amplitude_ls_hat(q, data, forward=None, K=20, ridge=0.0, columns=None):
    """Least-squares hat coefficients; ill-conditioning without ridge triggers a minimal ridge."""
    cols = _hat_columns(q, forward, K) if columns is None else columns
    A = np.column_stack([c.ravel() for c in cols])
    y = _values(data).ravel()
    if not np.any(y):
        return np.zeros(A.shape[1])
    if ridge == 0:
        N = A.T @ A
        if np.linalg.cond(N) > 1e12:
            ridge = 1e-10 * np.trace(N) / N.shape[0]
            warnings.warn(f"hat normal matrix ill-conditioned; using ridge {ridge:.3e}", RuntimeWarning)
    elif ridge < 0:
        raise DomainError("ridge must be >= 0")
    return _lstsq(cols, _values(data), ridge)


# ---------------------------------------------------------------------------
# finite differences and Gauss-Newton
# ---------------------------------------------------------------------------


def t1_fd_step(T1, dt, config=PwcConfig()):
    """Switching-time difference step: max(bracket * eta, grid * dt, h_min)."""
    j = math.floor(T1 / dt + 1e-9)
    eta = min(T1 - j * dt, (j + 1) * dt - T1)
    eta = max(eta, 0.0)
    return max(config.bracket_factor * eta, config.grid_factor * dt, config.h_min)


def jacobian_fd(fun, params, steps, feasible=lambda p: True, bounds=None):
    """Central-difference Jacobian of ``fun`` (flattened) at ``params``.

    ``bounds[j] = (lo, hi)`` clamps the stencil of parameter ``j``. When one
    side is infeasible a one-sided difference is used and flagged; when both
    are, ``InversionError`` is raised. Returns ``(J, flags)``.
    """
    p = np.asarray(params, dtype=float)
    f0 = None
    cols, flags = [], []
    for j, h in enumerate(steps):
        lo, hi = (-np.inf, np.inf) if bounds is None or bounds[j] is None else bounds[j]
        pp, pm = p.copy(), p.copy()
        pp[j] = min(p[j] + h, hi)
        pm[j] = max(p[j] - h, lo)
        ok_p, ok_m = feasible(pp), feasible(pm)
        if ok_p and ok_m:
            cols.append((np.ravel(fun(pp)) - np.ravel(fun(pm))) / (pp[j] - pm[j]))
            continue
        if not (ok_p or ok_m):
            raise InversionError(f"no feasible difference stencil for parameter {j}")
        if f0 is None:
            f0 = np.ravel(fun(p))
        side = pp if ok_p else pm
        cols.append((np.ravel(fun(side)) - f0) / (side[j] - p[j]))
        flags.append(f"one-sided difference for parameter {j}")
    return np.column_stack(cols), flags


@dataclass
class GnStep:
    params: np.ndarray
    delta: np.ndarray
    alpha: float
    misfit: float
    accepted: bool
    flag: str = ""


def gn_step(params, jacobian, residual, config=GnConfig(), residual_fn=None, feasible=lambda p: True):
    """Damped Gauss-Newton direction with Armijo backtracking on ``0.5 |r|^2``.

    Without ``residual_fn`` the full step is returned unchecked. If no trial
    step passes the Armijo test, the smallest step is taken only when it still
    lowers the misfit (flagged); otherwise the parameters are kept.
    """
    p = np.asarray(params, dtype=float)
    J = np.asarray(jacobian, dtype=float)
    r = np.ravel(residual)
    if J.shape[0] != r.size:
        raise DomainError("jacobian and residual sizes differ")
    f0 = 0.5 * float(r @ r)
    grad = J.T @ r
    if f0 == 0.0 or not np.any(grad):
        return GnStep(p.copy(), np.zeros_like(p), 0.0, f0, True, "zero residual")
    H = J.T @ J + config.damping * np.eye(p.size)
    try:
        delta = -np.linalg.solve(H, grad)
    except np.linalg.LinAlgError:
        raise InversionError("damped normal matrix is singular") from None
    if not np.all(np.isfinite(delta)):
        raise InversionError("damped normal matrix is singular")
    if residual_fn is None:
        return GnStep(p + delta, delta, 1.0, float("nan"), True)
    slope = float(grad @ delta)
    last = None
    for alpha in config.alphas:
        cand = p + alpha * delta
        if not feasible(cand):
            continue
        rc = np.ravel(residual_fn(cand))
        fc = 0.5 * float(rc @ rc)
        last = (cand, alpha, fc)
        if fc <= f0 + config.armijo_c * alpha * slope:
            return GnStep(cand, delta, alpha, fc, True)
    if last is not None and last[1] == config.armijo_alpha_min and last[2] < f0:
        return GnStep(last[0], delta, last[1], last[2], True, "armijo failed; took alpha_min")
    return GnStep(p.copy(), delta, 0.0, f0, False, "line search rejected all steps")


# ---------------------------------------------------------------------------
# alternating loop
# ---------------------------------------------------------------------------


@dataclass
class ReconstructionResult:
    location: np.ndarray
    amplitude: Amplitude
    params: np.ndarray
    misfit_history: list
    iterations: int
    converged: bool
    model: str
    grad_norm_history: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    errors: dict = None
    config_echo: dict = field(default_factory=dict)
    seed: object = None

    @property
    def T1(self):
        return float(self.params[2]) if self.params.size > 2 else None

    def estimate(self):
        est = {"x1": float(self.location[0]), "x2": float(self.location[1]), "amplitude": self.amplitude.to_dict()}
        if self.model == "constant":
            est["g"] = float(self.amplitude.value)
        if self.model == "pwc":
            est["T1"] = self.T1
            est["c1"], est["c2"] = (float(v) for v in self.amplitude.values)
        return est

    def to_dict(self):
        return {
            "estimate": self.estimate(),
            "errors": self.errors,
            "misfit_history": [float(v) for v in self.misfit_history],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "config_echo": self.config_echo,
            "seed": self.seed,
            "grad_norm_history": [float(v) for v in self.grad_norm_history],
            "flags": list(self.flags),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


class _Objective:
    """Model traces for the nonlinear parameters with a frozen amplitude."""

    def __init__(self, forward, model, data):
        self.forward = forward
        self.model = model
        self.y = _values(data)
        self.T = float(forward.times[-1])
        self.dt = float(forward.times[1] - forward.times[0])

    def feasible(self, p):
        if self.model.kind == "pwc" and not (0.0 < p[2] < self.T):
            return False
        return self.forward.feasible(p[:2])

    def amplitude(self, p, coeffs):
        k = self.model.kind
        if k == "constant":
            return Constant(float(coeffs))
        if k == "known":
            return self.model.known
        if k == "pwc":
            if p[2] <= 0.0:  # clamped difference stencil: only the second level remains
                return Constant(float(coeffs[1]))
            return PiecewiseConstant.two_level(coeffs[0], coeffs[1], float(p[2]))
        return HatBasis(self.T, tuple(coeffs))

    def fit(self, p):
        """Amplitude least squares at ``p``; returns (coeffs, amplitude, columns)."""
        k, q = self.model.kind, p[:2]
        if k == "constant":
            Y = self.forward.unit_flux(q)
            c = amplitude_ls_constant(q, self.y, Y=Y)
            cols = [Y]
        elif k == "known":
            c, cols = None, []
        elif k == "pwc" and not 0.0 < p[2] < self.T:
            # clamped stencil point: a single level remains
            cols = [self.forward.unit_flux(q)]
            c0 = amplitude_ls_constant(q, self.y, Y=cols[0])
            c = (c0, c0)
        elif k == "pwc":
            cols = _two_level_columns(q, float(p[2]), self.forward)
            c = amplitude_ls_pwc(q, float(p[2]), self.y, columns=cols)
        else:
            cols = _hat_columns(q, self.forward, self.model.K)
            c = amplitude_ls_hat(q, self.y, K=self.model.K, ridge=self.model.ridge, columns=cols)
        return c, self.amplitude(p, c), cols

    def trace(self, p, amp):
        return self.forward.trace(p[:2], amp)

    def residual(self, p, coeffs=None):
        """Residual with frozen ``coeffs``, or with the amplitude refit at ``p`` when None."""
        if coeffs is None:
            coeffs = self.fit(p)[0]
        return self.trace(p, self.amplitude(p, coeffs)) - self.y

    def steps(self, p, gn, pwc):
        s = [gn.fd_step_location, gn.fd_step_location]
        bounds = [None, None]
        if self.model.kind == "pwc":
            s.append(t1_fd_step(float(p[2]), self.dt, pwc))
            bounds.append((0.0, self.T))
        return s, bounds

    def jacobian(self, p, coeffs, gn, pwc):
        steps, bounds = self.steps(p, gn, pwc)
        # T1 stencils may touch the interval ends; only locations need feasibility there
        feas = lambda x: self.forward.feasible(x[:2])
        return jacobian_fd(lambda x: self.residual(x, coeffs), p, steps, feas, bounds)


def alternate_minimize(
    forward, data, model, init, gn=GnConfig(), pwc=PwcConfig(), truth=None, seed=None, projected=True
):
    """Alternate amplitude least squares with damped Gauss-Newton parameter steps.

    ``init`` is ``(x1, x2)`` or ``(x1, x2, T1)`` for the two-level model.
    With ``projected`` (default) the Gauss-Newton Jacobian and line search use
    the residual with the amplitude refit at every trial point, i.e. the
    reduced functional of the alternating scheme; otherwise the amplitude from
    the last update is frozen during the step, which zig-zags along the
    location/strength valley. Non-convergence within ``max_outer`` steps is
    reported, not raised.
    """
    if isinstance(model, str):
        model = AmplitudeModel(model)
    obj = _Objective(forward, model, data)
    p = np.asarray(init, dtype=float).copy()
    if p.size != model.n_nonlinear:
        raise DomainError(f"{model.kind} model expects {model.n_nonlinear} initial parameters")
    if not obj.feasible(p):
        raise InfeasibleLocationError(f"initial guess {p.tolist()} is infeasible")
    history, grads, flags = [], [], []
    converged = False
    coeffs, amp, _ = obj.fit(p)
    it = 0
    for it in range(1, gn.max_outer + 1):
        r = obj.residual(p, coeffs)
        f = 0.5 * float(np.sum(r * r))
        history.append(f)
        frozen = None if projected else coeffs
        J, jf = obj.jacobian(p, frozen, gn, pwc)
        flags += [f"iter {it}: {m}" for m in jf]
        grads.append(float(np.linalg.norm(J.T @ r.ravel())))
        step = gn_step(p, J, r, gn, lambda x: obj.residual(x, frozen), obj.feasible)
        if step.flag:
            flags.append(f"iter {it}: {step.flag}")
        if not step.accepted:
            # a rejected step shorter than the finite-difference step is below
            # what the Jacobian resolves: treat the iterate as stationary
            size = float(np.abs(step.delta).max())
            converged = size <= gn.fd_step_location
            flags.append(f"iter {it}: rejected step size {size:.3g}")
            break
        moved = float(np.linalg.norm(step.params - p))
        p = step.params
        coeffs, amp, _ = obj.fit(p)
        if moved < gn.step_tol:
            converged = True
            break
        rn = obj.residual(p, coeffs)
        fn = 0.5 * float(np.sum(rn * rn))
        if abs(f - fn) <= gn.misfit_rel_tol * max(f, 1e-300):
            converged = True
            break
    r = obj.residual(p, coeffs)
    history.append(0.5 * float(np.sum(r * r)))
    J, _ = obj.jacobian(p, None if projected else coeffs, gn, pwc)
    grads.append(float(np.linalg.norm(J.T @ r.ravel())))
    echo = {
        "gn": asdict(gn),
        "model": model.kind,
        "init": [float(v) for v in np.asarray(init, float)],
        "projected": bool(projected),
        "forward": getattr(forward, "name", "model"),
        "T": obj.T,
        "Nt": int(len(forward.times) - 1),
    }
    if model.kind == "pwc":
        echo["pwc"] = asdict(pwc)
    if model.kind == "hat":
        echo["K"], echo["ridge"] = model.K, model.ridge
    res = ReconstructionResult(p[:2].copy(), amp, p.copy(), history, it, converged, model.kind, grads, flags, None, echo, seed)
    if truth is not None:
        res.errors = metrics(res, truth)
    return res


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

_GL16 = np.polynomial.legendre.leggauss(16)


def relative_l2_amplitude(g, g_true, T=1.0):
    """``|g - g_true| / |g_true|`` in L2(0, T); None when the reference vanishes.

    Integrates with 16-point Gauss-Legendre panels between the union of both
    amplitudes' breakpoints (refined to width <= T/200).
    """
    pts = {0.0, float(T)}
    for a in (g, g_true):
        pts.update(b for b in a.breakpoints() if 0.0 < b < T)
    nodes = np.array(sorted(pts))
    fine = [nodes[:1]]
    for a, b in zip(nodes[:-1], nodes[1:]):
        n = max(1, int(math.ceil((b - a) / (T / 200))))
        fine.append(np.linspace(a, b, n + 1)[1:])
    nodes = np.concatenate(fine)
    a, b = nodes[:-1], nodes[1:]
    x, w = _GL16
    t = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x[None]
    wt = 0.5 * (b - a)[:, None] * w[None]
    gt = np.asarray(g_true(t), float)
    den = float(np.sum(wt * gt**2))
    if den == 0:
        return None
    num = float(np.sum(wt * (np.asarray(g(t), float) - gt) ** 2))
    return math.sqrt(num / den)


def metrics(result, truth):
    """Absolute per-parameter errors and ``e(g)`` against ``truth``.

    ``truth`` is a PointSource (or a dict with ``location`` and ``amplitude``);
    the two-level switching time is read from the true amplitude.
    """
    if hasattr(truth, "xy"):
        loc, amp = np.asarray(truth.xy, float), truth.amplitude
    else:
        loc, amp = np.asarray(truth["location"], float), truth.get("amplitude")
    est = result.location
    out = {"x1": abs(float(est[0] - loc[0])), "x2": abs(float(est[1] - loc[1]))}
    if amp is None:
        return out
    if result.model == "constant" and isinstance(amp, Constant):
        out["g"] = abs(result.amplitude.value - amp.value)
    if result.model == "pwc" and isinstance(amp, PiecewiseConstant) and len(amp.values) == 2:
        out["T1"] = abs(result.T1 - float(amp.breaks[0]))
        out["c1"] = abs(result.amplitude.values[0] - amp.values[0])
        out["c2"] = abs(result.amplitude.values[1] - amp.values[1])
    T = float(result.config_echo.get("T", 1.0))
    out["e_g"] = relative_l2_amplitude(result.amplitude, amp, T)
    return out
